//! JSON-lines event traces: recording format, replay validation and the
//! summary report derived from a trace.

pub mod event;
pub mod replay;
pub mod report;

pub use event::{to_jsonl, Actor, EventKind, TraceEvent};
pub use replay::{parse_trace, replay, validate, ValidateError};
pub use report::{format_amount, Report};
