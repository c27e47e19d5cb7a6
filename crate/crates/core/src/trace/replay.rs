//! Re-executing a recorded trace and checking it reproduces line for line.

use serde_json::Value;

use super::event::{EventKind, TraceEvent};
use crate::agents::scenario::ScenarioError;
use crate::agents::session::{AgentAction, Session};
use crate::chain::{Action, Call, Transaction};
use crate::primitives::{ChainId, PartyId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidateError {
    #[error("line {line}: malformed event: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace is empty or does not start with a setup event")]
    MissingSetup,
    #[error("setup event rejected: {0}")]
    Setup(ScenarioError),
    #[error("line {line}: replay diverges\n  recorded: {recorded}\n  replayed: {replayed}")]
    Divergence { line: usize, recorded: String, replayed: String },
}

/// Parses JSON lines; blank lines are not allowed. Line numbers are 1-based.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, ValidateError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| ValidateError::Malformed { line: i + 1, message: e.to_string() })
        })
        .collect()
}

fn malformed(line: usize, message: impl Into<String>) -> ValidateError {
    ValidateError::Malformed { line, message: message.into() }
}

fn input_action(line: usize, event: &TraceEvent) -> Result<(PartyId, AgentAction), ValidateError> {
    let actor = event.actor.party().ok_or_else(|| malformed(line, "system actor on a party event"))?;
    let d = &event.detail;
    if event.kind == EventKind::SecretShared {
        let to = d
            .get("to")
            .cloned()
            .and_then(|v| serde_json::from_value::<PartyId>(v).ok())
            .ok_or_else(|| malformed(line, "secret-shared without recipient"))?;
        let label =
            d.get("secret").and_then(Value::as_str).ok_or_else(|| malformed(line, "secret-shared without label"))?;
        return Ok((actor, AgentAction::Share { to, label: label.to_string() }));
    }
    let action = match event.chain {
        Some(ChainId::ACoin) => {
            let tx: Transaction = serde_json::from_value(d.get("tx").cloned().unwrap_or(Value::Null))
                .map_err(|e| malformed(line, format!("bad tx: {e}")))?;
            Action::ACoin { tx }
        }
        Some(ChainId::BCoin) => {
            let call: Call = serde_json::from_value(d.get("call").cloned().unwrap_or(Value::Null))
                .map_err(|e| malformed(line, format!("bad call: {e}")))?;
            Action::BCoin { call }
        }
        None => return Err(malformed(line, "transaction event without chain")),
    };
    Ok((actor, AgentAction::Chain(action)))
}

/// Rebuilds the session by re-applying the trace's input events. The result
/// carries the regenerated events; it does not compare them.
pub fn replay(events: &[TraceEvent]) -> Result<Session, ValidateError> {
    let setup = events.first().filter(|e| e.kind == EventKind::Setup).ok_or(ValidateError::MissingSetup)?;
    let mut session = Session::from_setup(&setup.detail, true).map_err(ValidateError::Setup)?;
    for (i, event) in events.iter().enumerate().skip(1) {
        let line = i + 1;
        match event.kind {
            EventKind::Setup => return Err(malformed(line, "second setup event")),
            EventKind::Clock => {
                let to = event
                    .detail
                    .get("to")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| malformed(line, "clock without target"))?;
                // a clock that cannot move shows up as divergence below
                let _ = session.advance(crate::primitives::Timestamp::from_secs(to));
            }
            EventKind::TxAccepted | EventKind::TxRejected | EventKind::SecretShared => {
                let (actor, action) = input_action(line, event)?;
                session.apply(actor, &action);
            }
            _ => {}
        }
    }
    Ok(session)
}

/// Replays `text` and checks the regenerated trace matches it exactly.
pub fn validate(text: &str) -> Result<Session, ValidateError> {
    let events = parse_trace(text)?;
    let session = replay(&events)?;
    let recorded: Vec<String> = text.lines().map(str::to_string).collect();
    let replayed: Vec<String> = session.events().iter().map(TraceEvent::to_line).collect();
    let n = recorded.len().max(replayed.len());
    for i in 0..n {
        let r = recorded.get(i).map_or("<end of trace>", String::as_str);
        let p = replayed.get(i).map_or("<end of trace>", String::as_str);
        if r != p {
            return Err(ValidateError::Divergence { line: i + 1, recorded: r.to_string(), replayed: p.to_string() });
        }
    }
    Ok(session)
}
