use serde::{Deserialize, Serialize};

use crate::primitives::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("clock cannot move backward from {now} to {to}")]
pub struct ClockError {
    pub now: Timestamp,
    pub to: Timestamp,
}

/// The single epoch clock read by both ledgers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Clock {
    now: Timestamp,
}

impl Clock {
    pub fn starting_at(now: Timestamp) -> Self {
        Clock { now }
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn advance(&mut self, to: Timestamp) -> Result<(), ClockError> {
        if to < self.now {
            return Err(ClockError { now: self.now, to });
        }
        self.now = to;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advance_is_monotonic() {
        let mut clock = Clock::default();
        clock.advance(Timestamp::from_secs(10)).unwrap();
        assert_eq!(clock.now(), Timestamp::from_secs(10));
        clock.advance(Timestamp::from_secs(10)).unwrap();
        let err = clock.advance(Timestamp::from_secs(5)).unwrap_err();
        assert_eq!(err.now, Timestamp::from_secs(10));
        assert_eq!(clock.now(), Timestamp::from_secs(10));
    }
}
