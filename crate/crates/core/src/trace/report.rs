//! Run summary derived from a trace.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use super::event::{EventKind, TraceEvent};
use super::replay::{replay, ValidateError};
use crate::agents::safety::Violation;
use crate::agents::session::Session;
use crate::agents::ScenarioKind;
use crate::primitives::{ChainId, Timestamp};

pub fn format_amount(amount: i128, chain: ChainId) -> String {
    format!("{amount} {chain}")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SecretSighting {
    pub secret: String,
    pub chain: Option<ChainId>,
    pub seq: u64,
    pub time: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub terminal: Option<String>,
    /// Holder → chain → net change.
    pub deltas: BTreeMap<String, BTreeMap<ChainId, i64>>,
    pub secrets: Vec<SecretSighting>,
    pub periods: BTreeMap<String, Timestamp>,
    pub violations: Vec<String>,
}

impl Report {
    pub fn from_session(session: &Session, violations: &[Violation]) -> Report {
        let outcome = session.outcome();
        let mut deltas: BTreeMap<String, BTreeMap<ChainId, i64>> = BTreeMap::new();
        for chain in [ChainId::ACoin, ChainId::BCoin] {
            for (holder, d) in outcome.deltas(chain) {
                deltas.entry(holder.to_string()).or_default().insert(chain, d as i64);
            }
        }
        let secrets = session
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::SecretRevealed)
            .map(|e| SecretSighting {
                secret: e.detail.get("secret").and_then(Value::as_str).unwrap_or("?").to_string(),
                chain: e.chain,
                seq: e.seq,
                time: e.time,
            })
            .collect();
        let config = session.config();
        let mut periods = BTreeMap::new();
        match config.kind {
            ScenarioKind::Loan => {
                let t = config.period_timeline();
                periods.insert("withdraw_deadline".into(), t.withdraw_deadline);
                periods.insert("loan_expiry".into(), t.loan_expiry);
                periods.insert("bidding_end".into(), t.bidding_end);
                periods.insert("bid_settlement_deadline".into(), config.bid_settlement_deadline());
                periods.insert("seizure_end".into(), t.seizure_end);
            }
            ScenarioKind::Swap => {
                let (alice, bob) = config.swap_expiries();
                periods.insert("alice_lock_expiry".into(), alice);
                periods.insert("bob_lock_expiry".into(), bob);
            }
        }
        Report {
            scenario: config.name.clone(),
            seed: session.resolved.seed,
            terminal: outcome.terminal.map(|s| s.to_string()),
            deltas,
            secrets,
            periods,
            violations: violations.iter().map(|v| v.to_string()).collect(),
        }
    }

    /// Replays `events` and summarises the result. Only trace-derivable
    /// findings (per-step invariants) are included.
    pub fn from_trace(events: &[TraceEvent]) -> Result<Report, ValidateError> {
        let mut session = replay(events)?;
        session.finish();
        let violations = session.violations().to_vec();
        Ok(Report::from_session(&session, &violations))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {} (seed {})", self.scenario, self.seed);
        if let Some(t) = &self.terminal {
            let _ = writeln!(out, "terminal state: {t}");
        }
        for (holder, chains) in &self.deltas {
            let parts: Vec<String> = chains
                .iter()
                .map(|(c, d)| format!("{}{}", if *d > 0 { "+" } else { "" }, format_amount(*d as i128, *c)))
                .collect();
            let _ = writeln!(out, "  {holder}: {}", parts.join(", "));
        }
        for s in &self.secrets {
            let chain = s.chain.map_or_else(|| "off-chain".to_string(), |c| c.to_string());
            let _ = writeln!(out, "  secret {} revealed on {chain} at t={} (event {})", s.secret, s.time.secs(), s.seq);
        }
        if self.violations.is_empty() {
            let _ = writeln!(out, "no violations");
        } else {
            for v in &self.violations {
                let _ = writeln!(out, "VIOLATION {v}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amounts_carry_the_chain_suffix() {
        assert_eq!(format_amount(10_500, ChainId::BCoin), "10500 BCoin");
        assert_eq!(format_amount(-15_000, ChainId::ACoin), "-15000 ACoin");
    }
}
