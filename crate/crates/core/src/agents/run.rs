//! Running a configured scenario end to end and judging the result.

use std::collections::BTreeSet;

use super::protocol::{build, Simulation, View};
use super::safety::{check_safety, Violation, ViolationKind};
use super::scenario::{Resolved, ScenarioConfig, ScenarioError, ScenarioKind, SWAP_SECRET};
use super::session::{Outcome, Session};
use super::strategy::{Choice, Duty, FixedStrategies};
use crate::chain::{Contract, Holder};
use crate::collateral::CollateralKind;
use crate::loan::LoanState;
use crate::primitives::{ChainId, PartyId};
use crate::trace::event::TraceEvent;

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub session: Session,
    pub outcome: Outcome,
    pub violations: Vec<Violation>,
}

impl ScenarioRun {
    pub fn events(&self) -> &[TraceEvent] {
        self.session.events()
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs `config` with every party following its configured strategy table.
pub fn run_scenario(config: ScenarioConfig, seed: u64) -> Result<ScenarioRun, ScenarioError> {
    let strategies = FixedStrategies(config.parties.iter().map(|(p, c)| (*p, c.strategy.clone())).collect());
    let honest = config.honest_parties();
    let everyone: BTreeSet<PartyId> = config.parties.keys().copied().collect();
    let session = Session::new(Resolved::new(config, seed)?, true)?;
    let mut sim = Simulation::new(session, &everyone);
    let mut decider = strategies;
    sim.run(&mut decider)?;
    let session = sim.into_session();
    let outcome = session.outcome();
    let mut violations = evaluate(&session, &honest);
    violations.extend(check_expectations(session.config(), &outcome));
    Ok(ScenarioRun { session, outcome, violations })
}

/// Invariant findings plus the end-of-run safety and liveness checks for the
/// parties in `honest`.
pub fn evaluate(session: &Session, honest: &BTreeSet<PartyId>) -> Vec<Violation> {
    let mut out = session.violations().to_vec();
    if session.kind() == ScenarioKind::Loan {
        let honest_roles: Vec<PartyId> = honest.iter().copied().filter(|p| p.is_borrower_or_lender()).collect();
        out.extend(check_safety(&session.outcome(), &session.config().terms, &honest_roles));
    }
    out.extend(stranded(session, honest));
    out
}

/// Funds still locked at the end, who is entitled to them, and the steps that
/// would release them.
pub fn entitlements(session: &Session) -> Vec<(PartyId, String, Vec<Duty>)> {
    let mut out = Vec::new();
    let state = session.loan_state();
    let loan = session.loan();
    let winner = loan.and_then(|l| l.highest_bid()).map(|b| b.bidder);
    let acoin = session.world().acoin();
    if let Some(c) = session.collateral() {
        for (id, kind) in c.both() {
            if acoin.utxo(&id).is_none() {
                continue;
            }
            let what = match kind {
                CollateralKind::Seizable => "seizable collateral",
                CollateralKind::Refundable => "refundable collateral",
            };
            match (state, winner) {
                (Some(LoanState::Settled), Some(w)) => out.push((w, what.to_string(), vec![Duty::Sweep])),
                _ => out.push((
                    PartyId::Alice,
                    what.to_string(),
                    vec![Duty::LastResort, Duty::SeizureRefund, Duty::ReclaimCollateral],
                )),
            }
        }
    }
    let now = session.now();
    if let Some(loan) = loan.filter(|l| l.escrow() > 0) {
        let expiry = loan.terms().timeline().loan_expiry;
        match state {
            Some(LoanState::Funded) => out.push((PartyId::Bob, "principal".into(), vec![Duty::RefundPrincipal])),
            Some(LoanState::Repaid) if now < expiry => {
                out.push((PartyId::Bob, "repayment".into(), vec![Duty::AcceptRepayment]))
            }
            Some(LoanState::Repaid) => out.push((PartyId::Alice, "repayment".into(), vec![Duty::RefundRepayment])),
            Some(LoanState::BiddingOpen | LoanState::BiddingClosed) => {
                if let Some(w) = winner {
                    out.push((w, "bid escrow".into(), vec![Duty::CloseBidding, Duty::RefundBid]));
                }
            }
            Some(LoanState::Settled) => {
                for (party, share) in [(PartyId::Alice, loan.borrower_share()), (PartyId::Bob, loan.lender_share())] {
                    if share > 0 && loan.claimed(party).is_none() {
                        out.push((party, "liquidation proceeds".into(), vec![Duty::ClaimProceeds]));
                    }
                }
            }
            _ => {}
        }
    }
    if session.kind() == ScenarioKind::Swap {
        let s_public = session.resolved.secret(SWAP_SECRET).is_some_and(|e| session.is_public(&e.secret));
        let swap_locked = session.world().holdings(ChainId::ACoin).get(&Holder::Locked).copied().unwrap_or(0) > 0;
        if swap_locked {
            let owner = if s_public { PartyId::Bob } else { PartyId::Alice };
            out.push((owner, "ACoin swap lock".into(), vec![Duty::SwapRedeem, Duty::SwapRefund]));
        }
        for (_, c) in session.world().bcoin().contracts() {
            if let Contract::Htlc(h) = c {
                if !h.settled {
                    let owner = if now >= h.expiry { h.funder } else { h.recipient };
                    out.push((owner, "BCoin swap lock".into(), vec![Duty::SwapRedeem, Duty::SwapRefund]));
                }
            }
        }
    }
    out
}

/// Honest parties left holding a claim with no step they could take now.
pub fn stranded(session: &Session, honest: &BTreeSet<PartyId>) -> Vec<Violation> {
    let mut out = Vec::new();
    for (party, what, duties) in entitlements(session) {
        if !honest.contains(&party) {
            continue;
        }
        let view = View::new(party, session);
        let live = duties.iter().any(
            |d| matches!(build(&view, *d, Choice::Honest), Ok(Some(action)) if session.would_accept(party, &action)),
        );
        if !live {
            out.push(Violation {
                kind: ViolationKind::Stranded,
                detail: format!("{what} owed to {party} has no live branch"),
            });
        }
    }
    out
}

pub fn check_expectations(config: &ScenarioConfig, outcome: &Outcome) -> Vec<Violation> {
    let mut out = Vec::new();
    let bad = |detail: String| Violation { kind: ViolationKind::Expectation, detail };
    if let Some(want) = &config.expect.terminal {
        let got = outcome.terminal.map_or_else(|| "unfunded".to_string(), |s| s.to_string());
        if *want != got {
            out.push(bad(format!("terminal state {got}, expected {want}")));
        }
    }
    for (key, want) in &config.expect.deltas {
        let parsed = key.split_once('.').and_then(|(p, c)| {
            let party: PartyId = p.parse().ok()?;
            let chain = match c {
                "acoin" => ChainId::ACoin,
                "bcoin" => ChainId::BCoin,
                _ => return None,
            };
            Some((party, chain))
        });
        match parsed {
            Some((party, chain)) => {
                let got = outcome.party_delta(party, chain);
                if got != *want as i128 {
                    out.push(bad(format!("{key} moved {got}, expected {want}")));
                }
            }
            None => out.push(bad(format!("unknown expectation key {key}"))),
        }
    }
    out
}
