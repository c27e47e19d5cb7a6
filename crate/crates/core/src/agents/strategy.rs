//! Decision points and the choices a party can make at each.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::primitives::PartyId;

/// A protocol step a party may be called on to take.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Duty {
    Fund,
    LockCollateral,
    ShareB1,
    Withdraw,
    RefundPrincipal,
    Repay,
    AcceptRepayment,
    RefundRepayment,
    ReclaimCollateral,
    StartBidding,
    PlaceBid,
    CloseBidding,
    SignLiquidation,
    RevealC,
    RevealSettlement,
    Sweep,
    CounterReveal,
    ClaimProceeds,
    RefundBid,
    Seize,
    SeizureRefund,
    LastResort,
    SwapLock,
    SwapRedeem,
    SwapRefund,
}

impl fmt::Display for Duty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("duty serializes");
        f.write_str(v.as_str().expect("unit variant"))
    }
}

/// How a party behaves at one decision point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Choice {
    /// Follow the protocol.
    #[default]
    Honest,
    /// Never take the step.
    Omit,
    /// Act as soon as the material is in hand, ignoring protocol timing.
    Premature,
    /// Act one clock tick after the protocol says to.
    Late,
    /// Bid the minimum that beats the book instead of the configured amount.
    Underbid,
}

impl Duty {
    /// Deviations that mean something for this step.
    pub fn options(self) -> &'static [Choice] {
        use Choice::*;
        use Duty::*;
        match self {
            LockCollateral | ShareB1 | RevealSettlement | Seize | SeizureRefund => &[Honest, Omit, Premature, Late],
            PlaceBid => &[Honest, Omit, Late, Underbid],
            RefundRepayment | StartBidding | CloseBidding | RefundBid => &[Honest, Omit],
            _ => &[Honest, Omit, Late],
        }
    }
}

impl Duty {
    /// Steps where even a protocol-following party has a legitimate choice:
    /// a borrower may default instead of repaying.
    pub fn is_discretionary(self) -> bool {
        self == Duty::Repay
    }

    /// Options open to a protocol-following party at a discretionary step.
    pub fn honest_options(self) -> &'static [Choice] {
        if self.is_discretionary() {
            &[Choice::Honest, Choice::Omit]
        } else {
            &[Choice::Honest]
        }
    }
}

/// Source of choices for parties that are not fixed to honest behaviour.
pub trait Decider {
    fn decide(&mut self, party: PartyId, duty: Duty) -> Choice;
}

/// Choices looked up from a per-party table; missing entries are honest.
#[derive(Clone, Debug, Default)]
pub struct FixedStrategies(pub BTreeMap<PartyId, BTreeMap<Duty, Choice>>);

impl Decider for FixedStrategies {
    fn decide(&mut self, party: PartyId, duty: Duty) -> Choice {
        self.0.get(&party).and_then(|m| m.get(&duty)).copied().unwrap_or_default()
    }
}

/// One decision taken during a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Decision {
    pub party: PartyId,
    pub duty: Duty,
    pub choice: Choice,
}

/// Replays a prefix of choices, then answers honestly, recording every
/// decision it is asked for.
#[derive(Clone, Debug, Default)]
pub struct PrefixDecider {
    pub prefix: Vec<Choice>,
    pub taken: Vec<Decision>,
}

impl PrefixDecider {
    pub fn new(prefix: Vec<Choice>) -> Self {
        PrefixDecider { prefix, taken: Vec::new() }
    }
}

impl Decider for PrefixDecider {
    fn decide(&mut self, party: PartyId, duty: Duty) -> Choice {
        let choice = self.prefix.get(self.taken.len()).copied().unwrap_or_default();
        self.taken.push(Decision { party, duty, choice });
        choice
    }
}
