//! Per-run invariant findings and the end-of-run safety predicates for honest
//! borrowers and lenders.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::scenario::TermsConfig;
use super::session::Outcome;
use crate::primitives::{ChainId, PartyId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Conservation,
    RepaidThenBidding,
    BidEscrow,
    Proceeds,
    Revalidation,
    LenderSafety,
    BorrowerSafety,
    Stranded,
    Expectation,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = serde_json::to_value(self.kind).expect("kind serializes");
        write!(f, "{}: {}", kind.as_str().unwrap_or("?"), self.detail)
    }
}

/// A party's net change valued in BCoin, scaled by the rate denominator.
pub fn scaled_value_delta(outcome: &Outcome, party: PartyId, terms: &TermsConfig) -> i128 {
    outcome.party_delta(party, ChainId::BCoin) * terms.rate.den as i128
        + terms.rate.scaled(outcome.party_delta(party, ChainId::ACoin))
}

/// Smallest acceptable scaled value delta for an honest lender.
pub fn lender_floor(terms: &TermsConfig, borrower_withdrew: bool) -> i128 {
    if !borrower_withdrew {
        return 0;
    }
    let den = terms.rate.den as i128;
    let principal = terms.principal as i128 * den;
    let seizable = terms.rate.scaled(terms.seizable as i128);
    let owed = terms.owed_on_liquidation() as i128 * den;
    let bound = if seizable >= owed { principal } else { principal.min(seizable) };
    bound - principal
}

/// Smallest acceptable scaled value delta for an honest borrower.
pub fn borrower_floor(terms: &TermsConfig, withdrew: bool) -> i128 {
    if !withdrew {
        return 0;
    }
    let den = terms.rate.den as i128;
    -((terms.interest + terms.liquidation_fee) as i128 * den) - terms.rate.scaled(terms.seizable as i128)
}

/// Checks the honest members of `honest` among Alice and Bob.
pub fn check_safety(outcome: &Outcome, terms: &TermsConfig, honest: &[PartyId]) -> Vec<Violation> {
    let withdrew = outcome.revealed.get(&ChainId::BCoin).is_some_and(|s| s.contains("A1"));
    let mut out = Vec::new();
    let den = terms.rate.den as i128;
    for party in honest {
        let (floor, kind) = match party {
            PartyId::Alice => (borrower_floor(terms, withdrew), ViolationKind::BorrowerSafety),
            PartyId::Bob => (lender_floor(terms, withdrew), ViolationKind::LenderSafety),
            _ => continue,
        };
        let value = scaled_value_delta(outcome, *party, terms);
        if value < floor {
            out.push(Violation {
                kind,
                detail: format!("{party} ends at {} BCoin-equivalent, floor {}", value / den, floor / den),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::scenario::Rate;

    #[test]
    fn lender_floor_tracks_seizable_cover() {
        let mut t = TermsConfig::default();
        assert_eq!(lender_floor(&t, false), 0);
        // 6000 seizable < 11000 owed: the lender is only promised 6000 of 10000
        assert_eq!(lender_floor(&t, true), -4000);
        t.seizable = 12_000;
        assert_eq!(lender_floor(&t, true), 0);
        t.seizable = 6_000;
        t.rate = Rate { num: 2, den: 1 };
        assert_eq!(lender_floor(&t, true), 0);
    }

    #[test]
    fn borrower_floor_is_fees_plus_seizable() {
        let t = TermsConfig::default();
        assert_eq!(borrower_floor(&t, false), 0);
        assert_eq!(borrower_floor(&t, true), -(500 + 500 + 6000));
        let t = TermsConfig { rate: Rate { num: 3, den: 2 }, ..TermsConfig::default() };
        assert_eq!(borrower_floor(&t, true), -(1000 * 2 + 6000 * 3));
    }
}
