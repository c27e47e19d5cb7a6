//! Declarative scenario description (TOML on disk) and its resolution into
//! concrete loan terms, keys, secrets and a clock schedule.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::strategy::{Choice, Duty};
use crate::chain::Balances;
use crate::collateral::{CollateralParams, PeriodTimeline};
use crate::loan::LoanTerms;
use crate::primitives::{generate_secret, Keypair, PartyId, Secret, SecretRng, SignatureScheme, Timestamp};

pub const DAY: u64 = 86_400;
pub const DEFAULT_GENESIS: u64 = 1_700_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    #[default]
    Loan,
    Swap,
}

/// Exchange rate: `num / den` BCoin per ACoin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rate {
    pub num: u64,
    pub den: u64,
}

impl Default for Rate {
    fn default() -> Self {
        Rate { num: 1, den: 1 }
    }
}

impl Rate {
    /// `acoin` expressed in BCoin, scaled by `den`.
    pub fn scaled(&self, acoin: i128) -> i128 {
        acoin * self.num as i128
    }

    pub fn floor(&self, acoin: u64) -> u64 {
        ((acoin as u128 * self.num as u128) / self.den as u128) as u64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermsConfig {
    pub principal: u64,
    pub interest: u64,
    pub liquidation_fee: u64,
    pub seizable: u64,
    pub refundable: u64,
    pub collateral_ratio_percent: u64,
    pub rate: Rate,
}

impl Default for TermsConfig {
    fn default() -> Self {
        TermsConfig {
            principal: 10_000,
            interest: 500,
            liquidation_fee: 500,
            seizable: 6_000,
            refundable: 9_000,
            collateral_ratio_percent: 150,
            rate: Rate::default(),
        }
    }
}

impl TermsConfig {
    pub fn owed_on_liquidation(&self) -> u64 {
        self.principal + self.interest + self.liquidation_fee
    }
}

/// Offsets in seconds from `genesis`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimelineConfig {
    pub genesis: u64,
    pub withdraw_deadline: u64,
    pub loan_expiry: u64,
    pub bidding_end: u64,
    pub bid_settlement_deadline: u64,
    pub seizure_end: u64,
}

impl Default for TimelineConfig {
    fn default() -> Self {
        TimelineConfig {
            genesis: DEFAULT_GENESIS,
            withdraw_deadline: 2 * DAY,
            loan_expiry: 30 * DAY,
            bidding_end: 33 * DAY,
            bid_settlement_deadline: 35 * DAY,
            seizure_end: 40 * DAY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwapConfig {
    pub acoin_amount: u64,
    pub bcoin_amount: u64,
    /// Alice's lock time; Bob's is half of it.
    pub lock_time: u64,
}

impl Default for SwapConfig {
    fn default() -> Self {
        SwapConfig { acoin_amount: 5_000, bcoin_amount: 5_000, lock_time: 2 * DAY }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RevealOrder {
    /// Reveal one's settlement secret only once the counterparty's is public.
    #[default]
    AfterCounterparty,
    RevealFirst,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartyConfig {
    pub acoin: u64,
    pub bcoin: u64,
    /// Bid amount; parties with a bid take part in the auction.
    pub bid: Option<u64>,
    pub strategy: BTreeMap<Duty, Choice>,
    pub colludes_with: BTreeSet<PartyId>,
    /// Overrides the role default: the borrower reveals first, everyone
    /// else waits for the counterparty.
    pub reveal_order: Option<RevealOrder>,
}

impl PartyConfig {
    pub fn is_honest(&self) -> bool {
        self.strategy.values().all(|c| *c == Choice::Honest)
            && self.colludes_with.is_empty()
            && self.reveal_order.is_none()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expectations {
    pub terminal: Option<String>,
    /// Keys look like `bob.bcoin`.
    pub deltas: BTreeMap<String, i64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub kind: ScenarioKind,
    #[serde(default)]
    pub scheme: SignatureScheme,
    #[serde(default)]
    pub terms: TermsConfig,
    #[serde(default)]
    pub timeline: TimelineConfig,
    #[serde(default)]
    pub swap: SwapConfig,
    pub parties: BTreeMap<PartyId, PartyConfig>,
    /// Explicit clock ticks as offsets from genesis; derived from the
    /// timeline when absent.
    #[serde(default)]
    pub schedule: Option<Vec<u64>>,
    #[serde(default)]
    pub expect: Expectations,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario invalid: {0}")]
    Invalid(String),
    #[error("{party} read secret {label} it does not own")]
    InformationLeak { party: PartyId, label: String },
    #[error("scenario parse error: {0}")]
    Parse(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn party(&self, id: PartyId) -> PartyConfig {
        self.parties.get(&id).cloned().unwrap_or_default()
    }

    pub fn reveal_order(&self, id: PartyId) -> RevealOrder {
        self.party(id).reveal_order.unwrap_or(match id {
            PartyId::Alice => RevealOrder::RevealFirst,
            _ => RevealOrder::AfterCounterparty,
        })
    }

    pub fn honest_parties(&self) -> BTreeSet<PartyId> {
        self.parties.iter().filter(|(_, c)| c.is_honest()).map(|(p, _)| *p).collect()
    }

    pub fn bidders(&self) -> Vec<(PartyId, u64)> {
        self.parties.iter().filter_map(|(p, c)| c.bid.map(|b| (*p, b))).collect()
    }

    pub fn genesis(&self) -> Timestamp {
        Timestamp::from_secs(self.timeline.genesis)
    }

    fn at(&self, offset: u64) -> Timestamp {
        Timestamp::from_secs(self.timeline.genesis + offset)
    }

    pub fn period_timeline(&self) -> PeriodTimeline {
        let t = &self.timeline;
        PeriodTimeline {
            withdraw_deadline: self.at(t.withdraw_deadline),
            loan_expiry: self.at(t.loan_expiry),
            bidding_end: self.at(t.bidding_end),
            seizure_end: self.at(t.seizure_end),
        }
    }

    pub fn bid_settlement_deadline(&self) -> Timestamp {
        self.at(self.timeline.bid_settlement_deadline)
    }

    pub fn swap_expiries(&self) -> (Timestamp, Timestamp) {
        let t = self.swap.lock_time;
        (self.at(t), self.at(t / 2))
    }

    /// Every boundary interval split in thirds, then `end` and `end + 1`.
    pub fn clock_schedule(&self) -> Vec<Timestamp> {
        if let Some(offsets) = &self.schedule {
            return offsets.iter().map(|o| self.at(*o)).collect();
        }
        let t = &self.timeline;
        let bounds: Vec<u64> = match self.kind {
            ScenarioKind::Loan => {
                vec![0, t.withdraw_deadline, t.loan_expiry, t.bidding_end, t.bid_settlement_deadline, t.seizure_end]
            }
            ScenarioKind::Swap => vec![0, self.swap.lock_time / 2, self.swap.lock_time],
        };
        let mut out = Vec::new();
        for w in bounds.windows(2) {
            let (a, b) = (w[0], w[1]);
            out.extend([a, a + (b - a) / 3, a + 2 * (b - a) / 3]);
        }
        let end = *bounds.last().expect("non-empty");
        out.extend([end, end + 1]);
        out.dedup();
        out.into_iter().map(|o| self.at(o)).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for required in [PartyId::Alice, PartyId::Bob] {
            if !self.parties.contains_key(&required) {
                return invalid(format!("party {required} missing"));
            }
        }
        for (p, c) in &self.parties {
            for other in &c.colludes_with {
                if !self.parties.contains_key(other) {
                    return invalid(format!("{p} colludes with unknown party {other}"));
                }
            }
            if c.bid == Some(0) {
                return invalid(format!("{p} bids zero"));
            }
            if c.bid.is_some() && p.is_borrower_or_lender() {
                return invalid(format!("{p} cannot bid under its own name"));
            }
        }
        let schedule = self.clock_schedule();
        if schedule.windows(2).any(|w| w[0] >= w[1]) || schedule.first() != Some(&self.genesis()) {
            return invalid("clock schedule must start at genesis and strictly increase");
        }
        if schedule.last().is_some_and(|t| *t > Timestamp::MAX) {
            return invalid("schedule beyond timestamp cap");
        }
        match self.kind {
            ScenarioKind::Swap => {
                let s = &self.swap;
                if s.acoin_amount == 0 || s.bcoin_amount == 0 || s.lock_time < 2 {
                    return invalid("swap amounts and lock time must be positive");
                }
            }
            ScenarioKind::Loan => {
                let t = &self.terms;
                if t.rate.num == 0 || t.rate.den == 0 {
                    return invalid("exchange rate must be positive");
                }
                let collateral = (t.seizable as u128 + t.refundable as u128) * t.rate.num as u128;
                let required = t.principal as u128 * t.collateral_ratio_percent as u128 * t.rate.den as u128;
                if collateral * 100 < required {
                    return invalid(format!(
                        "collateral {} below {}% of principal {}",
                        t.seizable + t.refundable,
                        t.collateral_ratio_percent,
                        t.principal
                    ));
                }
                let tl = &self.timeline;
                if !(tl.bidding_end <= tl.bid_settlement_deadline && tl.bid_settlement_deadline < tl.seizure_end) {
                    return invalid("bid settlement deadline must fall in the seizure period");
                }
            }
        }
        Ok(())
    }
}

/// Ownership of a named secret.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretEntry {
    pub label: String,
    pub owner: PartyId,
    pub secret: Secret,
}

/// Deterministic material derived from the config and a seed.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub keys: BTreeMap<PartyId, Keypair>,
    pub secrets: Vec<SecretEntry>,
    pub terms: Option<LoanTerms>,
    pub bcoin_genesis: Balances,
}

pub fn bid_secret_label(bidder: PartyId) -> String {
    match bidder {
        PartyId::Charlie => "C".to_string(),
        other => format!("C-{other}"),
    }
}

pub const SWAP_SECRET: &str = "S";

impl Resolved {
    pub fn new(config: ScenarioConfig, seed: u64) -> Result<Self, ScenarioError> {
        config.validate()?;
        let mut rng = SecretRng::from_seed(seed);
        let keys: BTreeMap<PartyId, Keypair> =
            config.parties.keys().map(|p| (*p, Keypair::generate(config.scheme, &mut rng))).collect();
        let mut secrets = Vec::new();
        let mut draw = |label: String, owner: PartyId, rng: &mut SecretRng| {
            secrets.push(SecretEntry { label, owner, secret: generate_secret(rng) });
        };
        match config.kind {
            ScenarioKind::Loan => {
                for (label, owner) in
                    [("A1", PartyId::Alice), ("A2", PartyId::Alice), ("B1", PartyId::Bob), ("B2", PartyId::Bob)]
                {
                    draw(label.to_string(), owner, &mut rng);
                }
                for (bidder, _) in config.bidders() {
                    draw(bid_secret_label(bidder), bidder, &mut rng);
                }
            }
            ScenarioKind::Swap => draw(SWAP_SECRET.to_string(), PartyId::Alice, &mut rng),
        }
        let distinct: BTreeSet<_> = secrets.iter().map(|e| e.secret.commit()).collect();
        if distinct.len() != secrets.len() {
            return invalid("secret commitment collision");
        }
        let mut bcoin_genesis = Balances::default();
        for (p, c) in &config.parties {
            if c.bcoin > 0 {
                bcoin_genesis.credit(*p, c.bcoin);
            }
        }
        let mut resolved = Resolved { config, seed, keys, secrets, terms: None, bcoin_genesis };
        if resolved.config.kind == ScenarioKind::Loan {
            resolved.terms = Some(resolved.loan_terms()?);
        }
        Ok(resolved)
    }

    pub fn secret(&self, label: &str) -> Option<&SecretEntry> {
        self.secrets.iter().find(|e| e.label == label)
    }

    fn hash_of(&self, label: &str) -> crate::primitives::SecretHash {
        self.secret(label).expect("loan secret drawn").secret.commit()
    }

    fn loan_terms(&self) -> Result<LoanTerms, ScenarioError> {
        let t = &self.config.terms;
        let terms = LoanTerms {
            borrower: PartyId::Alice,
            lender: PartyId::Bob,
            principal: t.principal,
            interest: t.interest,
            liquidation_fee: t.liquidation_fee,
            collateral: CollateralParams {
                alice_pub: self.keys[&PartyId::Alice].public(),
                bob_pub: self.keys[&PartyId::Bob].public(),
                h_a1: self.hash_of("A1"),
                h_a2: self.hash_of("A2"),
                h_b1: self.hash_of("B1"),
                h_b2: self.hash_of("B2"),
                seizable_value: t.seizable,
                refundable_value: t.refundable,
                timeline: self.config.period_timeline(),
            },
            bid_settlement_deadline: self.config.bid_settlement_deadline(),
        };
        terms.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ScenarioConfig {
        ScenarioConfig::from_toml(
            r#"
            name = "t"
            [parties.alice]
            acoin = 15000
            [parties.bob]
            bcoin = 10000
            [parties.charlie]
            bcoin = 20000
            bid = 12000
            "#,
        )
        .unwrap()
    }

    #[test]
    fn schedule_splits_every_period_in_thirds() {
        let c = minimal();
        let s = c.clock_schedule();
        assert_eq!(s.len(), 17);
        assert_eq!(s[0], c.genesis());
        assert!(s.contains(&c.period_timeline().bidding_end));
        assert!(s.contains(&c.bid_settlement_deadline()));
        assert_eq!(*s.last().unwrap(), Timestamp::from_secs(c.period_timeline().seizure_end.secs() + 1));
    }

    #[test]
    fn ratio_is_checked_at_setup() {
        let mut c = minimal();
        c.validate().unwrap();
        c.terms.refundable = 8_999;
        assert!(matches!(c.validate(), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn unknown_fields_and_colluders_are_rejected() {
        assert!(ScenarioConfig::from_toml("name = \"x\"\nbogus = 1\n[parties.alice]\n[parties.bob]\n").is_err());
        let mut c = minimal();
        c.parties.get_mut(&PartyId::Alice).unwrap().colludes_with.insert(PartyId::Other(4));
        assert!(c.validate().is_err());
    }

    #[test]
    fn resolution_is_deterministic() {
        let a = Resolved::new(minimal(), 7).unwrap();
        let b = Resolved::new(minimal(), 7).unwrap();
        let c = Resolved::new(minimal(), 8).unwrap();
        assert_eq!(a.secrets, b.secrets);
        assert_ne!(a.secrets, c.secrets);
        assert_eq!(a.secrets.len(), 5);
    }

    #[test]
    fn toml_round_trip() {
        let mut c = minimal();
        c.parties.get_mut(&PartyId::Alice).unwrap().strategy.insert(Duty::Repay, Choice::Omit);
        let back = ScenarioConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
