use std::collections::BTreeSet;

use proptest::prelude::*;

use atomic_loans::agents::protocol::Simulation;
use atomic_loans::agents::run::evaluate;
use atomic_loans::agents::scenario::{Resolved, TermsConfig};
use atomic_loans::agents::strategy::Decider;
use atomic_loans::agents::{enumeration_config, Choice, Duty, ScenarioConfig, Session};
use atomic_loans::primitives::{ChainId, PartyId};
use atomic_loans::trace::{to_jsonl, validate};

/// Picks from each duty's options by cycling through a fixed byte tape.
struct Tape {
    bytes: Vec<u8>,
    next: usize,
}

impl Decider for Tape {
    fn decide(&mut self, _party: PartyId, duty: Duty) -> Choice {
        let options = duty.options();
        let b = self.bytes.get(self.next).copied().unwrap_or(0);
        self.next += 1;
        options[b as usize % options.len()]
    }
}

fn simulate(config: &ScenarioConfig, seed: u64, adversaries: &BTreeSet<PartyId>, tape: &[u8]) -> Session {
    let session = Session::new(Resolved::new(config.clone(), seed).unwrap(), true).unwrap();
    let mut sim = Simulation::new(session, adversaries);
    sim.run(&mut Tape { bytes: tape.to_vec(), next: 0 }).unwrap();
    sim.into_session()
}

fn terms() -> impl Strategy<Value = TermsConfig> {
    (1_000u64..20_000, 0u64..2_000, 0u64..2_000, 50u64..120, 10u64..90).prop_map(
        |(principal, interest, fee, cover, split)| {
            // total collateral is `cover`% above the principal, split between the two outputs
            let total = principal * (100 + cover) / 100;
            let seizable = (total * split / 100).max(1);
            TermsConfig {
                principal,
                interest,
                liquidation_fee: fee,
                seizable,
                refundable: total - seizable,
                ..TermsConfig::default()
            }
        },
    )
}

fn honest_set() -> impl Strategy<Value = BTreeSet<PartyId>> {
    prop_oneof![
        Just(BTreeSet::new()),
        Just([PartyId::Alice].into()),
        Just([PartyId::Bob].into()),
        Just([PartyId::Charlie].into()),
    ]
}

fn setup(honest: &BTreeSet<PartyId>, terms: TermsConfig) -> Option<(ScenarioConfig, BTreeSet<PartyId>)> {
    let mut config = enumeration_config(honest, terms);
    // enough funds for any principal and a bid above the debt
    config.parties.get_mut(&PartyId::Alice).unwrap().acoin = 40_000;
    config.parties.get_mut(&PartyId::Bob).unwrap().bcoin = 30_000;
    let charlie = config.parties.get_mut(&PartyId::Charlie).unwrap();
    charlie.bcoin = 60_000;
    charlie.bid = Some(config.terms.owed_on_liquidation() + 1_000);
    config.validate().ok()?;
    let adversaries = config.parties.keys().copied().filter(|p| !honest.contains(p)).collect();
    Some((config, adversaries))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn ledger_invariants_hold_under_any_behaviour(
        honest in honest_set(),
        terms in terms(),
        seed in any::<u64>(),
        tape in proptest::collection::vec(any::<u8>(), 0..40),
    ) {
        let setup = setup(&honest, terms);
        prop_assume!(setup.is_some());
        let (config, adversaries) = setup.unwrap();
        let session = simulate(&config, seed, &adversaries, &tape);
        prop_assert!(session.violations().is_empty(), "{:?}", session.violations());
        let outcome = session.outcome();
        for chain in [ChainId::ACoin, ChainId::BCoin] {
            let start: u128 = config
                .parties
                .values()
                .map(|p| (if chain == ChainId::ACoin { p.acoin } else { p.bcoin }) as u128)
                .sum();
            let end: u128 = outcome.fin[&chain].values().map(|v| *v as u128).sum();
            prop_assert_eq!(start, end);
        }
    }

    #[test]
    fn honest_parties_stay_within_their_bounds(
        honest in honest_set(),
        terms in terms(),
        tape in proptest::collection::vec(any::<u8>(), 0..40),
    ) {
        let setup = setup(&honest, terms);
        prop_assume!(setup.is_some());
        let (config, adversaries) = setup.unwrap();
        let session = simulate(&config, 5, &adversaries, &tape);
        let found = evaluate(&session, &honest);
        prop_assert!(found.is_empty(), "{:?}", found);
    }

    #[test]
    fn runs_are_deterministic_and_replayable(
        terms in terms(),
        seed in any::<u64>(),
        tape in proptest::collection::vec(any::<u8>(), 0..40),
    ) {
        let honest = BTreeSet::new();
        let setup = setup(&honest, terms);
        prop_assume!(setup.is_some());
        let (config, adversaries) = setup.unwrap();
        let a = to_jsonl(simulate(&config, seed, &adversaries, &tape).events());
        let b = to_jsonl(simulate(&config, seed, &adversaries, &tape).events());
        prop_assert_eq!(&a, &b);
        let replayed = validate(&a).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(to_jsonl(replayed.events()), a);
    }
}
