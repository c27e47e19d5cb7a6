use std::collections::BTreeSet;

use atomic_loans::agents::protocol::{build, Simulation, View};
use atomic_loans::agents::scenario::Resolved;
use atomic_loans::agents::strategy::PrefixDecider;
use atomic_loans::agents::{builtin, run_scenario, Choice, Duty, ScenarioConfig, ScenarioError, ScenarioRun, Session};
use atomic_loans::primitives::{ChainId, PartyId};
use atomic_loans::trace::EventKind;

const PRINCIPAL: i128 = 10_000;
const OWED: i128 = 10_000 + 500 + 500;
const SEIZABLE: i128 = 6_000;
const REFUNDABLE: i128 = 9_000;

fn with_bid(bid: u64) -> ScenarioConfig {
    let mut c = builtin::get("default_bidding").unwrap();
    c.expect = Default::default();
    let charlie = c.parties.get_mut(&PartyId::Charlie).unwrap();
    charlie.bid = Some(bid);
    charlie.bcoin = bid.max(20_000);
    c
}

fn run(c: ScenarioConfig) -> ScenarioRun {
    let r = run_scenario(c, 1).unwrap();
    assert!(r.violations.is_empty(), "{:?}", r.violations);
    r
}

fn alice_value(r: &ScenarioRun) -> i128 {
    r.outcome.party_delta(PartyId::Alice, ChainId::ACoin) + r.outcome.party_delta(PartyId::Alice, ChainId::BCoin)
}

fn claimed(r: &ScenarioRun, party: &str) -> i128 {
    r.events()
        .iter()
        .filter(|e| e.kind == EventKind::Claim && e.detail["party"] == party)
        .map(|e| e.detail["amount"].as_i64().unwrap() as i128)
        .sum()
}

#[test]
fn seizure_outcome_for_the_borrower() {
    let r = run(builtin::get("default_no_bids_seizure").unwrap());
    // keeps the principal, loses the seizable output
    assert_eq!(alice_value(&r), PRINCIPAL - SEIZABLE);
}

#[test]
fn bidding_beats_seizure_only_above_owed_plus_refundable() {
    let seizure = alice_value(&run(builtin::get("default_no_bids_seizure").unwrap()));
    let threshold = OWED + REFUNDABLE;
    for (bid, better) in [(threshold - 1, false), (threshold, false), (threshold + 1, true), (OWED + 1, false)] {
        let r = run(with_bid(bid as u64));
        assert_eq!(r.outcome.terminal.unwrap().to_string(), "settled");
        let v = alice_value(&r);
        assert_eq!(v, PRINCIPAL - (SEIZABLE + REFUNDABLE) + (bid - OWED));
        assert_eq!(v > seizure, better, "bid {bid}: {v} vs {seizure}");
    }
}

#[test]
fn bid_below_owed_goes_entirely_to_the_lender() {
    let r = run(with_bid(9_000));
    assert_eq!(claimed(&r, "bob"), 9_000);
    assert_eq!(claimed(&r, "alice"), 0);
    assert_eq!(r.outcome.party_delta(PartyId::Charlie, ChainId::ACoin), SEIZABLE + REFUNDABLE);
}

#[test]
fn lender_refuses_to_sign_below_the_seizable_value() {
    let r = run(with_bid(5_000));
    assert_eq!(r.outcome.terminal.unwrap().to_string(), "seizure-fallback");
    assert_eq!(r.outcome.party_delta(PartyId::Bob, ChainId::ACoin), SEIZABLE);
    assert_eq!(r.outcome.party_delta(PartyId::Charlie, ChainId::BCoin), 0);
}

#[test]
fn early_seizure_is_rejected_by_the_ledger() {
    let session = fresh(builtin::get("default_no_bids_seizure").unwrap());
    let a1 = session.resolved.secret("A1").unwrap().secret;
    let mut sim = Simulation::new(session, &BTreeSet::new());
    let mut decider = PrefixDecider::new(Vec::new());
    while !sim.session.is_public(&a1) {
        sim.step(&mut decider).unwrap();
    }
    let bidding_end = sim.session.config().period_timeline().bidding_end;
    assert!(sim.session.now() < bidding_end);
    let action = build(&View::new(PartyId::Bob, &sim.session), Duty::Seize, Choice::Premature).unwrap().unwrap();
    let before = sim.session.outcome();
    assert!(!sim.session.would_accept(PartyId::Bob, &action));
    assert!(!sim.session.apply(PartyId::Bob, &action));
    assert_eq!(sim.session.outcome().fin, before.fin);
}

#[test]
fn seeds_change_secrets_not_balances() {
    let a = run_scenario(builtin::get("default_bidding").unwrap(), 1).unwrap();
    let b = run_scenario(builtin::get("default_bidding").unwrap(), 99).unwrap();
    assert_eq!(a.outcome.fin, b.outcome.fin);
    assert_ne!(a.session.resolved.secret("A1").unwrap().secret, b.session.resolved.secret("A1").unwrap().secret);
}

fn fresh(c: ScenarioConfig) -> Session {
    Session::new(Resolved::new(c, 1).unwrap(), false).unwrap()
}

#[test]
fn parties_only_see_their_own_secrets() {
    let s = fresh(builtin::get("default_bidding").unwrap());
    assert!(View::new(PartyId::Alice, &s).secret("A1").is_ok());
    assert!(View::new(PartyId::Bob, &s).secret("B2").is_ok());
    for (who, label) in [(PartyId::Bob, "A1"), (PartyId::Charlie, "A2"), (PartyId::Alice, "B1"), (PartyId::Alice, "C")]
    {
        match View::new(who, &s).secret(label) {
            Err(ScenarioError::InformationLeak { party, label: l }) => assert_eq!((party, l.as_str()), (who, label)),
            other => panic!("{who} read {label}: {other:?}"),
        }
    }
}

#[test]
fn collusion_needs_both_sides() {
    let mutual = fresh(builtin::get("double_agent_alice").unwrap());
    assert!(View::new(PartyId::Other(1), &mutual).secret("A2").is_ok());

    let mut c = builtin::get("double_agent_alice").unwrap();
    c.parties.get_mut(&PartyId::Alice).unwrap().colludes_with.clear();
    let one_sided = fresh(c);
    assert!(matches!(
        View::new(PartyId::Other(1), &one_sided).secret("A2"),
        Err(ScenarioError::InformationLeak { .. })
    ));
}

#[test]
fn shared_secrets_become_known() {
    let r = run_scenario(builtin::get("happy_path").unwrap(), 1).unwrap();
    assert!(r.session.was_shared(PartyId::Alice, "B1"));
    assert!(View::new(PartyId::Alice, &r.session).knows("B1"));
}
