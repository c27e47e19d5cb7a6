//! Exhaustive search over deviation choices of the non-honest parties.
//!
//! A run is identified by the choices it makes at decision points, in the
//! order they come up. Runs are explored breadth-first by prefix; a run's
//! children replace one later choice with an alternative. At every clock
//! tick a run records a digest of the full simulation state together with
//! the choices still forced on it. When an earlier run reached the same
//! digest with the same forced remainder having used no more decisions, the
//! later run's post-checkpoint subtree is already covered and is skipped.

use std::collections::{BTreeSet, HashMap};
use std::hash::{DefaultHasher, Hasher};

use serde::Serialize;

use super::protocol::Simulation;
use super::run::evaluate;
use super::safety::Violation;
use super::scenario::{PartyConfig, Resolved, ScenarioConfig, ScenarioError, TermsConfig};
use super::session::Session;
use super::strategy::{Choice, Decision, PrefixDecider};
use crate::primitives::{PartyId, SignatureScheme};

pub const MAX_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnumerateError {
    #[error("depth {0} exceeds the cap of {MAX_DEPTH}")]
    DepthTooLarge(usize),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// A run that broke an invariant or a safety bound.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub decisions: Vec<Decision>,
    pub violations: Vec<Violation>,
}

impl Finding {
    /// A scenario that reproduces this run with fixed strategy tables.
    pub fn to_scenario(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut config = base.clone();
        config.name = "enumerated_violation".into();
        config.description = self.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        for d in &self.decisions {
            if d.choice != Choice::Honest {
                config.parties.entry(d.party).or_default().strategy.insert(d.duty, d.choice);
            }
        }
        config
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnumerationReport {
    /// Runs simulated, including ones whose subtrees were pruned.
    pub runs: usize,
    pub pruned: usize,
    /// Violating runs in canonical order.
    pub violations: Vec<Finding>,
    /// Digests of every distinct end state reached.
    pub end_states: BTreeSet<u128>,
}

/// The scenario the enumerator explores: Alice, Bob and one bidder, with every
/// party outside `honest` colluding with the others.
pub fn enumeration_config(honest: &BTreeSet<PartyId>, terms: TermsConfig) -> ScenarioConfig {
    let mut parties = std::collections::BTreeMap::new();
    parties.insert(PartyId::Alice, PartyConfig { acoin: 15_000, bcoin: 1_000, ..PartyConfig::default() });
    parties.insert(PartyId::Bob, PartyConfig { bcoin: 10_000, ..PartyConfig::default() });
    parties.insert(PartyId::Charlie, PartyConfig { bcoin: 20_000, bid: Some(12_000), ..PartyConfig::default() });
    let dishonest: BTreeSet<PartyId> = parties.keys().copied().filter(|p| !honest.contains(p)).collect();
    for p in &dishonest {
        let mates = dishonest.iter().copied().filter(|q| q != p).collect();
        parties.get_mut(p).expect("listed").colludes_with = mates;
    }
    ScenarioConfig {
        name: "enumeration".into(),
        description: String::new(),
        kind: Default::default(),
        scheme: SignatureScheme::Transparent,
        terms,
        timeline: Default::default(),
        swap: Default::default(),
        parties,
        schedule: None,
        expect: Default::default(),
    }
}

struct Checkpoint {
    digest: u128,
    consumed: usize,
    remaining: Vec<Choice>,
}

struct RunRecord {
    prefix: Vec<Choice>,
    taken: Vec<Decision>,
    checkpoints: Vec<Checkpoint>,
    violations: Vec<Violation>,
    end_state: u128,
}

fn digest(sim: &Simulation) -> u128 {
    let mut a = DefaultHasher::new();
    let mut b = DefaultHasher::new();
    b.write_u64(0x9e37_79b9_7f4a_7c15);
    sim.fingerprint(&mut a);
    sim.fingerprint(&mut b);
    ((a.finish() as u128) << 64) | b.finish() as u128
}

fn simulate(
    resolved: &Resolved,
    consult: &BTreeSet<PartyId>,
    honest: &BTreeSet<PartyId>,
    prefix: Vec<Choice>,
) -> Result<RunRecord, ScenarioError> {
    let session = Session::new(resolved.clone(), false)?;
    let mut sim = Simulation::new(session, consult);
    let mut decider = PrefixDecider::new(prefix.clone());
    let mut checkpoints = Vec::new();
    while !sim.is_done() {
        let consumed = decider.taken.len();
        checkpoints.push(Checkpoint {
            digest: digest(&sim),
            consumed,
            remaining: prefix.get(consumed..).unwrap_or(&[]).to_vec(),
        });
        sim.step(&mut decider)?;
    }
    sim.session.finish();
    let end_state = digest(&sim);
    let mut violations = evaluate(&sim.session, honest);
    violations.sort();
    violations.dedup();
    Ok(RunRecord { prefix, taken: decider.taken, checkpoints, violations, end_state })
}

#[cfg(feature = "parallel")]
fn simulate_level(
    resolved: &Resolved,
    consult: &BTreeSet<PartyId>,
    honest: &BTreeSet<PartyId>,
    level: Vec<Vec<Choice>>,
    parallel: bool,
) -> Result<Vec<RunRecord>, ScenarioError> {
    use rayon::prelude::*;
    if parallel {
        level.into_par_iter().map(|p| simulate(resolved, consult, honest, p)).collect()
    } else {
        level.into_iter().map(|p| simulate(resolved, consult, honest, p)).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn simulate_level(
    resolved: &Resolved,
    consult: &BTreeSet<PartyId>,
    honest: &BTreeSet<PartyId>,
    level: Vec<Vec<Choice>>,
    _parallel: bool,
) -> Result<Vec<RunRecord>, ScenarioError> {
    level.into_iter().map(|p| simulate(resolved, consult, honest, p)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerateOptions {
    pub parallel: bool,
    /// Skip subtrees already covered by an equivalent earlier state.
    pub memo: bool,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        EnumerateOptions { parallel: cfg!(feature = "parallel"), memo: true }
    }
}

/// Explores every combination of at most `depth` deviation decisions by the
/// parties outside `honest`. Results do not depend on `parallel`.
pub fn enumerate(
    config: &ScenarioConfig,
    honest: &BTreeSet<PartyId>,
    depth: usize,
    parallel: bool,
) -> Result<EnumerationReport, EnumerateError> {
    enumerate_with(config, honest, depth, EnumerateOptions { parallel, memo: true })
}

pub fn enumerate_with(
    config: &ScenarioConfig,
    honest: &BTreeSet<PartyId>,
    depth: usize,
    opts: EnumerateOptions,
) -> Result<EnumerationReport, EnumerateError> {
    let parallel = opts.parallel;
    if depth > MAX_DEPTH {
        return Err(EnumerateError::DepthTooLarge(depth));
    }
    let resolved = Resolved::new(config.clone(), 0)?;
    let consult: BTreeSet<PartyId> = config.parties.keys().copied().filter(|p| !honest.contains(p)).collect();
    let mut seen: HashMap<(u128, Vec<Choice>), usize> = HashMap::new();
    let mut level: Vec<Vec<Choice>> = vec![Vec::new()];
    let mut report = EnumerationReport { runs: 0, pruned: 0, violations: Vec::new(), end_states: BTreeSet::new() };
    while !level.is_empty() {
        level.sort();
        let records = simulate_level(&resolved, &consult, honest, std::mem::take(&mut level), parallel)?;
        for rec in records {
            report.runs += 1;
            report.end_states.insert(rec.end_state);
            if !rec.violations.is_empty() {
                report.violations.push(Finding { decisions: rec.taken.clone(), violations: rec.violations.clone() });
            }
            // children may only vary decisions before the first covered checkpoint
            let mut limit = depth.min(rec.taken.len());
            for cp in rec.checkpoints.into_iter().filter(|_| opts.memo) {
                let key = (cp.digest, cp.remaining);
                match seen.get(&key) {
                    Some(&k) if k <= cp.consumed => {
                        limit = limit.min(cp.consumed.max(rec.prefix.len()));
                        report.pruned += 1;
                        break;
                    }
                    _ => {
                        seen.insert(key, cp.consumed);
                    }
                }
            }
            for i in rec.prefix.len()..limit {
                let d = rec.taken[i];
                let options = if honest.contains(&d.party) { d.duty.honest_options() } else { d.duty.options() };
                for alt in options {
                    if *alt == d.choice {
                        continue;
                    }
                    let mut child: Vec<Choice> = rec.taken[..i].iter().map(|t| t.choice).collect();
                    child.push(*alt);
                    level.push(child);
                }
            }
        }
    }
    report.violations.sort_by(|a, b| {
        let key = |f: &Finding| f.decisions.iter().map(|d| d.choice).collect::<Vec<_>>();
        key(a).cmp(&key(b)).then_with(|| a.decisions.cmp(&b.decisions))
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_cap_is_enforced() {
        let honest: BTreeSet<_> = [PartyId::Bob].into();
        let config = enumeration_config(&honest, TermsConfig::default());
        assert_eq!(enumerate(&config, &honest, 17, false), Err(EnumerateError::DepthTooLarge(17)));
    }

    #[test]
    fn all_honest_only_chooses_whether_to_repay() {
        let honest: BTreeSet<_> = [PartyId::Alice, PartyId::Bob, PartyId::Charlie].into();
        let config = enumeration_config(&honest, TermsConfig::default());
        let r = enumerate(&config, &honest, 4, false).unwrap();
        assert_eq!(r.runs, 2);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn memo_reaches_the_same_end_states_as_brute_force() {
        for honest in [vec![PartyId::Bob], vec![PartyId::Alice]] {
            let honest: BTreeSet<_> = honest.into_iter().collect();
            let config = enumeration_config(&honest, TermsConfig::default());
            let fast = enumerate_with(&config, &honest, 5, EnumerateOptions { parallel: false, memo: true }).unwrap();
            let slow = enumerate_with(&config, &honest, 5, EnumerateOptions { parallel: false, memo: false }).unwrap();
            assert!(fast.runs < slow.runs);
            assert_eq!(fast.end_states, slow.end_states);
            assert_eq!(fast.violations.is_empty(), slow.violations.is_empty());
        }
    }

    #[test]
    fn dishonest_parties_collude_with_each_other() {
        let honest: BTreeSet<_> = [PartyId::Bob].into();
        let c = enumeration_config(&honest, TermsConfig::default());
        assert!(c.party(PartyId::Alice).colludes_with.contains(&PartyId::Charlie));
        assert!(c.party(PartyId::Charlie).colludes_with.contains(&PartyId::Alice));
        assert!(c.party(PartyId::Bob).colludes_with.is_empty());
    }
}
