//! A running simulation: the world, the secret book, off-chain knowledge, the
//! trace being recorded and the invariants checked after every step.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use super::safety::{Violation, ViolationKind};
use super::scenario::{Resolved, ScenarioConfig, ScenarioError, ScenarioKind};
use crate::chain::world::Applied;
use crate::chain::{Action, Call, Contract, ContractId, Effect, Holder, Lock, Rejection, TxOut, World};
use crate::collateral::{build_refundable_script, build_seizable_script, CollateralOutputs};
use crate::loan::{LoanContract, LoanState};
use crate::primitives::{ChainId, PartyId, Secret, Timestamp};
use crate::trace::event::{Actor, EventKind, TraceEvent};

/// Anything an agent can do: a ledger action or handing a secret to a party
/// off-chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AgentAction {
    Chain(Action),
    Share { to: PartyId, label: String },
}

/// Outcome of one run, per chain and holder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub initial: BTreeMap<ChainId, BTreeMap<Holder, u64>>,
    pub fin: BTreeMap<ChainId, BTreeMap<Holder, u64>>,
    pub terminal: Option<LoanState>,
    pub revealed: BTreeMap<ChainId, BTreeSet<String>>,
}

impl Outcome {
    pub fn delta(&self, holder: Holder, chain: ChainId) -> i128 {
        let get = |m: &BTreeMap<ChainId, BTreeMap<Holder, u64>>| {
            m.get(&chain).and_then(|h| h.get(&holder)).copied().unwrap_or(0)
        };
        get(&self.fin) as i128 - get(&self.initial) as i128
    }

    pub fn party_delta(&self, party: PartyId, chain: ChainId) -> i128 {
        self.delta(Holder::Party(party), chain)
    }

    pub fn deltas(&self, chain: ChainId) -> BTreeMap<Holder, i128> {
        let mut holders: BTreeSet<Holder> = BTreeSet::new();
        for m in [&self.initial, &self.fin] {
            if let Some(h) = m.get(&chain) {
                holders.extend(h.keys().copied());
            }
        }
        holders.into_iter().map(|h| (h, self.delta(h, chain))).filter(|(_, d)| *d != 0).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Session {
    pub resolved: Resolved,
    world: World,
    labels: BTreeMap<Secret, String>,
    shared: BTreeSet<(PartyId, String)>,
    loan: Option<ContractId>,
    collateral: Option<CollateralOutputs>,
    collateral_locks: Option<(Lock, Lock)>,
    initial: BTreeMap<ChainId, BTreeMap<Holder, u64>>,
    totals: BTreeMap<ChainId, u128>,
    states_seen: BTreeSet<LoanState>,
    violations: Vec<Violation>,
    record: bool,
    events: Vec<TraceEvent>,
}

fn effects_json(effect: &Effect) -> Value {
    Value::Array(effect.deltas.iter().map(|(h, d)| json!({"holder": h, "delta": *d as i64})).collect())
}

impl Session {
    pub fn new(resolved: Resolved, record: bool) -> Result<Self, ScenarioError> {
        let config = &resolved.config;
        let mut genesis = Vec::new();
        let mut directory = BTreeMap::new();
        for (party, key) in &resolved.keys {
            directory.insert(key.public().address(), *party);
            let acoin = config.party(*party).acoin;
            if acoin > 0 {
                genesis.push(TxOut { value: acoin, lock: Lock::to(key.public().address()) });
            }
        }
        if genesis.is_empty() {
            return Err(ScenarioError::Invalid("nobody holds ACoin".into()));
        }
        let mut world = World::new(config.genesis(), config.scheme, genesis, resolved.bcoin_genesis.clone(), directory);
        let mut loan = None;
        let mut collateral_locks = None;
        if let Some(terms) = &resolved.terms {
            let contract = LoanContract::new(terms.clone()).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            loan = Some(world.bcoin_mut().deploy(Contract::Loan(Box::new(contract))));
            let seizable =
                build_seizable_script(&terms.collateral).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            let refundable =
                build_refundable_script(&terms.collateral).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            collateral_locks = Some((Lock::script(seizable), Lock::script(refundable)));
        }
        let labels = resolved.secrets.iter().map(|e| (e.secret, e.label.clone())).collect();
        let initial: BTreeMap<_, _> =
            [ChainId::ACoin, ChainId::BCoin].into_iter().map(|c| (c, world.holdings(c))).collect();
        let totals = [ChainId::ACoin, ChainId::BCoin].into_iter().map(|c| (c, world.total_value(c))).collect();
        let mut session = Session {
            resolved,
            world,
            labels,
            shared: BTreeSet::new(),
            loan,
            collateral: None,
            collateral_locks,
            initial,
            totals,
            states_seen: BTreeSet::new(),
            violations: Vec::new(),
            record,
            events: Vec::new(),
        };
        let detail = json!({
            "scenario": serde_json::to_value(&session.resolved.config).expect("config serializes"),
            "seed": session.resolved.seed,
        });
        session.push(None, Actor::SYSTEM, EventKind::Setup, detail);
        Ok(session)
    }

    /// Rebuilds the starting session from a trace's setup event.
    pub fn from_setup(detail: &Value, record: bool) -> Result<Self, ScenarioError> {
        let config: ScenarioConfig = serde_json::from_value(detail.get("scenario").cloned().unwrap_or(Value::Null))
            .map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let seed = detail
            .get("seed")
            .and_then(Value::as_u64)
            .ok_or_else(|| ScenarioError::Parse("setup event lacks a seed".into()))?;
        Session::new(Resolved::new(config, seed)?, record)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.resolved.config
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn now(&self) -> Timestamp {
        self.world.now()
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn loan_id(&self) -> Option<ContractId> {
        self.loan
    }

    pub fn loan(&self) -> Option<&LoanContract> {
        self.loan.and_then(|id| self.world.bcoin().loan(id))
    }

    pub fn loan_state(&self) -> Option<LoanState> {
        self.loan().and_then(|l| l.state())
    }

    pub fn collateral(&self) -> Option<CollateralOutputs> {
        self.collateral
    }

    pub fn label_of(&self, secret: &Secret) -> Option<&str> {
        self.labels.get(secret).map(String::as_str)
    }

    pub fn is_public(&self, secret: &Secret) -> bool {
        self.world.acoin().scan_revealed().contains(secret) || self.world.bcoin().scan_revealed().contains(secret)
    }

    pub fn was_shared(&self, to: PartyId, label: &str) -> bool {
        self.shared.iter().any(|(p, l)| *p == to && l == label)
    }

    pub fn shared(&self) -> &BTreeSet<(PartyId, String)> {
        &self.shared
    }

    fn labels_json(&self, secrets: impl IntoIterator<Item = Secret>) -> Value {
        let mut labels: Vec<String> =
            secrets.into_iter().map(|s| self.label_of(&s).map_or_else(|| s.to_string(), str::to_string)).collect();
        labels.sort();
        labels.dedup();
        json!(labels)
    }

    fn push(&mut self, chain: Option<ChainId>, actor: Actor, kind: EventKind, detail: Value) {
        if !self.record {
            return;
        }
        let seq = self.events.len() as u64;
        self.events.push(TraceEvent { seq, time: self.world.now(), chain, actor, kind, detail });
    }

    pub fn advance(&mut self, to: Timestamp) -> Result<(), ScenarioError> {
        self.world.advance(to).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.push(None, Actor::SYSTEM, EventKind::Clock, json!({"to": to}));
        Ok(())
    }

    /// Applies an agent action, records it, and checks invariants. Returns
    /// whether the action was accepted.
    pub fn apply(&mut self, actor: PartyId, action: &AgentAction) -> bool {
        match action {
            AgentAction::Share { to, label } => {
                self.shared.insert((*to, label.clone()));
                self.push(None, Actor::Party(actor), EventKind::SecretShared, json!({"to": to, "secret": label}));
                true
            }
            AgentAction::Chain(a) => match self.world.apply(actor, a) {
                Ok(effect) => {
                    self.record_accepted(actor, a, &effect);
                    self.check_step();
                    true
                }
                Err(rejection) => {
                    self.record_rejected(actor, a, &rejection);
                    false
                }
            },
        }
    }

    fn action_json(action: &Action) -> (&'static str, Value) {
        match action {
            Action::ACoin { tx } => ("tx", serde_json::to_value(tx).expect("tx serializes")),
            Action::BCoin { call } => ("call", serde_json::to_value(call).expect("call serializes")),
        }
    }

    fn record_rejected(&mut self, actor: PartyId, action: &Action, rejection: &Rejection) {
        if !self.record {
            return;
        }
        let (key, value) = Self::action_json(action);
        let detail = json!({ key: value, "reason": rejection.reason() });
        self.push(Some(action.chain()), Actor::Party(actor), EventKind::TxRejected, detail);
    }

    fn call_uses(&self, call: &Call) -> Vec<Secret> {
        match call {
            Call::Withdraw { secret_b1, .. } => vec![*secret_b1],
            Call::RevealCounterpartySecret { secret, .. } => vec![*secret],
            Call::ClaimProceeds { .. } => self.loan().and_then(|l| l.settlement().secret_c).into_iter().collect(),
            _ => Vec::new(),
        }
    }

    fn record_accepted(&mut self, actor: PartyId, action: &Action, effect: &Effect) {
        if let (Action::ACoin { tx }, Some((seizable, refundable))) = (action, &self.collateral_locks) {
            if self.collateral.is_none()
                && tx.outputs.len() >= 2
                && tx.outputs[0].lock == *seizable
                && tx.outputs[1].lock == *refundable
            {
                let txid = tx.txid();
                self.collateral = Some(CollateralOutputs {
                    seizable: crate::chain::OutputId { txid, index: 0 },
                    refundable: crate::chain::OutputId { txid, index: 1 },
                });
            }
        }
        if let Applied::BCoin(outcome) = &effect.applied {
            if let Some((_, to)) = outcome.transition {
                self.states_seen.insert(to);
            }
        }
        if !self.record {
            return;
        }
        let chain = Some(action.chain());
        let who = Actor::Party(actor);
        let (key, value) = Self::action_json(action);
        match (&effect.applied, action) {
            (Applied::ACoin(acc), Action::ACoin { tx }) => {
                let uses = self.labels_json(tx.revealed());
                let detail = json!({key: value, "txid": acc.txid, "uses": uses, "effects": effects_json(effect)});
                self.push(chain, who, EventKind::TxAccepted, detail);
                for s in acc.newly_revealed.clone() {
                    let label = self.labels_json([s])[0].clone();
                    self.push(
                        chain,
                        who,
                        EventKind::SecretRevealed,
                        json!({"secret": label, "value": s, "via": acc.txid}),
                    );
                }
            }
            (Applied::BCoin(out), Action::BCoin { call }) => {
                let uses = self.labels_json(self.call_uses(call));
                let mut detail = json!({key: value, "uses": uses, "effects": effects_json(effect)});
                if let Some(id) = out.created {
                    detail["created"] = json!(id);
                }
                self.push(chain, who, EventKind::TxAccepted, detail);
                if let Some(bid) = &out.receipt.bid {
                    let displaced = out.receipt.displaced.map(|(p, a)| json!({"bidder": p, "refunded": a}));
                    self.push(
                        chain,
                        who,
                        EventKind::BidPlaced,
                        json!({"bidder": bid.bidder, "amount": bid.amount, "displaced": displaced}),
                    );
                }
                for s in out.newly_revealed.clone() {
                    let label = self.labels_json([s])[0].clone();
                    self.push(
                        chain,
                        who,
                        EventKind::SecretRevealed,
                        json!({"secret": label, "value": s, "via": call.name()}),
                    );
                }
                if let Some((from, to)) = out.transition {
                    let contract = call.contract().or(out.created);
                    self.push(
                        chain,
                        who,
                        EventKind::StateTransition,
                        json!({"contract": contract, "from": from, "to": to}),
                    );
                }
                if let Some((party, amount)) = out.receipt.claim {
                    self.push(chain, who, EventKind::Claim, json!({"party": party, "amount": amount}));
                }
            }
            _ => unreachable!("effect matches action chain"),
        }
    }

    fn violate(&mut self, kind: ViolationKind, detail: String) {
        self.violations.push(Violation { kind, detail });
    }

    fn check_step(&mut self) {
        for chain in [ChainId::ACoin, ChainId::BCoin] {
            let total = self.world.total_value(chain);
            if total != self.totals[&chain] {
                self.violate(ViolationKind::Conservation, format!("{chain} total {total} != {}", self.totals[&chain]));
            }
        }
        if self.states_seen.contains(&LoanState::Repaid) && self.states_seen.contains(&LoanState::BiddingOpen) {
            self.violate(ViolationKind::RepaidThenBidding, "repaid loan entered bidding".into());
        }
        let Some(loan) = self.loan() else { return };
        let mut found = Vec::new();
        if matches!(loan.state(), Some(LoanState::BiddingOpen | LoanState::BiddingClosed)) {
            let highest = loan.highest_bid().map_or(0, |b| b.amount);
            if loan.escrow() != highest {
                found.push((ViolationKind::BidEscrow, format!("escrow {} != highest bid {highest}", loan.escrow())));
            }
        }
        if loan.state() == Some(LoanState::Settled) {
            let bid = loan.highest_bid().map_or(0, |b| b.amount);
            let owed = loan.terms().owed_on_liquidation();
            if loan.lender_share() + loan.borrower_share() != bid || loan.lender_share() > owed {
                found.push((
                    ViolationKind::Proceeds,
                    format!("shares {}+{} for bid {bid}", loan.lender_share(), loan.borrower_share()),
                ));
            }
            let claimed: u64 = [PartyId::Alice, PartyId::Bob].iter().filter_map(|p| loan.claimed(*p)).sum();
            if claimed + loan.escrow() != bid {
                found.push((
                    ViolationKind::Proceeds,
                    format!("claimed {claimed} + escrow {} != bid {bid}", loan.escrow()),
                ));
            }
        }
        for (k, d) in found {
            self.violate(k, d);
        }
    }

    /// Whether `action` would be accepted right now, without applying it.
    pub fn would_accept(&self, actor: PartyId, action: &AgentAction) -> bool {
        match action {
            AgentAction::Share { .. } => true,
            AgentAction::Chain(a) => self.world.clone().apply(actor, a).is_ok(),
        }
    }

    /// End-of-run checks that need the whole history.
    pub fn finish(&mut self) {
        if let Err(i) = self.world.acoin().revalidate_log() {
            self.violate(ViolationKind::Revalidation, format!("ACoin transaction {i} fails re-validation"));
        }
    }

    pub fn outcome(&self) -> Outcome {
        let fin = [ChainId::ACoin, ChainId::BCoin].into_iter().map(|c| (c, self.world.holdings(c))).collect();
        let label_set =
            |set: &BTreeSet<Secret>| set.iter().filter_map(|s| self.label_of(s).map(str::to_string)).collect();
        let revealed = [
            (ChainId::ACoin, label_set(self.world.acoin().scan_revealed())),
            (ChainId::BCoin, label_set(self.world.bcoin().scan_revealed())),
        ]
        .into();
        Outcome { initial: self.initial.clone(), fin, terminal: self.loan_state(), revealed }
    }

    pub fn kind(&self) -> ScenarioKind {
        self.resolved.config.kind
    }

    /// Digest of everything that influences what happens next.
    pub fn fingerprint<H: std::hash::Hasher>(&self, h: &mut H) {
        use std::hash::Hash;
        self.world.fingerprint(h);
        self.shared.hash(h);
        self.collateral.hash(h);
    }
}
