//! Both ledgers under one clock.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::clock::{Clock, ClockError};
use super::contract::{Balances, Call, CallError, CallOutcome, ContractChain};
use super::utxo::{Accepted, Lock, RejectReason, Transaction, TxOut, UtxoChain};
use crate::primitives::{Address, ChainId, PartyId, SignatureScheme, Timestamp};

/// Who holds value: a party, or nobody in particular (script outputs and
/// contract escrow).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Holder {
    Party(PartyId),
    Locked,
}

impl fmt::Display for Holder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Holder::Party(p) => p.fmt(f),
            Holder::Locked => f.write_str("locked"),
        }
    }
}

impl Serialize for Holder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Holder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "locked" {
            return Ok(Holder::Locked);
        }
        s.parse().map(Holder::Party).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "chain")]
pub enum Action {
    ACoin { tx: Transaction },
    BCoin { call: Call },
}

impl Action {
    pub fn chain(&self) -> ChainId {
        match self {
            Action::ACoin { .. } => ChainId::ACoin,
            Action::BCoin { .. } => ChainId::BCoin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("{0}")]
    Tx(RejectReason),
    #[error("{0}")]
    Call(CallError),
    #[error("stale-timestamp")]
    StaleTimestamp,
}

impl Rejection {
    pub fn reason(&self) -> String {
        match self {
            Rejection::Tx(r) => r.to_string(),
            Rejection::Call(e) => e.reason().to_string(),
            Rejection::StaleTimestamp => "stale-timestamp".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Applied {
    ACoin(Accepted),
    BCoin(CallOutcome),
}

#[derive(Clone, Debug)]
pub struct Effect {
    pub applied: Applied,
    /// Net value change per holder on the action's chain; sums to zero.
    pub deltas: BTreeMap<Holder, i128>,
}

#[derive(Clone, Debug)]
pub struct World {
    clock: Clock,
    acoin: UtxoChain,
    bcoin: ContractChain,
    directory: BTreeMap<Address, PartyId>,
}

impl World {
    pub fn new(
        start: Timestamp,
        scheme: SignatureScheme,
        acoin_genesis: Vec<TxOut>,
        bcoin_genesis: Balances,
        directory: BTreeMap<Address, PartyId>,
    ) -> Self {
        World {
            clock: Clock::starting_at(start),
            acoin: UtxoChain::genesis(scheme, acoin_genesis),
            bcoin: ContractChain::genesis(bcoin_genesis),
            directory,
        }
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn scheme(&self) -> SignatureScheme {
        self.acoin.scheme()
    }

    pub fn acoin(&self) -> &UtxoChain {
        &self.acoin
    }

    pub fn bcoin(&self) -> &ContractChain {
        &self.bcoin
    }

    pub fn bcoin_mut(&mut self) -> &mut ContractChain {
        &mut self.bcoin
    }

    pub fn owner_of(&self, address: &Address) -> Option<PartyId> {
        self.directory.get(address).copied()
    }

    pub fn advance(&mut self, to: Timestamp) -> Result<(), ClockError> {
        self.clock.advance(to)
    }

    fn lock_holder(&self, lock: &Lock) -> Holder {
        match lock {
            Lock::Address { address } => self.owner_of(address).map_or(Holder::Locked, Holder::Party),
            Lock::Script { .. } => Holder::Locked,
        }
    }

    pub fn apply(&mut self, actor: PartyId, action: &Action) -> Result<Effect, Rejection> {
        let now = self.now();
        let mut deltas: BTreeMap<Holder, i128> = BTreeMap::new();
        let applied = match action {
            Action::ACoin { tx } => {
                if tx.submitted_at != now {
                    return Err(Rejection::StaleTimestamp);
                }
                let accepted = self.acoin.submit_tx(tx.clone()).map_err(Rejection::Tx)?;
                for out in &accepted.spent {
                    *deltas.entry(self.lock_holder(&out.lock)).or_default() -= out.value as i128;
                }
                for out in &tx.outputs {
                    *deltas.entry(self.lock_holder(&out.lock)).or_default() += out.value as i128;
                }
                Applied::ACoin(accepted)
            }
            Action::BCoin { call } => {
                let before = self.bcoin.balances().clone();
                let outcome = self.bcoin.call(actor, call, now, self.acoin.scheme()).map_err(Rejection::Call)?;
                let after = self.bcoin.balances();
                let mut net = 0i128;
                for (party, v) in after.iter() {
                    let d = v as i128 - before.get(party) as i128;
                    if d != 0 {
                        deltas.insert(Holder::Party(party), d);
                        net += d;
                    }
                }
                if net != 0 {
                    deltas.insert(Holder::Locked, -net);
                }
                Applied::BCoin(outcome)
            }
        };
        deltas.retain(|_, d| *d != 0);
        Ok(Effect { applied, deltas })
    }

    /// Holdings per chain, with script outputs and escrow under [`Holder::Locked`].
    pub fn holdings(&self, chain: ChainId) -> BTreeMap<Holder, u64> {
        let mut out = BTreeMap::new();
        match chain {
            ChainId::ACoin => {
                for o in self.acoin.utxos() {
                    *out.entry(self.lock_holder(&o.lock)).or_insert(0) += o.value;
                }
            }
            ChainId::BCoin => {
                for (p, v) in self.bcoin.balances().iter() {
                    *out.entry(Holder::Party(p)).or_insert(0) += v;
                }
                let locked = self.bcoin.locked_total() as u64;
                if locked > 0 {
                    *out.entry(Holder::Locked).or_insert(0) += locked;
                }
            }
        }
        out
    }

    pub fn total_value(&self, chain: ChainId) -> u128 {
        match chain {
            ChainId::ACoin => self.acoin.total_value(),
            ChainId::BCoin => self.bcoin.total_value(),
        }
    }

    /// Stable digest of everything that can influence future behaviour.
    pub fn fingerprint<H: Hasher>(&self, h: &mut H) {
        self.clock.now().hash(h);
        for o in self.acoin.utxos() {
            o.id.hash(h);
        }
        self.acoin.scan_revealed().hash(h);
        self.acoin.log().len().hash(h);
        self.bcoin.scan_revealed().hash(h);
        for (p, v) in self.bcoin.balances().iter() {
            (p, v).hash(h);
        }
        for (id, c) in self.bcoin.contracts() {
            id.hash(h);
            serde_json::to_string(c).expect("contract serializes").hash(h);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::script::Witness;
    use crate::chain::utxo::{OutputId, TxIn};
    use crate::primitives::{Keypair, SecretRng};

    #[test]
    fn acoin_effects_sum_to_zero_and_stale_time_is_rejected() {
        let mut rng = SecretRng::from_seed(2);
        let scheme = SignatureScheme::Transparent;
        let alice = Keypair::generate(scheme, &mut rng);
        let bob = Keypair::generate(scheme, &mut rng);
        let directory = [(alice.public().address(), PartyId::Alice), (bob.public().address(), PartyId::Bob)].into();
        let mut world = World::new(
            Timestamp::from_secs(10),
            scheme,
            vec![TxOut { value: 100, lock: Lock::to(alice.public().address()) }],
            Balances::default(),
            directory,
        );
        let genesis = world.acoin().utxos().next().unwrap().id;
        let mut tx = Transaction {
            inputs: vec![TxIn { output: genesis, witness: Witness::default() }],
            outputs: vec![
                TxOut { value: 60, lock: Lock::to(bob.public().address()) },
                TxOut { value: 40, lock: Lock::to(alice.public().address()) },
            ],
            submitted_at: Timestamp::from_secs(9),
        };
        let sig = alice.sign(&tx.sighash());
        tx.inputs[0].witness.signatures.push((alice.public(), sig));
        let action = Action::ACoin { tx: tx.clone() };
        assert_eq!(world.apply(PartyId::Alice, &action).unwrap_err(), Rejection::StaleTimestamp);
        tx.submitted_at = Timestamp::from_secs(10);
        let sig = alice.sign(&tx.sighash());
        tx.inputs[0].witness.signatures = vec![(alice.public(), sig)];
        let effect = world.apply(PartyId::Alice, &Action::ACoin { tx }).unwrap();
        assert_eq!(effect.deltas.values().sum::<i128>(), 0);
        assert_eq!(effect.deltas[&Holder::Party(PartyId::Bob)], 60);
        assert_eq!(world.holdings(ChainId::ACoin)[&Holder::Party(PartyId::Alice)], 40);
        assert!(world.acoin().utxo(&OutputId { txid: genesis.txid, index: 0 }).is_none());
    }

    #[test]
    fn holder_round_trips_as_string() {
        let json = serde_json::to_string(&[Holder::Locked, Holder::Party(PartyId::Other(3))]).unwrap();
        assert_eq!(json, r#"["locked","other-3"]"#);
        let back: Vec<Holder> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Holder::Locked, Holder::Party(PartyId::Other(3))]);
    }
}
