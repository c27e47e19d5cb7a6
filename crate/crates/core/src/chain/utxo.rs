//! The ACoin ledger: a UTXO set guarded by [`ScriptCondition`]s.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::script::{eval_condition, EvalContext, ScriptCondition, Witness};
use crate::primitives::{Address, ChainId, Encoder, Secret, SignatureScheme, Timestamp};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(#[serde(with = "hex_array")] [u8; 32]);

mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({})", &hex::encode(self.0)[..12])
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct OutputId {
    pub txid: TxId,
    pub index: u32,
}

impl fmt::Display for OutputId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", &self.txid.to_string()[..12], self.index)
    }
}

/// How an output may be spent: a plain pay-to-key address or a script.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Lock {
    Address { address: Address },
    Script { condition: ScriptCondition },
}

impl Lock {
    pub fn to(address: Address) -> Self {
        Lock::Address { address }
    }

    pub fn script(condition: ScriptCondition) -> Self {
        Lock::Script { condition }
    }

    fn encode(&self, enc: Encoder) -> Encoder {
        match self {
            Lock::Address { address } => enc.bytes(b"addr").bytes(address.as_bytes()),
            Lock::Script { condition } => enc.bytes(b"script").bytes(&condition.digest()),
        }
    }

    fn satisfied(&self, ctx: &EvalContext<'_>) -> bool {
        match self {
            Lock::Address { address } => {
                ctx.witness.signatures.iter().any(|(key, _)| key.address() == *address && ctx.signed_by(key))
            }
            Lock::Script { condition } => eval_condition(condition, ctx),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxOut {
    pub value: u64,
    pub lock: Lock,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Output {
    pub id: OutputId,
    pub value: u64,
    pub lock: Lock,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxIn {
    pub output: OutputId,
    pub witness: Witness,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub inputs: Vec<TxIn>,
    pub outputs: Vec<TxOut>,
    pub submitted_at: Timestamp,
}

/// Canonical signed payload for spending `outpoints` into `outputs`:
/// length-prefixed chain id, outpoints, then each (destination, value).
pub fn spend_message(outpoints: &[OutputId], outputs: &[TxOut]) -> Vec<u8> {
    let mut enc = Encoder::new().bytes(ChainId::ACoin.to_string().as_bytes());
    enc = enc.u32(outpoints.len() as u32);
    for op in outpoints {
        enc = enc.bytes(&op.txid.0).u32(op.index);
    }
    enc = enc.u32(outputs.len() as u32);
    for out in outputs {
        enc = out.lock.encode(enc).u64(out.value);
    }
    enc.finish()
}

impl Transaction {
    pub fn outpoints(&self) -> Vec<OutputId> {
        self.inputs.iter().map(|i| i.output).collect()
    }

    pub fn sighash(&self) -> Vec<u8> {
        spend_message(&self.outpoints(), &self.outputs)
    }

    /// Witness-independent id.
    pub fn txid(&self) -> TxId {
        TxId(Encoder::new().bytes(b"tx").bytes(&self.sighash()).digest())
    }

    pub fn revealed(&self) -> BTreeSet<Secret> {
        self.inputs.iter().flat_map(|i| i.witness.preimages.iter().copied()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    #[error("unknown-output")]
    UnknownOutput,
    #[error("condition-unsatisfied")]
    ConditionUnsatisfied,
    #[error("value-mismatch")]
    ValueMismatch,
    #[error("double-spend")]
    DoubleSpend,
}

/// Result of an accepted submission.
#[derive(Clone, Debug)]
pub struct Accepted {
    pub txid: TxId,
    pub newly_revealed: Vec<Secret>,
    pub spent: Vec<Output>,
}

#[derive(Clone, Debug)]
pub struct UtxoChain {
    scheme: SignatureScheme,
    utxos: BTreeMap<OutputId, Output>,
    /// Every output ever created, spent or not.
    history: BTreeMap<OutputId, Output>,
    spent_by: BTreeMap<OutputId, TxId>,
    revealed: BTreeSet<Secret>,
    log: Vec<Transaction>,
}

impl UtxoChain {
    /// A chain whose only transaction mints `outputs`.
    pub fn genesis(scheme: SignatureScheme, outputs: Vec<TxOut>) -> Self {
        let mut chain = UtxoChain {
            scheme,
            utxos: BTreeMap::new(),
            history: BTreeMap::new(),
            spent_by: BTreeMap::new(),
            revealed: BTreeSet::new(),
            log: Vec::new(),
        };
        let tx = Transaction { inputs: Vec::new(), outputs, submitted_at: Timestamp::default() };
        chain.add_outputs(&tx);
        chain.log.push(tx);
        chain
    }

    fn add_outputs(&mut self, tx: &Transaction) {
        let txid = tx.txid();
        for (index, out) in tx.outputs.iter().enumerate() {
            let id = OutputId { txid, index: index as u32 };
            let output = Output { id, value: out.value, lock: out.lock.clone() };
            self.history.insert(id, output.clone());
            self.utxos.insert(id, output);
        }
    }

    pub fn scheme(&self) -> SignatureScheme {
        self.scheme
    }

    /// Checks `tx` against the current UTXO set without mutating anything.
    pub fn check_tx(&self, tx: &Transaction) -> Result<(), RejectReason> {
        if tx.inputs.is_empty() || tx.outputs.is_empty() || tx.outputs.iter().any(|o| o.value == 0) {
            return Err(RejectReason::ValueMismatch);
        }
        let mut seen = BTreeSet::new();
        for input in &tx.inputs {
            if !seen.insert(input.output) {
                return Err(RejectReason::DoubleSpend);
            }
        }
        let message = tx.sighash();
        let mut total_in: u128 = 0;
        for input in &tx.inputs {
            let Some(output) = self.utxos.get(&input.output) else {
                return Err(if self.spent_by.contains_key(&input.output) {
                    RejectReason::DoubleSpend
                } else {
                    RejectReason::UnknownOutput
                });
            };
            let ctx =
                EvalContext { witness: &input.witness, message: &message, scheme: self.scheme, now: tx.submitted_at };
            if !output.lock.satisfied(&ctx) {
                return Err(RejectReason::ConditionUnsatisfied);
            }
            // every preimage must open some hash lock of the output it spends
            if let Lock::Script { condition } = &output.lock {
                let hashes = condition.hashes();
                if !input.witness.preimages.iter().all(|s| hashes.contains(&s.commit())) {
                    return Err(RejectReason::ConditionUnsatisfied);
                }
            } else if !input.witness.preimages.is_empty() {
                return Err(RejectReason::ConditionUnsatisfied);
            }
            total_in += output.value as u128;
        }
        let total_out: u128 = tx.outputs.iter().map(|o| o.value as u128).sum();
        if total_in != total_out {
            return Err(RejectReason::ValueMismatch);
        }
        Ok(())
    }

    pub fn submit_tx(&mut self, tx: Transaction) -> Result<Accepted, RejectReason> {
        self.check_tx(&tx)?;
        let txid = tx.txid();
        let mut spent = Vec::with_capacity(tx.inputs.len());
        for input in &tx.inputs {
            let output = self.utxos.remove(&input.output).expect("checked above");
            self.spent_by.insert(input.output, txid);
            spent.push(output);
        }
        let mut newly_revealed = Vec::new();
        for secret in tx.revealed() {
            if self.revealed.insert(secret) {
                newly_revealed.push(secret);
            }
        }
        self.add_outputs(&tx);
        self.log.push(tx);
        Ok(Accepted { txid, newly_revealed, spent })
    }

    pub fn scan_revealed(&self) -> &BTreeSet<Secret> {
        &self.revealed
    }

    pub fn utxo(&self, id: &OutputId) -> Option<&Output> {
        self.utxos.get(id)
    }

    pub fn utxos(&self) -> impl Iterator<Item = &Output> {
        self.utxos.values()
    }

    pub fn is_spent(&self, id: &OutputId) -> bool {
        self.spent_by.contains_key(id)
    }

    pub fn spent_by(&self, id: &OutputId) -> Option<TxId> {
        self.spent_by.get(id).copied()
    }

    pub fn history_output(&self, id: &OutputId) -> Option<&Output> {
        self.history.get(id)
    }

    pub fn log(&self) -> &[Transaction] {
        &self.log
    }

    pub fn total_value(&self) -> u128 {
        self.utxos.values().map(|o| o.value as u128).sum()
    }

    pub fn address_balance(&self, address: &Address) -> u64 {
        self.utxos
            .values()
            .filter(|o| matches!(&o.lock, Lock::Address { address: a } if a == address))
            .map(|o| o.value)
            .sum()
    }

    pub fn address_outputs(&self, address: &Address) -> Vec<Output> {
        self.utxos
            .values()
            .filter(|o| matches!(&o.lock, Lock::Address { address: a } if a == address))
            .cloned()
            .collect()
    }

    /// Re-evaluates every accepted spend against the output it consumed, at
    /// the time it was submitted. Returns the offending transaction index.
    pub fn revalidate_log(&self) -> Result<(), usize> {
        for (i, tx) in self.log.iter().enumerate().skip(1) {
            let message = tx.sighash();
            for input in &tx.inputs {
                let Some(output) = self.history.get(&input.output) else {
                    return Err(i);
                };
                let ctx = EvalContext {
                    witness: &input.witness,
                    message: &message,
                    scheme: self.scheme,
                    now: tx.submitted_at,
                };
                if !output.lock.satisfied(&ctx) {
                    return Err(i);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{generate_secret, Keypair, SecretRng};

    struct Fixture {
        chain: UtxoChain,
        alice: Keypair,
        bob: Keypair,
        coin: OutputId,
    }

    fn fixture() -> Fixture {
        let mut rng = SecretRng::from_seed(5);
        let alice = Keypair::generate(SignatureScheme::Ed25519, &mut rng);
        let bob = Keypair::generate(SignatureScheme::Ed25519, &mut rng);
        let chain = UtxoChain::genesis(
            SignatureScheme::Ed25519,
            vec![TxOut { value: 1000, lock: Lock::to(alice.public().address()) }],
        );
        let coin = chain.utxos().next().unwrap().id;
        Fixture { chain, alice, bob, coin }
    }

    fn signed(mut tx: Transaction, key: &Keypair) -> Transaction {
        let sig = key.sign(&tx.sighash());
        for input in &mut tx.inputs {
            input.witness.signatures.push((key.public(), sig.clone()));
        }
        tx
    }

    #[test]
    fn htlc_redeem_reveals_and_double_spend_rejects() {
        let Fixture { mut chain, alice, bob, coin } = fixture();
        let mut rng = SecretRng::from_seed(77);
        let secret = generate_secret(&mut rng);
        let t = Timestamp::from_secs(500);
        let htlc = ScriptCondition::any(vec![
            ScriptCondition::all(vec![
                ScriptCondition::preimage(secret.commit()),
                ScriptCondition::signed_by(bob.public()),
            ]),
            ScriptCondition::all(vec![ScriptCondition::signed_by(alice.public()), ScriptCondition::after(t)]),
        ]);
        let lock_tx = signed(
            Transaction {
                inputs: vec![TxIn { output: coin, witness: Witness::default() }],
                outputs: vec![TxOut { value: 1000, lock: Lock::script(htlc) }],
                submitted_at: Timestamp::from_secs(10),
            },
            &alice,
        );
        let locked = chain.submit_tx(lock_tx).unwrap();
        let htlc_out = OutputId { txid: locked.txid, index: 0 };

        // refund before the lock time is closed
        let refund = signed(
            Transaction {
                inputs: vec![TxIn { output: htlc_out, witness: Witness::default() }],
                outputs: vec![TxOut { value: 1000, lock: Lock::to(alice.public().address()) }],
                submitted_at: Timestamp::from_secs(499),
            },
            &alice,
        );
        assert_eq!(chain.submit_tx(refund).unwrap_err(), RejectReason::ConditionUnsatisfied);

        let mut redeem = Transaction {
            inputs: vec![TxIn { output: htlc_out, witness: Witness::default().with_preimage(secret) }],
            outputs: vec![TxOut { value: 1000, lock: Lock::to(bob.public().address()) }],
            submitted_at: Timestamp::from_secs(20),
        };
        redeem = signed(redeem, &bob);
        assert!(chain.scan_revealed().is_empty());
        let accepted = chain.submit_tx(redeem.clone()).unwrap();
        assert_eq!(accepted.newly_revealed, vec![secret]);
        assert!(chain.scan_revealed().contains(&secret));
        assert_eq!(chain.submit_tx(redeem).unwrap_err(), RejectReason::DoubleSpend);
        assert_eq!(chain.address_balance(&bob.public().address()), 1000);
        assert_eq!(chain.total_value(), 1000);
        chain.revalidate_log().unwrap();
    }

    #[test]
    fn rejects_leave_chain_unchanged() {
        let Fixture { mut chain, alice, bob, coin } = fixture();
        let before = chain.total_value();
        let unknown = OutputId { txid: TxId([9; 32]), index: 0 };
        let tx = signed(
            Transaction {
                inputs: vec![TxIn { output: unknown, witness: Witness::default() }],
                outputs: vec![TxOut { value: 1, lock: Lock::to(bob.public().address()) }],
                submitted_at: Timestamp::from_secs(1),
            },
            &alice,
        );
        assert_eq!(chain.submit_tx(tx).unwrap_err(), RejectReason::UnknownOutput);

        let mismatch = signed(
            Transaction {
                inputs: vec![TxIn { output: coin, witness: Witness::default() }],
                outputs: vec![TxOut { value: 999, lock: Lock::to(bob.public().address()) }],
                submitted_at: Timestamp::from_secs(1),
            },
            &alice,
        );
        assert_eq!(chain.submit_tx(mismatch).unwrap_err(), RejectReason::ValueMismatch);

        let dup = signed(
            Transaction {
                inputs: vec![
                    TxIn { output: coin, witness: Witness::default() },
                    TxIn { output: coin, witness: Witness::default() },
                ],
                outputs: vec![TxOut { value: 2000, lock: Lock::to(bob.public().address()) }],
                submitted_at: Timestamp::from_secs(1),
            },
            &alice,
        );
        assert_eq!(chain.submit_tx(dup).unwrap_err(), RejectReason::DoubleSpend);

        let wrong_key = signed(
            Transaction {
                inputs: vec![TxIn { output: coin, witness: Witness::default() }],
                outputs: vec![TxOut { value: 1000, lock: Lock::to(bob.public().address()) }],
                submitted_at: Timestamp::from_secs(1),
            },
            &bob,
        );
        assert_eq!(chain.submit_tx(wrong_key).unwrap_err(), RejectReason::ConditionUnsatisfied);

        assert_eq!(chain.total_value(), before);
        assert_eq!(chain.log().len(), 1);
        assert!(chain.utxo(&coin).is_some());
    }
}
