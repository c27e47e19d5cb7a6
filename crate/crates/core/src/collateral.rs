//! The two ACoin collateral contracts and their spend paths.
//!
//! Collateral is split across two script outputs because a UTXO script cannot
//! dictate how its value is divided on spend:
//!
//! * **seizable**: the portion the lender may take with the borrower's
//!   withdrawal secret during the seizure window;
//! * **refundable**: the portion the borrower always gets back in the seizure
//!   window.
//!
//! Both share the repayment-refund, liquidation and last-resort branches.

use serde::{Deserialize, Serialize};

use crate::chain::script::{eval_condition, EvalContext, ScriptCondition, ScriptError, Witness};
use crate::chain::utxo::{Lock, OutputId, RejectReason, Transaction, TxIn, TxOut, UtxoChain};
use crate::primitives::{Address, Keypair, PublicKey, Secret, SecretHash, Signature, Timestamp};

/// Period boundaries in epoch seconds.
///
/// Loan = `[.., loan_expiry)`, bidding = `[loan_expiry, bidding_end)`,
/// seizure = `[bidding_end, seizure_end)`, refund = `[seizure_end, ..)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodTimeline {
    pub withdraw_deadline: Timestamp,
    pub loan_expiry: Timestamp,
    pub bidding_end: Timestamp,
    pub seizure_end: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Period {
    Loan,
    Bidding,
    Seizure,
    Refund,
}

impl PeriodTimeline {
    pub fn validate(&self) -> Result<(), CollateralError> {
        let ok = self.withdraw_deadline < self.loan_expiry
            && self.loan_expiry < self.bidding_end
            && self.bidding_end < self.seizure_end
            && self.seizure_end < Timestamp::MAX;
        if ok {
            Ok(())
        } else {
            Err(CollateralError::InvalidTimeline)
        }
    }

    pub fn period_at(&self, now: Timestamp) -> Period {
        if now < self.loan_expiry {
            Period::Loan
        } else if now < self.bidding_end {
            Period::Bidding
        } else if now < self.seizure_end {
            Period::Seizure
        } else {
            Period::Refund
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollateralParams {
    pub alice_pub: PublicKey,
    pub bob_pub: PublicKey,
    pub h_a1: SecretHash,
    pub h_a2: SecretHash,
    pub h_b1: SecretHash,
    pub h_b2: SecretHash,
    pub seizable_value: u64,
    pub refundable_value: u64,
    pub timeline: PeriodTimeline,
}

impl CollateralParams {
    pub fn validate(&self) -> Result<(), CollateralError> {
        if self.seizable_value == 0 || self.refundable_value == 0 {
            return Err(CollateralError::ZeroPortion);
        }
        if self.seizable_value.checked_add(self.refundable_value).is_none() {
            return Err(CollateralError::Overflow);
        }
        self.timeline.validate()
    }

    pub fn total(&self) -> u64 {
        self.seizable_value + self.refundable_value
    }

    pub fn value_of(&self, kind: CollateralKind) -> u64 {
        match kind {
            CollateralKind::Seizable => self.seizable_value,
            CollateralKind::Refundable => self.refundable_value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollateralKind {
    Seizable,
    Refundable,
}

/// Spend path selector. Position in the script's `Any` list is fixed:
/// repayment, liquidation, seizure (or seizure-refund), last resort.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollateralBranch {
    Repayment,
    Liquidation,
    Seizure,
    SeizureRefund,
    LastResort,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CollateralError {
    #[error("collateral portions must both be positive")]
    ZeroPortion,
    #[error("collateral total overflows")]
    Overflow,
    #[error("timeline boundaries out of order")]
    InvalidTimeline,
    #[error("insufficient funds: need {need}, have {have}")]
    InsufficientFunds { need: u64, have: u64 },
    #[error("branch {branch:?} does not exist on the {kind:?} output")]
    NoSuchBranch { kind: CollateralKind, branch: CollateralBranch },
    #[error("unknown collateral output {0}")]
    UnknownOutput(OutputId),
    #[error("rejected: {0}")]
    Rejected(#[from] RejectReason),
    #[error(transparent)]
    Script(#[from] ScriptError),
}

fn repayment_branch(p: &CollateralParams) -> ScriptCondition {
    ScriptCondition::all(vec![
        ScriptCondition::signed_by(p.alice_pub),
        ScriptCondition::preimage(p.h_b1),
        ScriptCondition::preimage(p.h_b2),
        // closes before any settlement-time reveal of B2 can happen
        ScriptCondition::before(p.timeline.bidding_end),
    ])
}

fn liquidation_branch(p: &CollateralParams) -> ScriptCondition {
    ScriptCondition::all(vec![
        ScriptCondition::multisig(p.alice_pub, p.bob_pub),
        ScriptCondition::preimage(p.h_a2),
        ScriptCondition::preimage(p.h_b2),
    ])
}

fn seizure_branch(p: &CollateralParams) -> ScriptCondition {
    ScriptCondition::all(vec![
        ScriptCondition::signed_by(p.bob_pub),
        ScriptCondition::preimage(p.h_a1),
        ScriptCondition::after(p.timeline.bidding_end),
        ScriptCondition::before(p.timeline.seizure_end),
    ])
}

fn seizure_refund_branch(p: &CollateralParams) -> ScriptCondition {
    ScriptCondition::all(vec![
        ScriptCondition::signed_by(p.alice_pub),
        ScriptCondition::after(p.timeline.bidding_end),
        ScriptCondition::before(p.timeline.seizure_end),
    ])
}

fn last_resort_branch(p: &CollateralParams) -> ScriptCondition {
    ScriptCondition::all(vec![ScriptCondition::signed_by(p.alice_pub), ScriptCondition::after(p.timeline.seizure_end)])
}

pub fn branch_condition(
    p: &CollateralParams,
    kind: CollateralKind,
    branch: CollateralBranch,
) -> Option<ScriptCondition> {
    use CollateralBranch::*;
    match (kind, branch) {
        (_, Repayment) => Some(repayment_branch(p)),
        (_, Liquidation) => Some(liquidation_branch(p)),
        (CollateralKind::Seizable, Seizure) => Some(seizure_branch(p)),
        (CollateralKind::Refundable, SeizureRefund) => Some(seizure_refund_branch(p)),
        (_, LastResort) => Some(last_resort_branch(p)),
        _ => None,
    }
}

pub fn branches_of(kind: CollateralKind) -> [CollateralBranch; 4] {
    use CollateralBranch::*;
    match kind {
        CollateralKind::Seizable => [Repayment, Liquidation, Seizure, LastResort],
        CollateralKind::Refundable => [Repayment, Liquidation, SeizureRefund, LastResort],
    }
}

fn build_script(p: &CollateralParams, kind: CollateralKind) -> Result<ScriptCondition, CollateralError> {
    p.validate()?;
    let branches =
        branches_of(kind).iter().map(|b| branch_condition(p, kind, *b).expect("branch listed for kind")).collect();
    let script = ScriptCondition::any(branches);
    script.validate()?;
    Ok(script)
}

pub fn build_seizable_script(p: &CollateralParams) -> Result<ScriptCondition, CollateralError> {
    build_script(p, CollateralKind::Seizable)
}

pub fn build_refundable_script(p: &CollateralParams) -> Result<ScriptCondition, CollateralError> {
    build_script(p, CollateralKind::Refundable)
}

pub fn script_for(p: &CollateralParams, kind: CollateralKind) -> Result<ScriptCondition, CollateralError> {
    build_script(p, kind)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CollateralOutputs {
    pub seizable: OutputId,
    pub refundable: OutputId,
}

impl CollateralOutputs {
    pub fn get(&self, kind: CollateralKind) -> OutputId {
        match kind {
            CollateralKind::Seizable => self.seizable,
            CollateralKind::Refundable => self.refundable,
        }
    }

    pub fn both(&self) -> [(OutputId, CollateralKind); 2] {
        [(self.seizable, CollateralKind::Seizable), (self.refundable, CollateralKind::Refundable)]
    }
}

/// Funding transaction: seizable output at index 0, refundable at 1, change after.
pub fn build_lock_tx(
    chain: &UtxoChain,
    alice: &Keypair,
    p: &CollateralParams,
    now: Timestamp,
) -> Result<Transaction, CollateralError> {
    let seizable = build_seizable_script(p)?;
    let refundable = build_refundable_script(p)?;
    let need = p.total();
    let address = alice.public().address();
    let mut inputs = Vec::new();
    let mut have = 0u64;
    for out in chain.address_outputs(&address) {
        if have >= need {
            break;
        }
        have += out.value;
        inputs.push(TxIn { output: out.id, witness: Witness::default() });
    }
    if have < need {
        return Err(CollateralError::InsufficientFunds { need, have });
    }
    let mut outputs = vec![
        TxOut { value: p.seizable_value, lock: Lock::script(seizable) },
        TxOut { value: p.refundable_value, lock: Lock::script(refundable) },
    ];
    if have > need {
        outputs.push(TxOut { value: have - need, lock: Lock::to(address) });
    }
    let mut tx = Transaction { inputs, outputs, submitted_at: now };
    let sig = alice.sign(&tx.sighash());
    for input in &mut tx.inputs {
        input.witness.signatures.push((alice.public(), sig.clone()));
    }
    Ok(tx)
}

pub fn lock_collateral(
    chain: &mut UtxoChain,
    alice: &Keypair,
    p: &CollateralParams,
    now: Timestamp,
) -> Result<CollateralOutputs, CollateralError> {
    let tx = build_lock_tx(chain, alice, p, now)?;
    let accepted = chain.submit_tx(tx)?;
    Ok(CollateralOutputs {
        seizable: OutputId { txid: accepted.txid, index: 0 },
        refundable: OutputId { txid: accepted.txid, index: 1 },
    })
}

/// Secrets and keys a spender brings. Presigned signatures come from other
/// parties (the liquidation multisig).
#[derive(Clone, Debug, Default)]
pub struct SpendMaterial {
    pub preimages: Vec<Secret>,
    pub signers: Vec<Keypair>,
    pub presigned: Vec<(PublicKey, Signature)>,
}

fn keys_in(cond: &ScriptCondition, out: &mut Vec<PublicKey>) {
    match cond {
        ScriptCondition::SignedBy { key } => out.push(*key),
        ScriptCondition::MultiSig2of2 { keys } => out.extend_from_slice(keys),
        ScriptCondition::All { of } | ScriptCondition::Any { of } => of.iter().for_each(|c| keys_in(c, out)),
        _ => {}
    }
}

/// Builds (but does not submit) a sweep of `inputs` to `destination` along
/// `branch`. Only material the branch actually needs goes into the witness.
pub fn build_collateral_spend(
    chain: &UtxoChain,
    p: &CollateralParams,
    inputs: &[(OutputId, CollateralKind)],
    branch: CollateralBranch,
    material: &SpendMaterial,
    destination: Address,
    now: Timestamp,
) -> Result<Transaction, CollateralError> {
    let mut guarded = Vec::with_capacity(inputs.len());
    for (id, kind) in inputs {
        let cond = branch_condition(p, *kind, branch).ok_or(CollateralError::NoSuchBranch { kind: *kind, branch })?;
        guarded.push((*id, cond));
    }
    build_script_spend(chain, &guarded, material, destination, now)
}

/// Sweeps script outputs to `destination`, each input witnessed for the
/// paired condition (usually one branch of the output's script).
pub fn build_script_spend(
    chain: &UtxoChain,
    inputs: &[(OutputId, ScriptCondition)],
    material: &SpendMaterial,
    destination: Address,
    now: Timestamp,
) -> Result<Transaction, CollateralError> {
    let mut total = 0u64;
    for (id, _) in inputs {
        let value = chain
            .utxo(id)
            .or_else(|| chain.history_output(id))
            .map(|o| o.value)
            .ok_or(CollateralError::UnknownOutput(*id))?;
        total += value;
    }
    let mut tx = Transaction {
        inputs: inputs.iter().map(|(id, _)| TxIn { output: *id, witness: Witness::default() }).collect(),
        outputs: vec![TxOut { value: total, lock: Lock::to(destination) }],
        submitted_at: now,
    };
    let message = tx.sighash();
    for (input, (_, cond)) in tx.inputs.iter_mut().zip(inputs) {
        let hashes = cond.hashes();
        for secret in &material.preimages {
            if hashes.contains(&secret.commit()) {
                input.witness.preimages.insert(*secret);
            }
        }
        let mut keys = Vec::new();
        keys_in(cond, &mut keys);
        for key in keys {
            if let Some(signer) = material.signers.iter().find(|k| k.public() == key) {
                input.witness.signatures.push((key, signer.sign(&message)));
            } else if let Some((_, sig)) = material.presigned.iter().find(|(k, _)| *k == key) {
                input.witness.signatures.push((key, sig.clone()));
            }
        }
    }
    Ok(tx)
}

/// Builds, checks the selected branch, and submits a collateral spend.
pub fn spend_collateral(
    chain: &mut UtxoChain,
    p: &CollateralParams,
    inputs: &[(OutputId, CollateralKind)],
    branch: CollateralBranch,
    material: &SpendMaterial,
    destination: Address,
    now: Timestamp,
) -> Result<crate::chain::utxo::TxId, CollateralError> {
    let tx = build_collateral_spend(chain, p, inputs, branch, material, destination, now)?;
    let message = tx.sighash();
    for ((_, kind), input) in inputs.iter().zip(&tx.inputs) {
        let cond = branch_condition(p, *kind, branch).expect("checked in build");
        let ctx = EvalContext { witness: &input.witness, message: &message, scheme: chain.scheme(), now };
        if !eval_condition(&cond, &ctx) {
            return Err(CollateralError::Rejected(RejectReason::ConditionUnsatisfied));
        }
    }
    Ok(chain.submit_tx(tx)?.txid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{generate_secret, SecretRng, SignatureScheme};

    struct Setup {
        chain: UtxoChain,
        p: CollateralParams,
        alice: Keypair,
        bob: Keypair,
        charlie: Keypair,
        a1: Secret,
        a2: Secret,
        b1: Secret,
        b2: Secret,
    }

    fn ts(t: u64) -> Timestamp {
        Timestamp::from_secs(t)
    }

    fn setup(funds: u64) -> Setup {
        let mut rng = SecretRng::from_seed(21);
        let scheme = SignatureScheme::Ed25519;
        let alice = Keypair::generate(scheme, &mut rng);
        let bob = Keypair::generate(scheme, &mut rng);
        let charlie = Keypair::generate(scheme, &mut rng);
        let [a1, a2, b1, b2] = std::array::from_fn(|_| generate_secret(&mut rng));
        let p = CollateralParams {
            alice_pub: alice.public(),
            bob_pub: bob.public(),
            h_a1: a1.commit(),
            h_a2: a2.commit(),
            h_b1: b1.commit(),
            h_b2: b2.commit(),
            seizable_value: 6000,
            refundable_value: 9000,
            timeline: PeriodTimeline {
                withdraw_deadline: ts(100),
                loan_expiry: ts(1000),
                bidding_end: ts(2000),
                seizure_end: ts(3000),
            },
        };
        let chain = UtxoChain::genesis(scheme, vec![TxOut { value: funds, lock: Lock::to(alice.public().address()) }]);
        Setup { chain, p, alice, bob, charlie, a1, a2, b1, b2 }
    }

    fn material(secrets: &[Secret], signers: &[&Keypair]) -> SpendMaterial {
        SpendMaterial {
            preimages: secrets.to_vec(),
            signers: signers.iter().map(|k| (*k).clone()).collect(),
            presigned: vec![],
        }
    }

    #[test]
    fn lock_splits_collateral_and_conserves_value() {
        let mut s = setup(15000);
        let outs = lock_collateral(&mut s.chain, &s.alice, &s.p, ts(1)).unwrap();
        assert_eq!(s.chain.utxo(&outs.seizable).unwrap().value, 6000);
        assert_eq!(s.chain.utxo(&outs.refundable).unwrap().value, 9000);
        assert_eq!(s.chain.total_value(), 15000);

        let mut s = setup(20000);
        lock_collateral(&mut s.chain, &s.alice, &s.p, ts(1)).unwrap();
        assert_eq!(s.chain.address_balance(&s.alice.public().address()), 5000);

        let mut s = setup(1000);
        assert_eq!(
            lock_collateral(&mut s.chain, &s.alice, &s.p, ts(1)).unwrap_err(),
            CollateralError::InsufficientFunds { need: 15000, have: 1000 }
        );
    }

    #[test]
    fn zero_portion_is_a_construction_error() {
        let mut s = setup(15000);
        s.p.seizable_value = 0;
        assert_eq!(build_seizable_script(&s.p).unwrap_err(), CollateralError::ZeroPortion);
    }

    #[test]
    fn scripts_have_four_branches() {
        let s = setup(15000);
        for script in [build_seizable_script(&s.p).unwrap(), build_refundable_script(&s.p).unwrap()] {
            match script {
                ScriptCondition::Any { of } => assert_eq!(of.len(), 4),
                other => panic!("expected Any, got {other:?}"),
            }
        }
    }

    #[test]
    fn repayment_refund_after_learning_b2() {
        let mut s = setup(15000);
        let outs = lock_collateral(&mut s.chain, &s.alice, &s.p, ts(1)).unwrap();
        let dest = s.alice.public().address();
        // B2 not known yet: branch closed
        let err = spend_collateral(
            &mut s.chain,
            &s.p,
            &outs.both(),
            CollateralBranch::Repayment,
            &material(&[s.b1], &[&s.alice]),
            dest,
            ts(500),
        )
        .unwrap_err();
        assert_eq!(err, CollateralError::Rejected(RejectReason::ConditionUnsatisfied));
        spend_collateral(
            &mut s.chain,
            &s.p,
            &outs.both(),
            CollateralBranch::Repayment,
            &material(&[s.b1, s.b2], &[&s.alice]),
            dest,
            ts(500),
        )
        .unwrap();
        assert_eq!(s.chain.address_balance(&dest), 15000);
    }

    #[test]
    fn seizure_closed_during_bidding_and_needs_a1() {
        let mut s = setup(15000);
        let outs = lock_collateral(&mut s.chain, &s.alice, &s.p, ts(1)).unwrap();
        let seiz = [(outs.seizable, CollateralKind::Seizable)];
        let bob_dest = s.bob.public().address();
        let at_expiry = spend_collateral(
            &mut s.chain,
            &s.p,
            &seiz,
            CollateralBranch::Seizure,
            &material(&[s.a1], &[&s.bob]),
            bob_dest,
            s.p.timeline.loan_expiry,
        );
        assert!(at_expiry.is_err());
        // wrong preimage
        let wrong = spend_collateral(
            &mut s.chain,
            &s.p,
            &seiz,
            CollateralBranch::Seizure,
            &material(&[s.a2], &[&s.bob]),
            bob_dest,
            ts(2000),
        );
        assert_eq!(wrong.unwrap_err(), CollateralError::Rejected(RejectReason::ConditionUnsatisfied));
        spend_collateral(
            &mut s.chain,
            &s.p,
            &seiz,
            CollateralBranch::Seizure,
            &material(&[s.a1], &[&s.bob]),
            bob_dest,
            ts(2000),
        )
        .unwrap();
        // Alice refunds her portion in the same window
        let refund = [(outs.refundable, CollateralKind::Refundable)];
        spend_collateral(
            &mut s.chain,
            &s.p,
            &refund,
            CollateralBranch::SeizureRefund,
            &material(&[], &[&s.alice]),
            s.alice.public().address(),
            ts(2000),
        )
        .unwrap();
        assert_eq!(s.chain.address_balance(&bob_dest), 6000);
        assert_eq!(s.chain.address_balance(&s.alice.public().address()), 9000);
        assert!(s.chain.scan_revealed().contains(&s.a1));
    }

    #[test]
    fn liquidation_with_both_signatures_and_secrets() {
        let mut s = setup(15000);
        let outs = lock_collateral(&mut s.chain, &s.alice, &s.p, ts(1)).unwrap();
        let dest = s.charlie.public().address();
        let probe = build_collateral_spend(
            &s.chain,
            &s.p,
            &outs.both(),
            CollateralBranch::Liquidation,
            &SpendMaterial::default(),
            dest,
            ts(0),
        )
        .unwrap();
        let msg = probe.sighash();
        let presigned = vec![(s.alice.public(), s.alice.sign(&msg)), (s.bob.public(), s.bob.sign(&msg))];
        for now in [ts(5), ts(2500), ts(90_000)] {
            let mut chain = s.chain.clone();
            let m = SpendMaterial { preimages: vec![s.a2, s.b2], signers: vec![], presigned: presigned.clone() };
            spend_collateral(&mut chain, &s.p, &outs.both(), CollateralBranch::Liquidation, &m, dest, now).unwrap();
            assert!(chain.scan_revealed().contains(&s.a2) && chain.scan_revealed().contains(&s.b2));
            assert_eq!(chain.address_balance(&dest), 15000);
        }
        // a signature over a different destination does not work
        let m = SpendMaterial { preimages: vec![s.a2, s.b2], signers: vec![], presigned };
        let err = spend_collateral(
            &mut s.chain,
            &s.p,
            &outs.both(),
            CollateralBranch::Liquidation,
            &m,
            s.bob.public().address(),
            ts(5),
        );
        assert!(err.is_err());
    }

    #[test]
    fn refundable_has_no_bob_only_branch() {
        let mut s = setup(15000);
        let outs = lock_collateral(&mut s.chain, &s.alice, &s.p, ts(1)).unwrap();
        let refund = [(outs.refundable, CollateralKind::Refundable)];
        let all_secrets = [s.a1, s.a2, s.b1, s.b2];
        for branch in branches_of(CollateralKind::Refundable) {
            for now in [ts(5), ts(1500), ts(2500), ts(3500)] {
                let r = spend_collateral(
                    &mut s.chain,
                    &s.p,
                    &refund,
                    branch,
                    &material(&all_secrets, &[&s.bob]),
                    s.bob.public().address(),
                    now,
                );
                assert!(r.is_err(), "{branch:?} at {now}");
            }
        }
        assert_eq!(
            spend_collateral(
                &mut s.chain,
                &s.p,
                &refund,
                CollateralBranch::Seizure,
                &material(&[], &[&s.bob]),
                s.bob.public().address(),
                ts(2500)
            ),
            Err(CollateralError::NoSuchBranch { kind: CollateralKind::Refundable, branch: CollateralBranch::Seizure })
        );
    }

    #[test]
    fn last_resort_opens_at_seizure_end() {
        let mut s = setup(15000);
        let outs = lock_collateral(&mut s.chain, &s.alice, &s.p, ts(1)).unwrap();
        let dest = s.alice.public().address();
        let m = material(&[], &[&s.alice]);
        assert!(spend_collateral(&mut s.chain, &s.p, &outs.both(), CollateralBranch::LastResort, &m, dest, ts(2999))
            .is_err());
        spend_collateral(&mut s.chain, &s.p, &outs.both(), CollateralBranch::LastResort, &m, dest, ts(3000)).unwrap();
        assert_eq!(s.chain.address_balance(&dest), 15000);
    }

    #[test]
    fn seizure_and_last_resort_never_both_live() {
        let s = setup(15000);
        let seize = branch_condition(&s.p, CollateralKind::Seizable, CollateralBranch::Seizure).unwrap();
        let refund = branch_condition(&s.p, CollateralKind::Refundable, CollateralBranch::SeizureRefund).unwrap();
        let last = branch_condition(&s.p, CollateralKind::Seizable, CollateralBranch::LastResort).unwrap();
        for now in (0..=4000).step_by(7).chain([1999, 2000, 2999, 3000]) {
            let now = ts(now);
            assert!(!(seize.time_live(now) && last.time_live(now)), "{now}");
            assert!(!(refund.time_live(now) && last.time_live(now)), "{now}");
        }
    }
}
