//! What each party owes the protocol, when a step becomes due, and the
//! transactions that carry it out.

use std::collections::BTreeSet;

use super::scenario::{bid_secret_label, RevealOrder, ScenarioConfig, ScenarioError, SWAP_SECRET};
use super::session::{AgentAction, Session};
use super::strategy::{Choice, Decider, Duty};
use crate::chain::{
    Action, Call, ContractId, HashLock, Lock, OutputId, ScriptCondition, Transaction, TxIn, TxOut, Witness,
};
use crate::collateral::{
    build_collateral_spend, build_lock_tx, build_script_spend, CollateralBranch, CollateralKind, SpendMaterial,
};
use crate::loan::{LoanContract, LoanState, LoanTerms, SettlementSecret};
use crate::primitives::{Address, Keypair, PartyId, Secret, SecretHash, Timestamp};

/// One party's window onto the session. Secrets go through [`View::secret`],
/// which refuses anything the party has no business knowing.
pub struct View<'a> {
    pub me: PartyId,
    pub session: &'a Session,
}

impl<'a> View<'a> {
    pub fn new(me: PartyId, session: &'a Session) -> Self {
        View { me, session }
    }

    fn config(&self) -> &ScenarioConfig {
        self.session.config()
    }

    fn now(&self) -> Timestamp {
        self.session.now()
    }

    /// Parties that declared collusion with `me` and that `me` declared back.
    pub fn colluders(&self) -> BTreeSet<PartyId> {
        let cfg = self.config();
        cfg.party(self.me)
            .colludes_with
            .iter()
            .copied()
            .filter(|p| cfg.party(*p).colludes_with.contains(&self.me))
            .collect()
    }

    pub fn knows(&self, label: &str) -> bool {
        let Some(entry) = self.session.resolved.secret(label) else { return false };
        if entry.owner == self.me || self.session.is_public(&entry.secret) || self.session.was_shared(self.me, label) {
            return true;
        }
        let mates = self.colluders();
        mates.contains(&entry.owner) || mates.iter().any(|m| self.session.was_shared(*m, label))
    }

    pub fn secret(&self, label: &str) -> Result<Secret, ScenarioError> {
        if !self.knows(label) {
            return Err(ScenarioError::InformationLeak { party: self.me, label: label.to_string() });
        }
        Ok(self.session.resolved.secret(label).expect("known secret exists").secret)
    }

    /// Commitments are public.
    fn hash_of(&self, label: &str) -> Option<SecretHash> {
        self.session.resolved.secret(label).map(|e| e.secret.commit())
    }

    fn is_public(&self, label: &str) -> bool {
        self.session.resolved.secret(label).is_some_and(|e| self.session.is_public(&e.secret))
    }

    fn on_acoin(&self, label: &str) -> bool {
        self.session
            .resolved
            .secret(label)
            .is_some_and(|e| self.session.world().acoin().scan_revealed().contains(&e.secret))
    }

    fn key(&self) -> &Keypair {
        &self.session.resolved.keys[&self.me]
    }

    fn address_of(&self, party: PartyId) -> Address {
        self.session.resolved.keys[&party].public().address()
    }

    fn terms(&self) -> Option<&LoanTerms> {
        self.session.resolved.terms.as_ref()
    }

    fn loan(&self) -> Option<&LoanContract> {
        self.session.loan()
    }

    fn state(&self) -> Option<LoanState> {
        self.session.loan_state()
    }

    fn in_state(&self, states: &[LoanState]) -> bool {
        self.state().is_some_and(|s| states.contains(&s))
    }

    fn call(&self, make: impl FnOnce(ContractId) -> Call) -> Option<AgentAction> {
        let id = self.session.loan_id()?;
        Some(AgentAction::Chain(Action::BCoin { call: make(id) }))
    }

    fn unspent(&self, id: OutputId) -> bool {
        self.session.world().acoin().utxo(&id).is_some()
    }

    pub fn unspent_collateral(&self) -> Vec<(OutputId, CollateralKind)> {
        self.session
            .collateral()
            .map(|c| c.both().into_iter().filter(|(id, _)| self.unspent(*id)).collect())
            .unwrap_or_default()
    }

    fn collateral_unspent(&self, kind: CollateralKind) -> bool {
        self.session.collateral().is_some_and(|c| self.unspent(c.get(kind)))
    }

    fn winner(&self) -> Option<PartyId> {
        self.loan().and_then(|l| l.highest_bid()).map(|b| b.bidder)
    }

    fn reveal_order(&self) -> RevealOrder {
        self.config().reveal_order(self.me)
    }

    /// Whether a closed auction's winning bid is worth co-signing for.
    fn bid_acceptable(&self) -> bool {
        let Some(loan) = self.loan() else { return false };
        let Some(bid) = loan.highest_bid() else { return false };
        let t = &self.config().terms;
        let (num, den) = (t.rate.num as u128, t.rate.den as u128);
        let owed = loan.terms().owed_on_liquidation() as u128;
        let bid = bid.amount as u128;
        match self.me {
            PartyId::Alice => bid.max(owed) * den >= t.refundable as u128 * num,
            PartyId::Bob => bid * den >= (owed * den).min(t.seizable as u128 * num),
            _ => false,
        }
    }

    fn my_signature_recorded(&self) -> bool {
        self.loan().is_some_and(|l| match self.me {
            PartyId::Alice => l.settlement().sig_alice.is_some(),
            PartyId::Bob => l.settlement().sig_bob.is_some(),
            _ => true,
        })
    }

    fn settlement_recorded(&self, which: SettlementSecret) -> bool {
        self.loan().is_some_and(|l| match which {
            SettlementSecret::A2 => l.settlement().secret_a2.is_some(),
            SettlementSecret::B2 => l.settlement().secret_b2.is_some(),
        })
    }

    fn swap_script(&self) -> Option<ScriptCondition> {
        let hash = self.hash_of(SWAP_SECRET)?;
        let keys = &self.session.resolved.keys;
        let (expiry_alice, _) = self.config().swap_expiries();
        Some(ScriptCondition::any(vec![
            ScriptCondition::all(vec![
                ScriptCondition::preimage(hash),
                ScriptCondition::signed_by(keys[&PartyId::Bob].public()),
            ]),
            ScriptCondition::all(vec![
                ScriptCondition::signed_by(keys[&PartyId::Alice].public()),
                ScriptCondition::after(expiry_alice),
            ]),
        ]))
    }

    /// Alice's ACoin swap lock, if she ever created it.
    fn swap_output(&self) -> Option<OutputId> {
        let lock = Lock::script(self.swap_script()?);
        self.session.world().acoin().log().iter().find_map(|tx| {
            tx.outputs
                .iter()
                .position(|o| o.lock == lock)
                .map(|index| OutputId { txid: tx.txid(), index: index as u32 })
        })
    }

    fn swap_htlc(&self) -> Option<(ContractId, &HashLock)> {
        self.session.world().bcoin().contracts().find_map(|(id, c)| match c {
            crate::chain::Contract::Htlc(h) if h.funder == PartyId::Bob => Some((id, h)),
            _ => None,
        })
    }
}

/// Whether a step is possible at all (`eager`) and whether the protocol says
/// to take it now (`ready`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Due {
    pub eager: bool,
    pub ready: bool,
}

impl Due {
    fn when(eager: bool, ready: bool) -> Due {
        Due { eager, ready: eager && ready }
    }

    fn now(cond: bool) -> Due {
        Due { eager: cond, ready: cond }
    }
}

pub fn duties_of(config: &ScenarioConfig, party: PartyId) -> Vec<Duty> {
    use super::scenario::ScenarioKind;
    use Duty::*;
    match (config.kind, party) {
        (ScenarioKind::Swap, PartyId::Alice | PartyId::Bob) => vec![SwapLock, SwapRedeem, SwapRefund],
        (ScenarioKind::Swap, _) => Vec::new(),
        (ScenarioKind::Loan, PartyId::Alice) => vec![
            LockCollateral,
            Withdraw,
            Repay,
            ReclaimCollateral,
            RefundRepayment,
            StartBidding,
            CloseBidding,
            SignLiquidation,
            RevealSettlement,
            CounterReveal,
            ClaimProceeds,
            SeizureRefund,
            LastResort,
        ],
        (ScenarioKind::Loan, PartyId::Bob) => vec![
            Fund,
            ShareB1,
            RefundPrincipal,
            AcceptRepayment,
            StartBidding,
            CloseBidding,
            SignLiquidation,
            RevealSettlement,
            CounterReveal,
            ClaimProceeds,
            Seize,
        ],
        (ScenarioKind::Loan, _) if config.party(party).bid.is_some() => {
            vec![PlaceBid, CloseBidding, RevealC, Sweep, RefundBid]
        }
        (ScenarioKind::Loan, _) => Vec::new(),
    }
}

fn settlement_of(party: PartyId) -> Option<(SettlementSecret, SettlementSecret)> {
    match party {
        PartyId::Alice => Some((SettlementSecret::A2, SettlementSecret::B2)),
        PartyId::Bob => Some((SettlementSecret::B2, SettlementSecret::A2)),
        _ => None,
    }
}

fn label(which: SettlementSecret) -> &'static str {
    match which {
        SettlementSecret::A2 => "A2",
        SettlementSecret::B2 => "B2",
    }
}

pub fn assess(v: &View, duty: Duty) -> Due {
    use LoanState::*;
    let now = v.now();
    let terms = v.terms();
    let tl = terms.map(|t| *t.timeline());
    let before = |f: fn(&crate::collateral::PeriodTimeline) -> Timestamp| tl.is_some_and(|t| now < f(&t));
    let after = |f: fn(&crate::collateral::PeriodTimeline) -> Timestamp| tl.is_some_and(|t| now >= f(&t));
    match duty {
        Duty::Fund => Due::now(v.session.loan_id().is_some() && v.state().is_none()),
        Duty::LockCollateral => {
            let eager =
                v.session.loan_id().is_some() && v.session.collateral().is_none() && before(|t| t.withdraw_deadline);
            Due::when(eager, v.in_state(&[Funded]))
        }
        Duty::ShareB1 => {
            let eager =
                v.in_state(&[Funded]) && before(|t| t.withdraw_deadline) && !v.session.was_shared(PartyId::Alice, "B1");
            Due::when(eager, v.session.collateral().is_some())
        }
        Duty::Withdraw => {
            let eager = v.in_state(&[Funded]) && v.session.collateral().is_some() && v.knows("B1");
            Due::when(eager, before(|t| t.withdraw_deadline))
        }
        Duty::RefundPrincipal => Due::now(v.in_state(&[Funded]) && after(|t| t.withdraw_deadline)),
        Duty::Repay => Due::now(v.in_state(&[Withdrawn]) && before(|t| t.loan_expiry)),
        Duty::AcceptRepayment => Due::now(v.in_state(&[Repaid]) && before(|t| t.loan_expiry)),
        Duty::RefundRepayment => Due::now(v.in_state(&[Repaid]) && after(|t| t.loan_expiry)),
        Duty::ReclaimCollateral => {
            Due::now(v.knows("B1") && v.knows("B2") && !v.unspent_collateral().is_empty() && before(|t| t.bidding_end))
        }
        Duty::StartBidding => {
            Due::now(v.in_state(&[Withdrawn]) && after(|t| t.loan_expiry) && before(|t| t.bidding_end))
        }
        Duty::PlaceBid => {
            let Some(loan) = v.loan() else { return Due::default() };
            let highest = loan.highest_bid().map_or(0, |b| b.amount);
            let eager = v.in_state(&[BiddingOpen]) && before(|t| t.bidding_end) && v.winner() != Some(v.me);
            let mine = v.config().party(v.me).bid.unwrap_or(0);
            Due::when(eager, mine > highest)
        }
        Duty::CloseBidding => Due::now(v.in_state(&[BiddingOpen]) && after(|t| t.bidding_end)),
        Duty::SignLiquidation => {
            let eager = v.in_state(&[BiddingClosed])
                && !v.my_signature_recorded()
                && v.collateral_unspent(CollateralKind::Seizable)
                && v.collateral_unspent(CollateralKind::Refundable);
            Due::when(eager, v.bid_acceptable())
        }
        Duty::RevealC => {
            let eager = v.in_state(&[BiddingClosed])
                && v.winner() == Some(v.me)
                && v.loan().is_some_and(|l| l.settlement().both_signed() && l.settlement().secret_c.is_none());
            let addressed = v
                .loan()
                .and_then(|l| l.settlement().payload.as_ref())
                .is_some_and(|p| p.destination == v.address_of(v.me));
            Due::when(eager, addressed)
        }
        Duty::RevealSettlement => {
            let Some((mine, theirs)) = settlement_of(v.me) else { return Due::default() };
            let eager = v.in_state(&[BiddingClosed])
                && v.loan().is_some_and(|l| l.settlement().secret_c.is_some())
                && !v.settlement_recorded(mine);
            Due::when(eager, v.reveal_order() == RevealOrder::RevealFirst || v.settlement_recorded(theirs))
        }
        Duty::CounterReveal => {
            let Some((_, theirs)) = settlement_of(v.me) else { return Due::default() };
            Due::now(v.in_state(&[BiddingClosed]) && !v.settlement_recorded(theirs) && v.on_acoin(label(theirs)))
        }
        Duty::Sweep => {
            let Some(reg) = v.loan().map(|l| l.settlement()) else { return Due::default() };
            let eager = v.winner() == Some(v.me)
                && reg.both_signed()
                && reg.payload.as_ref().is_some_and(|p| p.outpoints.iter().all(|o| v.unspent(*o)))
                && v.knows("A2")
                && v.knows("B2");
            Due::now(eager)
        }
        Duty::ClaimProceeds => {
            let Some(loan) = v.loan() else { return Due::default() };
            let share = match v.me {
                PartyId::Alice => loan.borrower_share(),
                PartyId::Bob => loan.lender_share(),
                _ => 0,
            };
            Due::now(v.in_state(&[Settled]) && loan.claimed(v.me).is_none() && share > 0)
        }
        Duty::RefundBid => Due::now(
            v.in_state(&[BiddingClosed])
                && v.winner() == Some(v.me)
                && terms.is_some_and(|t| now >= t.bid_settlement_deadline),
        ),
        Duty::Seize => {
            let eager = v.collateral_unspent(CollateralKind::Seizable)
                && v.knows("A1")
                && after(|t| t.bidding_end)
                && before(|t| t.seizure_end);
            let due = v.in_state(&[Withdrawn, BiddingOpen, SeizureFallback])
                || (v.in_state(&[BiddingClosed]) && terms.is_some_and(|t| now >= t.bid_settlement_deadline));
            Due::when(eager, due)
        }
        Duty::SeizureRefund => {
            let eager = v.collateral_unspent(CollateralKind::Refundable)
                && after(|t| t.bidding_end)
                && before(|t| t.seizure_end);
            let due = v.is_public("A1")
                && (!v.in_state(&[BiddingClosed, Settled]) || !v.collateral_unspent(CollateralKind::Seizable));
            Due::when(eager, due)
        }
        Duty::LastResort => {
            let eager = !v.unspent_collateral().is_empty() && after(|t| t.seizure_end);
            Due::when(eager, !v.in_state(&[Settled]))
        }
        Duty::SwapLock => swap_lock_due(v),
        Duty::SwapRedeem => match v.me {
            PartyId::Alice => {
                let (_, expiry_bob) = v.config().swap_expiries();
                Due::now(v.swap_htlc().is_some_and(|(_, h)| !h.settled) && now < expiry_bob)
            }
            _ => Due::now(v.swap_output().is_some_and(|o| v.unspent(o)) && v.is_public(SWAP_SECRET)),
        },
        Duty::SwapRefund => match v.me {
            PartyId::Alice => {
                let (expiry_alice, _) = v.config().swap_expiries();
                Due::now(v.swap_output().is_some_and(|o| v.unspent(o)) && now >= expiry_alice)
            }
            _ => Due::now(v.swap_htlc().is_some_and(|(_, h)| !h.settled && now >= h.expiry)),
        },
    }
}

fn swap_lock_due(v: &View) -> Due {
    let (_, expiry_bob) = v.config().swap_expiries();
    match v.me {
        PartyId::Alice => Due::now(v.swap_output().is_none()),
        _ => {
            let eager = v.swap_output().is_some_and(|o| v.unspent(o)) && v.swap_htlc().is_none();
            Due::when(eager, v.now() < expiry_bob)
        }
    }
}

/// Pays `value` from the party's plain outputs into `lock`, change back.
fn fund_lock(v: &View, lock: Lock, value: u64) -> Option<Transaction> {
    let key = v.key();
    let address = key.public().address();
    let mut inputs = Vec::new();
    let mut have = 0u64;
    for out in v.session.world().acoin().address_outputs(&address) {
        if have >= value {
            break;
        }
        have += out.value;
        inputs.push(TxIn { output: out.id, witness: Witness::default() });
    }
    if have < value {
        return None;
    }
    let mut outputs = vec![TxOut { value, lock }];
    if have > value {
        outputs.push(TxOut { value: have - value, lock: Lock::to(address) });
    }
    let mut tx = Transaction { inputs, outputs, submitted_at: v.now() };
    let sig = key.sign(&tx.sighash());
    for input in &mut tx.inputs {
        input.witness.signatures.push((key.public(), sig.clone()));
    }
    Some(tx)
}

fn acoin(tx: Transaction) -> AgentAction {
    AgentAction::Chain(Action::ACoin { tx })
}

fn sweep(
    v: &View,
    inputs: &[(OutputId, CollateralKind)],
    branch: CollateralBranch,
    material: SpendMaterial,
) -> Option<AgentAction> {
    let terms = v.terms()?;
    let dest = v.address_of(v.me);
    build_collateral_spend(v.session.world().acoin(), &terms.collateral, inputs, branch, &material, dest, v.now())
        .ok()
        .map(acoin)
}

/// The action carrying out `duty` with `choice`, or `None` if the party lacks
/// what it needs to even try.
pub fn build(v: &View, duty: Duty, choice: Choice) -> Result<Option<AgentAction>, ScenarioError> {
    let signer = || SpendMaterial { signers: vec![v.key().clone()], ..SpendMaterial::default() };
    let action = match duty {
        Duty::Fund => {
            let amount = v.terms().map_or(0, |t| t.principal);
            v.call(|contract| Call::Fund { contract, amount })
        }
        Duty::LockCollateral => {
            let Some(terms) = v.terms() else { return Ok(None) };
            build_lock_tx(v.session.world().acoin(), v.key(), &terms.collateral, v.now()).ok().map(acoin)
        }
        Duty::ShareB1 => {
            v.secret("B1")?;
            Some(AgentAction::Share { to: PartyId::Alice, label: "B1".into() })
        }
        Duty::Withdraw => {
            let (secret_a1, secret_b1) = (v.secret("A1")?, v.secret("B1")?);
            v.call(|contract| Call::Withdraw { contract, secret_a1, secret_b1 })
        }
        Duty::RefundPrincipal => {
            let secret_b2 = v.secret("B2")?;
            v.call(|contract| Call::RefundPrincipal { contract, secret_b2 })
        }
        Duty::Repay => {
            let amount = v.terms().map_or(0, |t| t.repayment_amount());
            v.call(|contract| Call::Repay { contract, amount })
        }
        Duty::AcceptRepayment => {
            let secret_b2 = v.secret("B2")?;
            v.call(|contract| Call::AcceptRepayment { contract, secret_b2 })
        }
        Duty::RefundRepayment => v.call(|contract| Call::RefundRepayment { contract }),
        Duty::ReclaimCollateral => {
            let material = SpendMaterial { preimages: vec![v.secret("B1")?, v.secret("B2")?], ..signer() };
            sweep(v, &v.unspent_collateral(), CollateralBranch::Repayment, material)
        }
        Duty::StartBidding => v.call(|contract| Call::StartBidding { contract }),
        Duty::PlaceBid => {
            let highest = v.loan().and_then(|l| l.highest_bid()).map_or(0, |b| b.amount);
            let amount = match choice {
                Choice::Underbid => highest + 1,
                _ => v.config().party(v.me).bid.unwrap_or(0),
            };
            let Some(h_c) = v.hash_of(&bid_secret_label(v.me)) else { return Ok(None) };
            let acoin_address = v.address_of(v.me);
            v.call(|contract| Call::PlaceBid { contract, amount, h_c, acoin_address })
        }
        Duty::CloseBidding => v.call(|contract| Call::CloseBidding { contract }),
        Duty::SignLiquidation => {
            let (Some(loan), Some(c)) = (v.loan(), v.session.collateral()) else { return Ok(None) };
            let Some(payload) = loan.expected_payload(vec![c.seizable, c.refundable]) else { return Ok(None) };
            let signature = v.key().sign(&payload.message());
            v.call(|contract| Call::ProvideSignature { contract, payload, signature })
        }
        Duty::RevealC => {
            let secret = v.secret(&bid_secret_label(v.me))?;
            v.call(|contract| Call::RevealSecretC { contract, secret })
        }
        Duty::RevealSettlement => {
            let Some((which, _)) = settlement_of(v.me) else { return Ok(None) };
            let secret = v.secret(label(which))?;
            v.call(|contract| Call::RevealSettlementSecret { contract, which, secret })
        }
        Duty::CounterReveal => {
            let Some((_, theirs)) = settlement_of(v.me) else { return Ok(None) };
            let secret = v.secret(label(theirs))?;
            v.call(|contract| Call::RevealCounterpartySecret { contract, secret })
        }
        Duty::Sweep => {
            let (Some(loan), Some(c), Some(terms)) = (v.loan(), v.session.collateral(), v.terms()) else {
                return Ok(None);
            };
            let reg = loan.settlement();
            let (Some(payload), Some(sig_a), Some(sig_b)) = (&reg.payload, &reg.sig_alice, &reg.sig_bob) else {
                return Ok(None);
            };
            let inputs: Vec<_> = payload
                .outpoints
                .iter()
                .map(|o| (*o, if *o == c.seizable { CollateralKind::Seizable } else { CollateralKind::Refundable }))
                .collect();
            let material = SpendMaterial {
                preimages: vec![v.secret("A2")?, v.secret("B2")?],
                signers: Vec::new(),
                presigned: vec![(terms.collateral.alice_pub, sig_a.clone()), (terms.collateral.bob_pub, sig_b.clone())],
            };
            build_collateral_spend(
                v.session.world().acoin(),
                &terms.collateral,
                &inputs,
                CollateralBranch::Liquidation,
                &material,
                payload.destination,
                v.now(),
            )
            .ok()
            .map(acoin)
        }
        Duty::ClaimProceeds => v.call(|contract| Call::ClaimProceeds { contract }),
        Duty::RefundBid => v.call(|contract| Call::RefundBid { contract }),
        Duty::Seize => {
            let Some(c) = v.session.collateral() else { return Ok(None) };
            let material = SpendMaterial { preimages: vec![v.secret("A1")?], ..signer() };
            sweep(v, &[(c.seizable, CollateralKind::Seizable)], CollateralBranch::Seizure, material)
        }
        Duty::SeizureRefund => {
            let Some(c) = v.session.collateral() else { return Ok(None) };
            sweep(v, &[(c.refundable, CollateralKind::Refundable)], CollateralBranch::SeizureRefund, signer())
        }
        Duty::LastResort => sweep(v, &v.unspent_collateral(), CollateralBranch::LastResort, signer()),
        Duty::SwapLock => match v.me {
            PartyId::Alice => {
                let Some(script) = v.swap_script() else { return Ok(None) };
                fund_lock(v, Lock::script(script), v.config().swap.acoin_amount).map(acoin)
            }
            _ => {
                let (_, expiry) = v.config().swap_expiries();
                let Some(hash) = v.hash_of(SWAP_SECRET) else { return Ok(None) };
                let call =
                    Call::HtlcLock { recipient: PartyId::Alice, amount: v.config().swap.bcoin_amount, hash, expiry };
                Some(AgentAction::Chain(Action::BCoin { call }))
            }
        },
        Duty::SwapRedeem => match v.me {
            PartyId::Alice => {
                let Some((contract, _)) = v.swap_htlc() else { return Ok(None) };
                let secret = v.secret(SWAP_SECRET)?;
                Some(AgentAction::Chain(Action::BCoin { call: Call::HtlcRedeem { contract, secret } }))
            }
            _ => swap_spend(v, 0, SpendMaterial { preimages: vec![v.secret(SWAP_SECRET)?], ..signer() }),
        },
        Duty::SwapRefund => match v.me {
            PartyId::Alice => swap_spend(v, 1, signer()),
            _ => {
                let Some((contract, _)) = v.swap_htlc() else { return Ok(None) };
                Some(AgentAction::Chain(Action::BCoin { call: Call::HtlcRefund { contract } }))
            }
        },
    };
    Ok(action)
}

fn swap_spend(v: &View, branch: usize, material: SpendMaterial) -> Option<AgentAction> {
    let (Some(out), Some(ScriptCondition::Any { of })) = (v.swap_output(), v.swap_script()) else { return None };
    let cond = of.get(branch)?.clone();
    build_script_spend(v.session.world().acoin(), &[(out, cond)], &material, v.address_of(v.me), v.now())
        .ok()
        .map(acoin)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Slot {
    duty: Duty,
    choice: Option<Choice>,
    done: bool,
    first_ready: Option<usize>,
    tried: Option<usize>,
}

/// When a party asks the decider instead of following the protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Consult {
    Always,
    /// Only at steps where the protocol itself leaves a choice.
    Discretionary,
}

/// A party's progress through its duties.
#[derive(Clone, Debug)]
pub struct Agent {
    pub party: PartyId,
    consult: Consult,
    slots: Vec<Slot>,
}

impl Agent {
    pub fn new(config: &ScenarioConfig, party: PartyId, consult: Consult) -> Self {
        let slots = duties_of(config, party)
            .into_iter()
            .map(|duty| Slot { duty, choice: None, done: false, first_ready: None, tried: None })
            .collect();
        Agent { party, consult, slots }
    }

    /// The next step this party takes this tick, if any. Each duty gets at
    /// most one attempt per tick.
    pub fn next(
        &mut self,
        session: &Session,
        decider: &mut dyn Decider,
        tick: usize,
    ) -> Result<Option<(Duty, AgentAction)>, ScenarioError> {
        let view = View::new(self.party, session);
        for slot in &mut self.slots {
            if slot.done || slot.tried == Some(tick) {
                continue;
            }
            let due = assess(&view, slot.duty);
            if !due.eager {
                continue;
            }
            let choice = *slot.choice.get_or_insert_with(|| match self.consult {
                Consult::Always => decider.decide(self.party, slot.duty),
                Consult::Discretionary if slot.duty.is_discretionary() => decider.decide(self.party, slot.duty),
                _ => Choice::Honest,
            });
            if due.ready && slot.first_ready.is_none() {
                slot.first_ready = Some(tick);
            }
            let act = match choice {
                Choice::Honest | Choice::Underbid => due.ready,
                Choice::Omit => false,
                Choice::Premature => true,
                Choice::Late => slot.first_ready.is_some_and(|t| t < tick),
            };
            if !act {
                continue;
            }
            if let Some(action) = build(&view, slot.duty, choice)? {
                slot.tried = Some(tick);
                return Ok(Some((slot.duty, action)));
            }
        }
        Ok(None)
    }

    pub fn completed(&mut self, duty: Duty) {
        if duty == Duty::PlaceBid {
            return;
        }
        if let Some(slot) = self.slots.iter_mut().find(|s| s.duty == duty) {
            slot.done = true;
        }
    }

    /// State that matters at a tick boundary.
    pub fn fingerprint<H: std::hash::Hasher>(&self, h: &mut H) {
        use std::hash::Hash;
        for s in &self.slots {
            // a finished step's choice no longer matters
            (s.done, (!s.done).then_some((s.choice, s.first_ready.is_some()))).hash(h);
        }
    }
}

/// Cap on actions within one tick; only a buggy agent loop gets near it.
const MAX_ACTIONS_PER_TICK: usize = 10_000;

/// Agents acting on a session over the scenario's clock schedule.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub session: Session,
    agents: Vec<Agent>,
    schedule: Vec<Timestamp>,
    tick: usize,
}

impl Simulation {
    /// Parties in `adversaries` ask the decider at every decision point; the
    /// rest only where the protocol leaves them a choice.
    pub fn new(session: Session, adversaries: &BTreeSet<PartyId>) -> Self {
        let config = session.config().clone();
        let agents = config
            .parties
            .keys()
            .map(|p| {
                Agent::new(&config, *p, if adversaries.contains(p) { Consult::Always } else { Consult::Discretionary })
            })
            .collect();
        let schedule = config.clock_schedule();
        Simulation { session, agents, schedule, tick: 0 }
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn is_done(&self) -> bool {
        self.tick >= self.schedule.len()
    }

    /// Advances to the next scheduled time and lets everyone act, round-robin
    /// one action per party per round, until a round passes with no action.
    pub fn step(&mut self, decider: &mut dyn Decider) -> Result<(), ScenarioError> {
        let Some(&to) = self.schedule.get(self.tick) else { return Ok(()) };
        self.session.advance(to)?;
        let mut actions = 0;
        loop {
            let mut any = false;
            for agent in &mut self.agents {
                if let Some((duty, action)) = agent.next(&self.session, decider, self.tick)? {
                    any = true;
                    actions += 1;
                    if self.session.apply(agent.party, &action) {
                        agent.completed(duty);
                    }
                }
            }
            if !any {
                break;
            }
            if actions > MAX_ACTIONS_PER_TICK {
                return Err(ScenarioError::Invalid("agents did not settle within a tick".into()));
            }
        }
        self.tick += 1;
        Ok(())
    }

    pub fn run(&mut self, decider: &mut dyn Decider) -> Result<(), ScenarioError> {
        while !self.is_done() {
            self.step(decider)?;
        }
        self.session.finish();
        Ok(())
    }

    pub fn fingerprint<H: std::hash::Hasher>(&self, h: &mut H) {
        self.session.fingerprint(h);
        for a in &self.agents {
            a.fingerprint(h);
        }
    }

    pub fn into_session(self) -> Session {
        self.session
    }
}
