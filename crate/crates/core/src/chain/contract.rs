//! The BCoin ledger: account balances plus hosted contracts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::loan::{Bid, LiquidationPayload, LoanContract, LoanError, LoanState, Receipt, SettlementSecret};
use crate::primitives::{Address, PartyId, Secret, SecretHash, Signature, SignatureScheme, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("insufficient balance")]
pub struct InsufficientBalance;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balances(BTreeMap<PartyId, u64>);

impl Balances {
    pub fn get(&self, party: PartyId) -> u64 {
        self.0.get(&party).copied().unwrap_or(0)
    }

    pub fn credit(&mut self, party: PartyId, amount: u64) {
        *self.0.entry(party).or_insert(0) += amount;
    }

    pub fn debit(&mut self, party: PartyId, amount: u64) -> Result<(), InsufficientBalance> {
        let entry = self.0.entry(party).or_insert(0);
        if *entry < amount {
            return Err(InsufficientBalance);
        }
        *entry -= amount;
        Ok(())
    }

    pub fn total(&self) -> u128 {
        self.0.values().map(|v| *v as u128).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PartyId, u64)> + '_ {
        self.0.iter().map(|(p, v)| (*p, *v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContractId(pub u32);

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Plain BCoin hash-time lock: `recipient` redeems with the preimage before
/// `expiry`, `funder` refunds from `expiry` on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashLock {
    pub funder: PartyId,
    pub recipient: PartyId,
    pub amount: u64,
    pub hash: SecretHash,
    pub expiry: Timestamp,
    pub settled: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Contract {
    Loan(Box<LoanContract>),
    Htlc(HashLock),
}

impl Contract {
    /// Value held by the contract rather than by any account.
    pub fn locked(&self) -> u64 {
        match self {
            Contract::Loan(loan) => loan.escrow(),
            Contract::Htlc(h) if !h.settled => h.amount,
            Contract::Htlc(_) => 0,
        }
    }
}

/// A BCoin contract invocation. `contract` addresses an existing contract;
/// `htlc-lock` creates one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Call {
    Fund { contract: ContractId, amount: u64 },
    Withdraw { contract: ContractId, secret_a1: Secret, secret_b1: Secret },
    RefundPrincipal { contract: ContractId, secret_b2: Secret },
    Repay { contract: ContractId, amount: u64 },
    AcceptRepayment { contract: ContractId, secret_b2: Secret },
    RefundRepayment { contract: ContractId },
    StartBidding { contract: ContractId },
    PlaceBid { contract: ContractId, amount: u64, h_c: SecretHash, acoin_address: Address },
    CloseBidding { contract: ContractId },
    ProvideSignature { contract: ContractId, payload: LiquidationPayload, signature: Signature },
    RevealSecretC { contract: ContractId, secret: Secret },
    RevealSettlementSecret { contract: ContractId, which: SettlementSecret, secret: Secret },
    RevealCounterpartySecret { contract: ContractId, secret: Secret },
    ClaimProceeds { contract: ContractId },
    RefundBid { contract: ContractId },
    HtlcLock { recipient: PartyId, amount: u64, hash: SecretHash, expiry: Timestamp },
    HtlcRedeem { contract: ContractId, secret: Secret },
    HtlcRefund { contract: ContractId },
}

impl Call {
    pub fn contract(&self) -> Option<ContractId> {
        use Call::*;
        match self {
            Fund { contract, .. }
            | Withdraw { contract, .. }
            | RefundPrincipal { contract, .. }
            | Repay { contract, .. }
            | AcceptRepayment { contract, .. }
            | RefundRepayment { contract }
            | StartBidding { contract }
            | PlaceBid { contract, .. }
            | CloseBidding { contract }
            | ProvideSignature { contract, .. }
            | RevealSecretC { contract, .. }
            | RevealSettlementSecret { contract, .. }
            | RevealCounterpartySecret { contract, .. }
            | ClaimProceeds { contract }
            | RefundBid { contract }
            | HtlcRedeem { contract, .. }
            | HtlcRefund { contract } => Some(*contract),
            HtlcLock { .. } => None,
        }
    }

    pub fn name(&self) -> &'static str {
        use Call::*;
        match self {
            Fund { .. } => "fund",
            Withdraw { .. } => "withdraw",
            RefundPrincipal { .. } => "refund-principal",
            Repay { .. } => "repay",
            AcceptRepayment { .. } => "accept-repayment",
            RefundRepayment { .. } => "refund-repayment",
            StartBidding { .. } => "start-bidding",
            PlaceBid { .. } => "place-bid",
            CloseBidding { .. } => "close-bidding",
            ProvideSignature { .. } => "provide-signature",
            RevealSecretC { .. } => "reveal-secret-c",
            RevealSettlementSecret { .. } => "reveal-settlement-secret",
            RevealCounterpartySecret { .. } => "reveal-counterparty-secret",
            ClaimProceeds { .. } => "claim-proceeds",
            RefundBid { .. } => "refund-bid",
            HtlcLock { .. } => "htlc-lock",
            HtlcRedeem { .. } => "htlc-redeem",
            HtlcRefund { .. } => "htlc-refund",
        }
    }

    /// Preimages carried as arguments.
    pub fn secrets(&self) -> Vec<Secret> {
        use Call::*;
        match self {
            Withdraw { secret_a1, secret_b1, .. } => vec![*secret_a1, *secret_b1],
            RefundPrincipal { secret_b2, .. } | AcceptRepayment { secret_b2, .. } => vec![*secret_b2],
            RevealSecretC { secret, .. }
            | RevealSettlementSecret { secret, .. }
            | RevealCounterpartySecret { secret, .. }
            | HtlcRedeem { secret, .. } => vec![*secret],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallError {
    #[error("unknown-contract")]
    UnknownContract,
    #[error("wrong-contract-kind")]
    WrongContractKind,
    #[error(transparent)]
    Loan(#[from] LoanError),
}

impl CallError {
    pub fn reason(&self) -> &'static str {
        match self {
            CallError::UnknownContract => "unknown-contract",
            CallError::WrongContractKind => "wrong-contract-kind",
            CallError::Loan(e) => e.reason(),
        }
    }
}

/// What an accepted call did, beyond balance changes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CallOutcome {
    pub created: Option<ContractId>,
    pub transition: Option<(Option<LoanState>, LoanState)>,
    pub newly_revealed: Vec<Secret>,
    pub receipt: Receipt,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContractChain {
    balances: Balances,
    contracts: BTreeMap<ContractId, Contract>,
    revealed: BTreeSet<Secret>,
    log: Vec<(PartyId, Call, Timestamp)>,
}

impl ContractChain {
    pub fn genesis(balances: Balances) -> Self {
        ContractChain { balances, ..Default::default() }
    }

    pub fn deploy(&mut self, contract: Contract) -> ContractId {
        let id = ContractId(self.contracts.len() as u32);
        self.contracts.insert(id, contract);
        id
    }

    pub fn balances(&self) -> &Balances {
        &self.balances
    }

    pub fn balance(&self, party: PartyId) -> u64 {
        self.balances.get(party)
    }

    pub fn contract(&self, id: ContractId) -> Option<&Contract> {
        self.contracts.get(&id)
    }

    pub fn loan(&self, id: ContractId) -> Option<&LoanContract> {
        match self.contracts.get(&id) {
            Some(Contract::Loan(l)) => Some(l.as_ref()),
            _ => None,
        }
    }

    pub fn htlc(&self, id: ContractId) -> Option<&HashLock> {
        match self.contracts.get(&id) {
            Some(Contract::Htlc(h)) => Some(h),
            _ => None,
        }
    }

    pub fn contracts(&self) -> impl Iterator<Item = (ContractId, &Contract)> {
        self.contracts.iter().map(|(id, c)| (*id, c))
    }

    pub fn scan_revealed(&self) -> &BTreeSet<Secret> {
        &self.revealed
    }

    pub fn log(&self) -> &[(PartyId, Call, Timestamp)] {
        &self.log
    }

    pub fn locked_total(&self) -> u128 {
        self.contracts.values().map(|c| c.locked() as u128).sum()
    }

    /// Account balances plus contract-held value.
    pub fn total_value(&self) -> u128 {
        self.balances.total() + self.locked_total()
    }

    /// Applies `call`; on error the chain is unchanged.
    pub fn call(
        &mut self,
        caller: PartyId,
        call: &Call,
        now: Timestamp,
        scheme: SignatureScheme,
    ) -> Result<CallOutcome, CallError> {
        let mut balances = self.balances.clone();
        let mut outcome = CallOutcome::default();
        match call {
            Call::HtlcLock { recipient, amount, hash, expiry } => {
                if *amount == 0 {
                    return Err(LoanError::WrongAmount { expected: 1, got: 0 }.into());
                }
                balances.debit(caller, *amount).map_err(LoanError::from)?;
                let lock = HashLock {
                    funder: caller,
                    recipient: *recipient,
                    amount: *amount,
                    hash: *hash,
                    expiry: *expiry,
                    settled: false,
                };
                outcome.created = Some(self.deploy(Contract::Htlc(lock)));
            }
            _ => {
                let id = call.contract().expect("non-creating call");
                let mut contract = self.contracts.get(&id).cloned().ok_or(CallError::UnknownContract)?;
                match &mut contract {
                    Contract::Htlc(h) => Self::htlc_call(h, &mut balances, caller, call, now)?,
                    Contract::Loan(loan) => {
                        let before = loan.state();
                        outcome.receipt = Self::loan_call(loan, &mut balances, caller, call, now, scheme)?;
                        let after = loan.state();
                        if before != after {
                            outcome.transition = after.map(|s| (before, s));
                        }
                    }
                }
                self.contracts.insert(id, contract);
            }
        }
        self.balances = balances;
        // only arguments the contract accepted as valid preimages become public
        let mut published: Vec<Secret> = outcome.receipt.revealed.iter().map(|(_, s)| *s).collect();
        if let Call::HtlcRedeem { secret, .. } = call {
            published.push(*secret);
        }
        for secret in published {
            if self.revealed.insert(secret) {
                outcome.newly_revealed.push(secret);
            }
        }
        self.log.push((caller, call.clone(), now));
        Ok(outcome)
    }

    fn htlc_call(
        h: &mut HashLock,
        balances: &mut Balances,
        caller: PartyId,
        call: &Call,
        now: Timestamp,
    ) -> Result<(), CallError> {
        if h.settled {
            return Err(LoanError::InvalidState { op: call.name(), state: "settled".into() }.into());
        }
        match call {
            Call::HtlcRedeem { secret, .. } => {
                if caller != h.recipient {
                    return Err(LoanError::Unauthorized.into());
                }
                if now >= h.expiry {
                    return Err(LoanError::TooLate.into());
                }
                if !h.hash.verify(secret) {
                    return Err(LoanError::BadPreimage.into());
                }
                balances.credit(h.recipient, h.amount);
            }
            Call::HtlcRefund { .. } => {
                if caller != h.funder {
                    return Err(LoanError::Unauthorized.into());
                }
                if now < h.expiry {
                    return Err(LoanError::TooEarly.into());
                }
                balances.credit(h.funder, h.amount);
            }
            _ => return Err(CallError::WrongContractKind),
        }
        h.settled = true;
        Ok(())
    }

    fn loan_call(
        loan: &mut LoanContract,
        ledger: &mut Balances,
        caller: PartyId,
        call: &Call,
        now: Timestamp,
        scheme: SignatureScheme,
    ) -> Result<Receipt, CallError> {
        use Call::*;
        let r = match call {
            Fund { amount, .. } => loan.fund(ledger, caller, *amount),
            Withdraw { secret_a1, secret_b1, .. } => loan.withdraw(ledger, caller, now, *secret_a1, *secret_b1),
            RefundPrincipal { secret_b2, .. } => loan.refund_principal(ledger, caller, now, *secret_b2),
            Repay { amount, .. } => loan.repay(ledger, caller, now, *amount),
            AcceptRepayment { secret_b2, .. } => loan.accept_repayment(ledger, caller, now, *secret_b2),
            RefundRepayment { .. } => loan.refund_repayment(ledger, caller, now),
            StartBidding { .. } => loan.start_bidding(caller, now),
            PlaceBid { amount, h_c, acoin_address, .. } => {
                let bid = Bid { bidder: caller, amount: *amount, h_c: *h_c, acoin_address: *acoin_address };
                loan.place_bid(ledger, caller, now, bid)
            }
            CloseBidding { .. } => loan.close_bidding(now),
            ProvideSignature { payload, signature, .. } => {
                loan.provide_signature(scheme, caller, payload.clone(), signature.clone())
            }
            RevealSecretC { secret, .. } => loan.reveal_secret_c(caller, *secret),
            RevealSettlementSecret { which, secret, .. } => loan.reveal_settlement_secret(caller, *which, *secret),
            RevealCounterpartySecret { secret, .. } => loan.reveal_counterparty_secret(caller, *secret),
            ClaimProceeds { .. } => loan.claim_proceeds(ledger, caller),
            RefundBid { .. } => loan.refund_bid(ledger, caller, now),
            HtlcLock { .. } | HtlcRedeem { .. } | HtlcRefund { .. } => return Err(CallError::WrongContractKind),
        };
        Ok(r?)
    }
}
