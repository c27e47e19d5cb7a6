//! BCoin-side loan contract: principal escrow, withdrawal, repayment, the
//! liquidation auction and the settlement registry.
//!
//! One [`LoanContract`] value per loan. Every operation takes the account
//! [`Balances`] of the hosting chain and the current time; on error nothing is
//! mutated.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chain::contract::{Balances, InsufficientBalance};
use crate::chain::utxo::{spend_message, Lock, OutputId, TxOut};
use crate::collateral::{CollateralError, CollateralParams, PeriodTimeline};
use crate::primitives::{
    verify, Address, PartyId, PublicKey, Secret, SecretHash, Signature, SignatureScheme, Timestamp,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoanTerms {
    pub borrower: PartyId,
    pub lender: PartyId,
    pub principal: u64,
    pub interest: u64,
    pub liquidation_fee: u64,
    pub collateral: CollateralParams,
    pub bid_settlement_deadline: Timestamp,
}

impl LoanTerms {
    pub fn timeline(&self) -> &PeriodTimeline {
        &self.collateral.timeline
    }

    pub fn repayment_amount(&self) -> u64 {
        self.principal + self.interest
    }

    pub fn owed_on_liquidation(&self) -> u64 {
        self.principal + self.interest + self.liquidation_fee
    }

    pub fn validate(&self) -> Result<(), LoanError> {
        self.collateral.validate().map_err(LoanError::Collateral)?;
        if self.principal == 0 || self.borrower == self.lender {
            return Err(LoanError::InvalidTerms);
        }
        self.principal
            .checked_add(self.interest)
            .and_then(|v| v.checked_add(self.liquidation_fee))
            .ok_or(LoanError::InvalidTerms)?;
        let t = self.timeline();
        if self.bid_settlement_deadline < t.bidding_end || self.bid_settlement_deadline >= t.seizure_end {
            return Err(LoanError::InvalidTerms);
        }
        Ok(())
    }

    fn pubkey_of(&self, party: PartyId) -> Option<PublicKey> {
        if party == self.borrower {
            Some(self.collateral.alice_pub)
        } else if party == self.lender {
            Some(self.collateral.bob_pub)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoanState {
    Funded,
    Withdrawn,
    Repaid,
    Closed,
    PrincipalRefunded,
    BiddingOpen,
    BiddingClosed,
    Settled,
    SeizureFallback,
}

impl LoanState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            LoanState::Closed | LoanState::PrincipalRefunded | LoanState::Settled | LoanState::SeizureFallback
        )
    }
}

impl fmt::Display for LoanState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("state serializes");
        f.write_str(s.as_str().expect("unit variant"))
    }
}

/// Named loan secrets, as used in the registry and in trace labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LoanSecret {
    A1,
    A2,
    B1,
    B2,
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SettlementSecret {
    A2,
    B2,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bid {
    pub bidder: PartyId,
    pub amount: u64,
    pub h_c: SecretHash,
    pub acoin_address: Address,
}

/// What Alice and Bob co-sign: the sweep of both collateral outputs to the
/// winning bidder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiquidationPayload {
    pub outpoints: Vec<OutputId>,
    pub destination: Address,
    pub value: u64,
}

impl LiquidationPayload {
    pub fn message(&self) -> Vec<u8> {
        spend_message(&self.outpoints, &[TxOut { value: self.value, lock: Lock::to(self.destination) }])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementRegistry {
    pub payload: Option<LiquidationPayload>,
    pub sig_alice: Option<Signature>,
    pub sig_bob: Option<Signature>,
    pub secret_c: Option<Secret>,
    pub secret_a2: Option<Secret>,
    pub secret_b2: Option<Secret>,
}

impl SettlementRegistry {
    pub fn both_signed(&self) -> bool {
        self.sig_alice.is_some() && self.sig_bob.is_some()
    }

    pub fn both_settlement_secrets(&self) -> bool {
        self.secret_a2.is_some() && self.secret_b2.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoanError {
    #[error("invalid-state: {op} not allowed in {state}")]
    InvalidState { op: &'static str, state: String },
    #[error("wrong-amount: expected {expected}, got {got}")]
    WrongAmount { expected: u64, got: u64 },
    #[error("insufficient-balance")]
    InsufficientBalance,
    #[error("bad-preimage")]
    BadPreimage,
    #[error("too-late")]
    TooLate,
    #[error("too-early")]
    TooEarly,
    #[error("unauthorized")]
    Unauthorized,
    #[error("bid-too-low: must exceed {floor}")]
    BidTooLow { floor: u64 },
    #[error("invalid-signature")]
    InvalidSignature,
    #[error("missing-signatures")]
    MissingSignatures,
    #[error("secret-c-not-revealed")]
    SecretCNotRevealed,
    #[error("already-claimed")]
    AlreadyClaimed,
    #[error("already-settled")]
    AlreadySettled,
    #[error("invalid-terms")]
    InvalidTerms,
    #[error("collateral: {0}")]
    Collateral(CollateralError),
}

impl From<InsufficientBalance> for LoanError {
    fn from(_: InsufficientBalance) -> Self {
        LoanError::InsufficientBalance
    }
}

impl LoanError {
    /// Stable kebab-case reason for traces.
    pub fn reason(&self) -> &'static str {
        match self {
            LoanError::InvalidState { .. } => "invalid-state",
            LoanError::WrongAmount { .. } => "wrong-amount",
            LoanError::InsufficientBalance => "insufficient-balance",
            LoanError::BadPreimage => "bad-preimage",
            LoanError::TooLate => "too-late",
            LoanError::TooEarly => "too-early",
            LoanError::Unauthorized => "unauthorized",
            LoanError::BidTooLow { .. } => "bid-too-low",
            LoanError::InvalidSignature => "invalid-signature",
            LoanError::MissingSignatures => "missing-signatures",
            LoanError::SecretCNotRevealed => "secret-c-not-revealed",
            LoanError::AlreadyClaimed => "already-claimed",
            LoanError::AlreadySettled => "already-settled",
            LoanError::InvalidTerms => "invalid-terms",
            LoanError::Collateral(_) => "invalid-collateral",
        }
    }
}

/// Side effects of an accepted operation that the chain reports.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Receipt {
    pub revealed: Vec<(LoanSecret, Secret)>,
    pub bid: Option<Bid>,
    pub displaced: Option<(PartyId, u64)>,
    pub claim: Option<(PartyId, u64)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoanContract {
    terms: LoanTerms,
    state: Option<LoanState>,
    escrow: u64,
    disclosed: BTreeMap<LoanSecret, Secret>,
    highest_bid: Option<Bid>,
    settlement: SettlementRegistry,
    claimed: BTreeMap<PartyId, u64>,
}

impl LoanContract {
    pub fn new(terms: LoanTerms) -> Result<Self, LoanError> {
        terms.validate()?;
        Ok(LoanContract {
            terms,
            state: None,
            escrow: 0,
            disclosed: BTreeMap::new(),
            highest_bid: None,
            settlement: SettlementRegistry::default(),
            claimed: BTreeMap::new(),
        })
    }

    pub fn terms(&self) -> &LoanTerms {
        &self.terms
    }

    /// `None` until the lender funds.
    pub fn state(&self) -> Option<LoanState> {
        self.state
    }

    pub fn escrow(&self) -> u64 {
        self.escrow
    }

    pub fn highest_bid(&self) -> Option<&Bid> {
        self.highest_bid.as_ref()
    }

    pub fn settlement(&self) -> &SettlementRegistry {
        &self.settlement
    }

    pub fn disclosed(&self, which: LoanSecret) -> Option<Secret> {
        self.disclosed.get(&which).copied()
    }

    pub fn claimed(&self, party: PartyId) -> Option<u64> {
        self.claimed.get(&party).copied()
    }

    pub fn lender_share(&self) -> u64 {
        let stake = self.highest_bid.as_ref().map_or(0, |b| b.amount);
        stake.min(self.terms.owed_on_liquidation())
    }

    pub fn borrower_share(&self) -> u64 {
        let stake = self.highest_bid.as_ref().map_or(0, |b| b.amount);
        stake - self.lender_share()
    }

    fn expect_state(&self, op: &'static str, allowed: &[LoanState]) -> Result<LoanState, LoanError> {
        match self.state {
            Some(s) if allowed.contains(&s) => Ok(s),
            other => Err(LoanError::InvalidState {
                op,
                state: other.map_or_else(|| "unfunded".to_string(), |s| s.to_string()),
            }),
        }
    }

    fn check_preimage(hash: &SecretHash, secret: &Secret) -> Result<(), LoanError> {
        if hash.verify(secret) {
            Ok(())
        } else {
            Err(LoanError::BadPreimage)
        }
    }

    fn disclose(&mut self, receipt: &mut Receipt, which: LoanSecret, secret: Secret) {
        if self.disclosed.insert(which, secret).is_none() {
            receipt.revealed.push((which, secret));
        }
    }

    pub fn fund(&mut self, ledger: &mut Balances, caller: PartyId, amount: u64) -> Result<Receipt, LoanError> {
        if self.state.is_some() {
            return Err(self.expect_state("fund", &[]).unwrap_err());
        }
        if caller != self.terms.lender {
            return Err(LoanError::Unauthorized);
        }
        if amount != self.terms.principal {
            return Err(LoanError::WrongAmount { expected: self.terms.principal, got: amount });
        }
        ledger.debit(caller, amount)?;
        self.escrow = amount;
        self.state = Some(LoanState::Funded);
        Ok(Receipt::default())
    }

    pub fn withdraw(
        &mut self,
        ledger: &mut Balances,
        caller: PartyId,
        now: Timestamp,
        secret_a1: Secret,
        secret_b1: Secret,
    ) -> Result<Receipt, LoanError> {
        self.expect_state("withdraw", &[LoanState::Funded])?;
        if caller != self.terms.borrower {
            return Err(LoanError::Unauthorized);
        }
        if now >= self.terms.timeline().withdraw_deadline {
            return Err(LoanError::TooLate);
        }
        Self::check_preimage(&self.terms.collateral.h_b1, &secret_b1)?;
        Self::check_preimage(&self.terms.collateral.h_a1, &secret_a1)?;
        ledger.credit(caller, self.escrow);
        self.escrow = 0;
        self.state = Some(LoanState::Withdrawn);
        let mut receipt = Receipt::default();
        self.disclose(&mut receipt, LoanSecret::A1, secret_a1);
        self.disclose(&mut receipt, LoanSecret::B1, secret_b1);
        Ok(receipt)
    }

    pub fn refund_principal(
        &mut self,
        ledger: &mut Balances,
        caller: PartyId,
        now: Timestamp,
        secret_b2: Secret,
    ) -> Result<Receipt, LoanError> {
        self.expect_state("refund-principal", &[LoanState::Funded])?;
        if caller != self.terms.lender {
            return Err(LoanError::Unauthorized);
        }
        if now < self.terms.timeline().withdraw_deadline {
            return Err(LoanError::TooEarly);
        }
        Self::check_preimage(&self.terms.collateral.h_b2, &secret_b2)?;
        ledger.credit(caller, self.escrow);
        self.escrow = 0;
        self.state = Some(LoanState::PrincipalRefunded);
        let mut receipt = Receipt::default();
        self.disclose(&mut receipt, LoanSecret::B2, secret_b2);
        Ok(receipt)
    }

    pub fn repay(
        &mut self,
        ledger: &mut Balances,
        caller: PartyId,
        now: Timestamp,
        amount: u64,
    ) -> Result<Receipt, LoanError> {
        self.expect_state("repay", &[LoanState::Withdrawn])?;
        if caller != self.terms.borrower {
            return Err(LoanError::Unauthorized);
        }
        if now >= self.terms.timeline().loan_expiry {
            return Err(LoanError::TooLate);
        }
        let expected = self.terms.repayment_amount();
        if amount != expected {
            return Err(LoanError::WrongAmount { expected, got: amount });
        }
        ledger.debit(caller, amount)?;
        self.escrow = amount;
        self.state = Some(LoanState::Repaid);
        Ok(Receipt::default())
    }

    /// Lender takes the repayment, disclosing B2. Open only during the loan
    /// period so the borrower keeps the whole bidding period to refund collateral.
    pub fn accept_repayment(
        &mut self,
        ledger: &mut Balances,
        caller: PartyId,
        now: Timestamp,
        secret_b2: Secret,
    ) -> Result<Receipt, LoanError> {
        self.expect_state("accept-repayment", &[LoanState::Repaid])?;
        if caller != self.terms.lender {
            return Err(LoanError::Unauthorized);
        }
        if now >= self.terms.timeline().loan_expiry {
            return Err(LoanError::TooLate);
        }
        Self::check_preimage(&self.terms.collateral.h_b2, &secret_b2)?;
        ledger.credit(caller, self.escrow);
        self.escrow = 0;
        self.state = Some(LoanState::Closed);
        let mut receipt = Receipt::default();
        self.disclose(&mut receipt, LoanSecret::B2, secret_b2);
        Ok(receipt)
    }

    /// Repayment lock ran out without the lender accepting: the borrower takes
    /// the repayment back and the lender is left with seizure.
    pub fn refund_repayment(
        &mut self,
        ledger: &mut Balances,
        caller: PartyId,
        now: Timestamp,
    ) -> Result<Receipt, LoanError> {
        self.expect_state("refund-repayment", &[LoanState::Repaid])?;
        if caller != self.terms.borrower {
            return Err(LoanError::Unauthorized);
        }
        if now < self.terms.timeline().loan_expiry {
            return Err(LoanError::TooEarly);
        }
        ledger.credit(caller, self.escrow);
        self.escrow = 0;
        self.state = Some(LoanState::SeizureFallback);
        Ok(Receipt::default())
    }

    pub fn start_bidding(&mut self, caller: PartyId, now: Timestamp) -> Result<Receipt, LoanError> {
        if caller != self.terms.borrower && caller != self.terms.lender {
            return Err(LoanError::Unauthorized);
        }
        // a repaid loan is never auctioned
        self.expect_state("start-bidding", &[LoanState::Withdrawn])?;
        if now < self.terms.timeline().loan_expiry {
            return Err(LoanError::TooEarly);
        }
        self.state = Some(LoanState::BiddingOpen);
        Ok(Receipt::default())
    }

    pub fn place_bid(
        &mut self,
        ledger: &mut Balances,
        caller: PartyId,
        now: Timestamp,
        bid: Bid,
    ) -> Result<Receipt, LoanError> {
        self.expect_state("place-bid", &[LoanState::BiddingOpen])?;
        if bid.bidder != caller {
            return Err(LoanError::Unauthorized);
        }
        if now >= self.terms.timeline().bidding_end {
            return Err(LoanError::TooLate);
        }
        let floor = self.highest_bid.as_ref().map_or(0, |b| b.amount);
        if bid.amount <= floor {
            return Err(LoanError::BidTooLow { floor });
        }
        ledger.debit(caller, bid.amount)?;
        let mut receipt = Receipt::default();
        if let Some(prev) = self.highest_bid.take() {
            ledger.credit(prev.bidder, prev.amount);
            receipt.displaced = Some((prev.bidder, prev.amount));
        }
        self.escrow = bid.amount;
        receipt.bid = Some(bid.clone());
        self.highest_bid = Some(bid);
        Ok(receipt)
    }

    pub fn close_bidding(&mut self, now: Timestamp) -> Result<Receipt, LoanError> {
        self.expect_state("close-bidding", &[LoanState::BiddingOpen])?;
        if now < self.terms.timeline().bidding_end {
            return Err(LoanError::TooEarly);
        }
        self.state =
            Some(if self.highest_bid.is_some() { LoanState::BiddingClosed } else { LoanState::SeizureFallback });
        Ok(Receipt::default())
    }

    /// Expected co-signed payload given the collateral outpoints.
    pub fn expected_payload(&self, outpoints: Vec<OutputId>) -> Option<LiquidationPayload> {
        let winner = self.highest_bid.as_ref()?;
        Some(LiquidationPayload { outpoints, destination: winner.acoin_address, value: self.terms.collateral.total() })
    }

    pub fn provide_signature(
        &mut self,
        scheme: SignatureScheme,
        caller: PartyId,
        payload: LiquidationPayload,
        signature: Signature,
    ) -> Result<Receipt, LoanError> {
        self.expect_state("provide-signature", &[LoanState::BiddingClosed])?;
        let key = self.terms.pubkey_of(caller).ok_or(LoanError::Unauthorized)?;
        let winner = self.highest_bid.as_ref().expect("bidding closed with a winner");
        let consistent = payload.destination == winner.acoin_address
            && payload.value == self.terms.collateral.total()
            && payload.outpoints.len() == 2
            && payload.outpoints[0] != payload.outpoints[1]
            && self.settlement.payload.as_ref().is_none_or(|p| *p == payload);
        if !consistent || !verify(scheme, &key, &payload.message(), &signature) {
            return Err(LoanError::InvalidSignature);
        }
        if caller == self.terms.borrower {
            self.settlement.sig_alice = Some(signature);
        } else {
            self.settlement.sig_bob = Some(signature);
        }
        self.settlement.payload = Some(payload);
        Ok(Receipt::default())
    }

    pub fn reveal_secret_c(&mut self, caller: PartyId, secret_c: Secret) -> Result<Receipt, LoanError> {
        self.expect_state("reveal-secret-c", &[LoanState::BiddingClosed])?;
        let winner = self.highest_bid.as_ref().expect("bidding closed with a winner");
        if caller != winner.bidder {
            return Err(LoanError::Unauthorized);
        }
        if !self.settlement.both_signed() {
            return Err(LoanError::MissingSignatures);
        }
        Self::check_preimage(&winner.h_c, &secret_c)?;
        self.settlement.secret_c = Some(secret_c);
        let mut receipt = Receipt::default();
        self.disclose(&mut receipt, LoanSecret::C, secret_c);
        Ok(receipt)
    }

    fn record_settlement(&mut self, receipt: &mut Receipt, which: SettlementSecret, secret: Secret) {
        match which {
            SettlementSecret::A2 => {
                self.settlement.secret_a2 = Some(secret);
                self.disclose(receipt, LoanSecret::A2, secret);
            }
            SettlementSecret::B2 => {
                self.settlement.secret_b2 = Some(secret);
                self.disclose(receipt, LoanSecret::B2, secret);
            }
        }
        if self.settlement.both_settlement_secrets() {
            self.state = Some(LoanState::Settled);
        }
    }

    pub fn reveal_settlement_secret(
        &mut self,
        caller: PartyId,
        which: SettlementSecret,
        secret: Secret,
    ) -> Result<Receipt, LoanError> {
        self.expect_state("reveal-settlement-secret", &[LoanState::BiddingClosed])?;
        let owner = match which {
            SettlementSecret::A2 => self.terms.borrower,
            SettlementSecret::B2 => self.terms.lender,
        };
        if caller != owner {
            return Err(LoanError::Unauthorized);
        }
        if self.settlement.secret_c.is_none() {
            return Err(LoanError::SecretCNotRevealed);
        }
        let hash = match which {
            SettlementSecret::A2 => self.terms.collateral.h_a2,
            SettlementSecret::B2 => self.terms.collateral.h_b2,
        };
        Self::check_preimage(&hash, &secret)?;
        let mut receipt = Receipt::default();
        self.record_settlement(&mut receipt, which, secret);
        Ok(receipt)
    }

    /// Records a settlement secret that the caller learned elsewhere (typically
    /// by scanning ACoin after a double agent swept the collateral).
    pub fn reveal_counterparty_secret(&mut self, caller: PartyId, secret: Secret) -> Result<Receipt, LoanError> {
        self.expect_state("reveal-counterparty-secret", &[LoanState::BiddingClosed])?;
        if caller != self.terms.borrower && caller != self.terms.lender {
            return Err(LoanError::Unauthorized);
        }
        let which = if self.terms.collateral.h_a2.verify(&secret) {
            SettlementSecret::A2
        } else if self.terms.collateral.h_b2.verify(&secret) {
            SettlementSecret::B2
        } else {
            return Err(LoanError::BadPreimage);
        };
        let mut receipt = Receipt::default();
        self.record_settlement(&mut receipt, which, secret);
        Ok(receipt)
    }

    pub fn claim_proceeds(&mut self, ledger: &mut Balances, caller: PartyId) -> Result<Receipt, LoanError> {
        self.expect_state("claim-proceeds", &[LoanState::Settled])?;
        let amount = if caller == self.terms.lender {
            self.lender_share()
        } else if caller == self.terms.borrower {
            self.borrower_share()
        } else {
            return Err(LoanError::Unauthorized);
        };
        if self.claimed.contains_key(&caller) {
            return Err(LoanError::AlreadyClaimed);
        }
        self.claimed.insert(caller, amount);
        self.escrow -= amount;
        ledger.credit(caller, amount);
        Ok(Receipt { claim: Some((caller, amount)), ..Receipt::default() })
    }

    pub fn refund_bid(&mut self, ledger: &mut Balances, caller: PartyId, now: Timestamp) -> Result<Receipt, LoanError> {
        if self.state == Some(LoanState::Settled) {
            return Err(LoanError::AlreadySettled);
        }
        self.expect_state("refund-bid", &[LoanState::BiddingClosed])?;
        let winner = self.highest_bid.as_ref().expect("bidding closed with a winner");
        if caller != winner.bidder {
            return Err(LoanError::Unauthorized);
        }
        if now < self.terms.bid_settlement_deadline {
            return Err(LoanError::TooEarly);
        }
        ledger.credit(caller, self.escrow);
        let refunded = self.escrow;
        self.escrow = 0;
        self.state = Some(LoanState::SeizureFallback);
        Ok(Receipt { displaced: Some((caller, refunded)), ..Receipt::default() })
    }
}
