//! The transaction lifecycle as a pure state machine.
//!
//! A transaction carries a buyer from a match to either settlement or an
//! abort. Settlement requires exactly two buyer consents: accepting the
//! price, and accepting (or waiving) the subsample. The machine itself is
//! side-effect free; escrow movement and reputation edges are the
//! marketplace's job and hang off the transitions, never inside them.
//!
//! [`TRANSITIONS`] is the complete legal-move table in a machine-readable
//! form. [`transition`] and the table are cross-checked exhaustively in
//! tests, so external tools can treat the table as authoritative.

use alloc::string::{String, ToString};
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::member::{MemberId, Tick};

/// Why a transaction died.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AbortReason {
    PriceRejected,
    SubsampleRejected,
    FundingRefused,
    DeliveryRefused,
}

impl AbortReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            AbortReason::PriceRejected => "PriceRejected",
            AbortReason::SubsampleRejected => "SubsampleRejected",
            AbortReason::FundingRefused => "FundingRefused",
            AbortReason::DeliveryRefused => "DeliveryRefused",
        }
    }
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a transaction stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxnState {
    Matched,
    PriceAccepted,
    SubsampleIssued,
    SubsampleAccepted,
    SubsampleWaived,
    EscrowFunded,
    DataDelivered,
    Settled,
    Aborted(AbortReason),
}

impl TxnState {
    /// Every state, with one entry per abort reason.
    pub const ALL: [TxnState; 12] = [
        TxnState::Matched,
        TxnState::PriceAccepted,
        TxnState::SubsampleIssued,
        TxnState::SubsampleAccepted,
        TxnState::SubsampleWaived,
        TxnState::EscrowFunded,
        TxnState::DataDelivered,
        TxnState::Settled,
        TxnState::Aborted(AbortReason::PriceRejected),
        TxnState::Aborted(AbortReason::SubsampleRejected),
        TxnState::Aborted(AbortReason::FundingRefused),
        TxnState::Aborted(AbortReason::DeliveryRefused),
    ];

    pub fn is_terminal(&self) -> bool {
        matches!(self, TxnState::Settled | TxnState::Aborted(_))
    }
}

impl fmt::Display for TxnState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TxnState::Matched => f.write_str("Matched"),
            TxnState::PriceAccepted => f.write_str("PriceAccepted"),
            TxnState::SubsampleIssued => f.write_str("SubsampleIssued"),
            TxnState::SubsampleAccepted => f.write_str("SubsampleAccepted"),
            TxnState::SubsampleWaived => f.write_str("SubsampleWaived"),
            TxnState::EscrowFunded => f.write_str("EscrowFunded"),
            TxnState::DataDelivered => f.write_str("DataDelivered"),
            TxnState::Settled => f.write_str("Settled"),
            TxnState::Aborted(r) => write!(f, "Aborted({r})"),
        }
    }
}

/// An input to the state machine. Buyer-, seller-, and orchestrator-driven
/// events share one alphabet; who may fire what is enforced upstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxnEvent {
    BuyerAcceptsPrice,
    BuyerRejectsPrice,
    RequestSubsample,
    WaiveSubsample,
    AcceptSubsample,
    RejectSubsample,
    FundEscrow,
    BuyerRefusesFunding,
    DeliverData,
    SellerRefusesDelivery,
    ReleaseEscrow,
}

impl TxnEvent {
    pub const ALL: [TxnEvent; 11] = [
        TxnEvent::BuyerAcceptsPrice,
        TxnEvent::BuyerRejectsPrice,
        TxnEvent::RequestSubsample,
        TxnEvent::WaiveSubsample,
        TxnEvent::AcceptSubsample,
        TxnEvent::RejectSubsample,
        TxnEvent::FundEscrow,
        TxnEvent::BuyerRefusesFunding,
        TxnEvent::DeliverData,
        TxnEvent::SellerRefusesDelivery,
        TxnEvent::ReleaseEscrow,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TxnEvent::BuyerAcceptsPrice => "BuyerAcceptsPrice",
            TxnEvent::BuyerRejectsPrice => "BuyerRejectsPrice",
            TxnEvent::RequestSubsample => "RequestSubsample",
            TxnEvent::WaiveSubsample => "WaiveSubsample",
            TxnEvent::AcceptSubsample => "AcceptSubsample",
            TxnEvent::RejectSubsample => "RejectSubsample",
            TxnEvent::FundEscrow => "FundEscrow",
            TxnEvent::BuyerRefusesFunding => "BuyerRefusesFunding",
            TxnEvent::DeliverData => "DeliverData",
            TxnEvent::SellerRefusesDelivery => "SellerRefusesDelivery",
            TxnEvent::ReleaseEscrow => "ReleaseEscrow",
        }
    }
}

impl fmt::Display for TxnEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The complete legal-move table as (from, event, to) rows, using the
/// `Display` names of states and events. Any (state, event) pair absent
/// from this table is an `IllegalTransition`.
pub const TRANSITIONS: &[(&str, &str, &str)] = &[
    ("Matched", "BuyerAcceptsPrice", "PriceAccepted"),
    ("Matched", "BuyerRejectsPrice", "Aborted(PriceRejected)"),
    ("PriceAccepted", "RequestSubsample", "SubsampleIssued"),
    ("PriceAccepted", "WaiveSubsample", "SubsampleWaived"),
    ("SubsampleIssued", "AcceptSubsample", "SubsampleAccepted"),
    ("SubsampleIssued", "RejectSubsample", "Aborted(SubsampleRejected)"),
    ("SubsampleAccepted", "FundEscrow", "EscrowFunded"),
    ("SubsampleWaived", "FundEscrow", "EscrowFunded"),
    ("SubsampleAccepted", "BuyerRefusesFunding", "Aborted(FundingRefused)"),
    ("SubsampleWaived", "BuyerRefusesFunding", "Aborted(FundingRefused)"),
    ("EscrowFunded", "DeliverData", "DataDelivered"),
    ("EscrowFunded", "SellerRefusesDelivery", "Aborted(DeliveryRefused)"),
    ("DataDelivered", "ReleaseEscrow", "Settled"),
];

/// Applies one event, or reports the pair as illegal.
pub fn transition(state: &TxnState, event: TxnEvent) -> Result<TxnState> {
    use TxnEvent as E;
    use TxnState as S;
    let next = match (state, event) {
        (S::Matched, E::BuyerAcceptsPrice) => S::PriceAccepted,
        (S::Matched, E::BuyerRejectsPrice) => S::Aborted(AbortReason::PriceRejected),
        (S::PriceAccepted, E::RequestSubsample) => S::SubsampleIssued,
        (S::PriceAccepted, E::WaiveSubsample) => S::SubsampleWaived,
        (S::SubsampleIssued, E::AcceptSubsample) => S::SubsampleAccepted,
        (S::SubsampleIssued, E::RejectSubsample) => {
            S::Aborted(AbortReason::SubsampleRejected)
        }
        (S::SubsampleAccepted | S::SubsampleWaived, E::FundEscrow) => S::EscrowFunded,
        (S::SubsampleAccepted | S::SubsampleWaived, E::BuyerRefusesFunding) => {
            S::Aborted(AbortReason::FundingRefused)
        }
        (S::EscrowFunded, E::DeliverData) => S::DataDelivered,
        (S::EscrowFunded, E::SellerRefusesDelivery) => {
            S::Aborted(AbortReason::DeliveryRefused)
        }
        (S::DataDelivered, E::ReleaseEscrow) => S::Settled,
        (s, e) => {
            return Err(Error::IllegalTransition {
                state: s.to_string(),
                event: e.to_string(),
            })
        }
    };
    Ok(next)
}

/// How many buyer consents the event carries: price acceptance and
/// subsample acceptance (or its waiver) each count one.
pub fn consent_delta(event: TxnEvent) -> u8 {
    match event {
        TxnEvent::BuyerAcceptsPrice
        | TxnEvent::AcceptSubsample
        | TxnEvent::WaiveSubsample => 1,
        _ => 0,
    }
}

/// One buyer's pursuit of one listing. Prices are frozen at match time in
/// micro-credits (1 credit = 1_000_000 micro) so escrow arithmetic is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub txn_id: String,
    pub buyer_id: MemberId,
    pub listing_id: String,
    pub state: TxnState,
    pub consent_count: u8,
    /// Funds currently held in escrow for this transaction.
    pub escrow_micro: u64,
    /// Effective price per point for this buyer, frozen at match.
    pub unit_price_micro: u64,
    /// `unit_price_micro * point count`; what escrow will hold.
    pub total_price_micro: u64,
    pub opened_at: Tick,
}

impl Transaction {
    pub fn new(
        txn_id: impl Into<String>,
        buyer_id: MemberId,
        listing_id: impl Into<String>,
        unit_price_micro: u64,
        total_price_micro: u64,
        opened_at: Tick,
    ) -> Self {
        Transaction {
            txn_id: txn_id.into(),
            buyer_id,
            listing_id: listing_id.into(),
            state: TxnState::Matched,
            consent_count: 0,
            escrow_micro: 0,
            unit_price_micro,
            total_price_micro,
            opened_at,
        }
    }
}
