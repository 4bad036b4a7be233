//! The append-only market ledger.
//!
//! Every observable marketplace action is an event; market state is a fold
//! over the ledger and nothing else. The canonical export is JSON lines
//! with a fixed field order (seq, tick, kind, payload), so the SHA-256 of
//! the export is reproducible across platforms and serves as the identity
//! of a simulation run.
//!
//! Payloads never carry point data. Datasets move off-ledger (subsample
//! issuance, delivery); the ledger records that they moved and how much
//! money did.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::license::{License, ViolationKind};
use crate::market::{BuySpec, Listing};
use crate::member::{MemberId, Role, Tick};
use crate::pricing::PriceQuote;
use crate::txn::AbortReason;

/// Event payloads, tagged by kind. Each variant carries enough to replay
/// the state change it caused; derived quantities (reputation weights,
/// prices) are frozen in rather than recomputed, which is what makes replay
/// bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    /// A member registered or re-identified. The first occurrence for an id
    /// creates the member; later ones are session markers.
    Identified {
        member: MemberId,
        roles: Vec<Role>,
        /// Free-form label describing what kind of actor this is, so
        /// reports can segment the ledger without external context.
        agent_kind: String,
    },
    /// A product went on the market. The listing here is the public record;
    /// the underlying points stay with the seller.
    Listed { listing: Listing, quote: PriceQuote },
    SearchIssued { spec: BuySpec },
    Matched {
        txn_id: String,
        buyer: MemberId,
        seller: MemberId,
        listing_id: String,
        /// Effective per-point price for this buyer, in micro-credits.
        unit_price_micro: u64,
        total_price_micro: u64,
    },
    PriceAccepted { txn_id: String },
    PriceRejected { txn_id: String },
    SubsampleRequested {
        txn_id: String,
        size: u64,
        seed: u64,
        window_index: u64,
        request_number: u32,
    },
    SubsampleAccepted { txn_id: String },
    SubsampleRejected { txn_id: String, justified: bool },
    SubsampleWaived { txn_id: String },
    EscrowFunded { txn_id: String, amount_micro: u64 },
    DataDelivered { txn_id: String, point_count: u64 },
    Settled {
        txn_id: String,
        receipt_micro: u64,
        license: License,
    },
    Aborted {
        txn_id: String,
        reason: AbortReason,
        refund_micro: u64,
    },
    ReputationUpdated {
        member: MemberId,
        counterparty: MemberId,
        sign: i8,
        /// Counterparty reputation frozen at edge-insertion time.
        weight: f64,
        old_score: f64,
        new_score: f64,
    },
    LicenseViolationReported {
        license_id: String,
        violator: MemberId,
        kind: ViolationKind,
    },
    MemberExpelled {
        member: MemberId,
        withdrawn_listings: Vec<String>,
    },
    SubsamplingSuspended { member: MemberId },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Identified { .. } => "Identified",
            EventBody::Listed { .. } => "Listed",
            EventBody::SearchIssued { .. } => "SearchIssued",
            EventBody::Matched { .. } => "Matched",
            EventBody::PriceAccepted { .. } => "PriceAccepted",
            EventBody::PriceRejected { .. } => "PriceRejected",
            EventBody::SubsampleRequested { .. } => "SubsampleRequested",
            EventBody::SubsampleAccepted { .. } => "SubsampleAccepted",
            EventBody::SubsampleRejected { .. } => "SubsampleRejected",
            EventBody::SubsampleWaived { .. } => "SubsampleWaived",
            EventBody::EscrowFunded { .. } => "EscrowFunded",
            EventBody::DataDelivered { .. } => "DataDelivered",
            EventBody::Settled { .. } => "Settled",
            EventBody::Aborted { .. } => "Aborted",
            EventBody::ReputationUpdated { .. } => "ReputationUpdated",
            EventBody::LicenseViolationReported { .. } => "LicenseViolationReported",
            EventBody::MemberExpelled { .. } => "MemberExpelled",
            EventBody::SubsamplingSuspended { .. } => "SubsamplingSuspended",
        }
    }

    /// Transaction this event belongs to, when it belongs to one.
    pub fn txn_id(&self) -> Option<&str> {
        match self {
            EventBody::Matched { txn_id, .. }
            | EventBody::PriceAccepted { txn_id }
            | EventBody::PriceRejected { txn_id }
            | EventBody::SubsampleRequested { txn_id, .. }
            | EventBody::SubsampleAccepted { txn_id }
            | EventBody::SubsampleRejected { txn_id, .. }
            | EventBody::SubsampleWaived { txn_id }
            | EventBody::EscrowFunded { txn_id, .. }
            | EventBody::DataDelivered { txn_id, .. }
            | EventBody::Settled { txn_id, .. }
            | EventBody::Aborted { txn_id, .. } => Some(txn_id),
            _ => None,
        }
    }
}

/// One ledger entry. Serialization order of the fields is the canonical
/// export order; do not reorder them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketEvent {
    pub seq: u64,
    pub tick: Tick,
    #[serde(flatten)]
    pub body: EventBody,
}

/// Append-only event sequence with a monotone clock.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    events: Vec<MarketEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        EventLog::default()
    }

    pub fn events(&self) -> &[MarketEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_tick(&self) -> Option<Tick> {
        self.events.last().map(|e| e.tick)
    }

    /// Fails exactly when an append at this tick would violate the clock.
    pub fn check_tick(&self, tick: Tick) -> Result<()> {
        match self.last_tick() {
            Some(latest) if tick < latest => Err(Error::ClockViolation { tick, latest }),
            _ => Ok(()),
        }
    }

    /// Appends one event; seq starts at 1 and increments by 1.
    pub fn append(&mut self, tick: Tick, body: EventBody) -> Result<&MarketEvent> {
        self.check_tick(tick)?;
        let seq = self.events.len() as u64 + 1;
        self.events.push(MarketEvent { seq, tick, body });
        Ok(self.events.last().expect("just pushed"))
    }

    /// Canonical export: one compact JSON object per line, fields in
    /// (seq, tick, kind, payload) order, each line newline-terminated.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("event serialization"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical export, hex-encoded. Two runs are the same
    /// run exactly when these agree.
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.export_jsonl().as_bytes());
        hex::encode(digest)
    }

    /// Inverse of [`export_jsonl`]: parses and re-validates seq continuity
    /// and clock monotonicity.
    ///
    /// [`export_jsonl`]: EventLog::export_jsonl
    pub fn parse_jsonl(text: &str) -> Result<EventLog> {
        let mut events = Vec::new();
        let mut last_tick = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event: MarketEvent =
                serde_json::from_str(line).map_err(|e| Error::LedgerParse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if event.seq != events.len() as u64 + 1 {
                return Err(Error::LedgerParse {
                    line: i + 1,
                    message: alloc::format!(
                        "sequence {} where {} was expected",
                        event.seq,
                        events.len() + 1
                    ),
                });
            }
            if event.tick < last_tick {
                return Err(Error::LedgerParse {
                    line: i + 1,
                    message: alloc::format!(
                        "tick {} precedes ledger tick {last_tick}",
                        event.tick
                    ),
                });
            }
            last_tick = event.tick;
            events.push(event);
        }
        Ok(EventLog { events })
    }
}

/// Splits one base seed into independent streams. The (domain, n) pair
/// names a stream; distinct names give unrelated seeds, so adding a
/// consumer never perturbs the draws of another.
pub fn derive_seed(base: u64, domain: &str, n: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.update(n.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
