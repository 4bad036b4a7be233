//! One error type for the whole engine.
//!
//! Variants name the rule that was broken, not the call site; the same
//! variant can surface from several operations. `ConfigError` carries the
//! JSON-style path of the offending field so a frontend can point at it.

use alloc::string::String;

/// Convenience alias used across the crate.
pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A dataset operation needs at least one point.
    #[error("dataset is empty")]
    EmptyDataset,
    /// Points must carry matching field arity and ordered timestamps.
    #[error("malformed dataset: {0}")]
    MalformedDataset(String),
    /// Event appended with a tick earlier than the log's latest tick.
    #[error("clock violation: tick {tick} precedes ledger tick {latest}")]
    ClockViolation { tick: u64, latest: u64 },
    /// Harm impact outside the 0..=5 scale.
    #[error("impact {0} outside 0..=5")]
    InvalidImpact(u8),
    /// Normalized risk score outside [0, 1].
    #[error("risk score {0} outside [0, 1]")]
    InvalidScore(f64),
    /// Noise level outside [0, 1] or not finite.
    #[error("noise level {0} outside [0, 1]")]
    InvalidNoiseLevel(f64),
    /// Original and noised datasets disagree in shape.
    #[error("dataset shapes differ: {0}")]
    ShapeMismatch(String),
    /// License consulted before any grant happened.
    #[error("license has no grant tick")]
    NotYetGranted,
    /// Actor is neither party to the license.
    #[error("actor {0} is not a party to the license")]
    UnrelatedActor(String),
    /// Member id not present in the market or reputation ledger.
    #[error("unknown member {0}")]
    UnknownMember(String),
    /// A member cannot transact with itself.
    #[error("self-transaction by {0}")]
    SelfTransaction(String),
    /// Expelled members cannot initiate anything.
    #[error("access denied: {0}")]
    AccessDenied(String),
    /// A second exclusive license would overlap an active one.
    #[error("active exclusive license already covers {seller}/{category}")]
    ExclusivityConflict { seller: String, category: String },
    /// Derived metadata sits outside the data subject's proprietary claim.
    #[error("provenance {0} is not listable")]
    UnlistableProvenance(String),
    /// Transaction state machine rejected the event.
    #[error("illegal transition: {state} does not accept {event}")]
    IllegalTransition { state: String, event: String },
    /// Buyer's subsample privilege is suspended.
    #[error("subsampling suspended for {0}")]
    SubsamplingSuspended(String),
    /// Per-window subsample request cap reached.
    #[error("subsample quota exceeded for {buyer} in {category}")]
    SubsampleQuotaExceeded { buyer: String, category: String },
    /// Pricing input invalid (non-positive quantity, bad factor, non-finite).
    #[error("invalid pricing input: {0}")]
    InvalidPricingInput(String),
    /// Ask must be positive and finite.
    #[error("invalid ask: {0}")]
    InvalidAsk(f64),
    /// Unknown listing id.
    #[error("unknown listing {0}")]
    UnknownListing(String),
    /// Unknown transaction id.
    #[error("unknown transaction {0}")]
    UnknownTransaction(String),
    /// Unknown license id.
    #[error("unknown license {0}")]
    UnknownLicense(String),
    /// Listing is no longer open to new matches.
    #[error("listing {0} is not active")]
    ListingNotActive(String),
    /// Buyer cannot cover the effective price.
    #[error("insufficient budget for {0}")]
    InsufficientBudget(String),
    /// Scenario configuration rejected; `path` points at the field.
    #[error("config error at {path}: {message}")]
    ConfigError { path: String, message: String },
    /// Ledger bytes failed to parse during replay.
    #[error("ledger parse error at line {line}: {message}")]
    LedgerParse { line: usize, message: String },
}

impl Error {
    /// Stable machine-readable variant name, for frontends that key on the
    /// rule rather than the message text.
    pub fn name(&self) -> &'static str {
        match self {
            Error::EmptyDataset => "EmptyDataset",
            Error::MalformedDataset(_) => "MalformedDataset",
            Error::ClockViolation { .. } => "ClockViolation",
            Error::InvalidImpact(_) => "InvalidImpact",
            Error::InvalidScore(_) => "InvalidScore",
            Error::InvalidNoiseLevel(_) => "InvalidNoiseLevel",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NotYetGranted => "NotYetGranted",
            Error::UnrelatedActor(_) => "UnrelatedActor",
            Error::UnknownMember(_) => "UnknownMember",
            Error::SelfTransaction(_) => "SelfTransaction",
            Error::AccessDenied(_) => "AccessDenied",
            Error::ExclusivityConflict { .. } => "ExclusivityConflict",
            Error::UnlistableProvenance(_) => "UnlistableProvenance",
            Error::IllegalTransition { .. } => "IllegalTransition",
            Error::SubsamplingSuspended(_) => "SubsamplingSuspended",
            Error::SubsampleQuotaExceeded { .. } => "SubsampleQuotaExceeded",
            Error::InvalidPricingInput(_) => "InvalidPricingInput",
            Error::InvalidAsk(_) => "InvalidAsk",
            Error::UnknownListing(_) => "UnknownListing",
            Error::UnknownTransaction(_) => "UnknownTransaction",
            Error::UnknownLicense(_) => "UnknownLicense",
            Error::ListingNotActive(_) => "ListingNotActive",
            Error::InsufficientBudget(_) => "InsufficientBudget",
            Error::ConfigError { .. } => "ConfigError",
            Error::LedgerParse { .. } => "LedgerParse",
        }
    }
}
