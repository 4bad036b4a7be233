//! Deterministic engine for a decentralized personal-data marketplace.
//!
//! The crate models the full life of a data product: a seller describes a
//! dataset, prices it against a privacy-harm score and a noise level, and
//! lists it under machine-readable license terms; a buyer searches, vets a
//! subsample, funds escrow, and receives the noised data. Every state change
//! is an append-only ledger event, so replaying a ledger reconstructs the
//! market exactly and a scenario is summarized by the digest of its log.
//!
//! Determinism is load-bearing: all randomness flows from named ChaCha8
//! streams derived from a single seed, iteration happens over ordered maps,
//! and float math routes through [`math`] (libm) so the same seed produces
//! the same ledger bytes on every platform.
//!
//! The crate is `no_std`-compatible (alloc required); the default `std`
//! feature only widens dependency features. IO lives in the companion CLI.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod event;
pub mod license;
pub mod market;
pub mod math;
pub mod member;
pub mod noise;
pub mod pricing;
pub mod reputation;
pub mod risk;
pub mod sim;
pub mod subsample;
pub mod txn;

pub use data::{describe_dataset, DataDescriptor, DataPoint, DataSet, FieldStats, Provenance};
pub use error::{Error, Result};
pub use event::{derive_seed, EventBody, EventLog, MarketEvent};
pub use license::{
    check_action, Action, ComplianceVerdict, License, LicenseTemplate, Lifespan, Purpose,
    ViolationKind,
};
pub use market::{
    BuySpec, Listing, ListingStatus, MarketParams, MarketState, Marketplace, MatchCandidate,
    RequiredLicenseTerms, SellSpec, SessionContext, SubsampleChoice,
};
pub use member::{Member, MemberId, Role, SubsamplePrivilege, Tick};
pub use noise::{inject_noise, standard_normal, utility_score, NoiseSpec};
pub use pricing::{
    buyer_effective_price, demand_index, enforced_listing_price, recommend_price, PriceQuote,
    PricingParams,
};
pub use reputation::{OutcomeEdge, ReputationLedger, ReputationParams, ORCHESTRATOR_ID};
pub use risk::{assess_risk, HarmImpactVector, RiskAssessment, RiskBand};
pub use subsample::{draw_subsample, validate_subsample, Subsample, SubsamplePolicy, SubsampleVerdict};
pub use txn::{AbortReason, Transaction, TxnEvent, TxnState, TRANSITIONS};
