//! Marketplace commands, state, and replay.
//!
//! Everything here follows one discipline: a command validates against
//! current state, emits events, and the state mutates only inside
//! [`Marketplace::apply_event`]. Replaying an exported ledger through the
//! same `apply_event` therefore reconstructs the exact [`MarketState`],
//! which is the round-trip the tests pin.
//!
//! Two things live beside the state on purpose, because they are not
//! reconstructible from events and must not be: the vault of listed
//! datasets (points never enter the ledger) and the cache of issued
//! subsamples. A replayed marketplace can answer every question about
//! state, but only the live one can hand out data.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{describe_dataset, DataDescriptor, DataSet};
use crate::error::{Error, Result};
use crate::event::{derive_seed, EventBody, EventLog, MarketEvent};
use crate::license::{
    check_seller_double_sale, ComplianceVerdict, License, LicenseTemplate, Lifespan, Purpose,
    ViolationKind,
};
use crate::member::{Member, MemberId, Role, SubsamplePrivilege, Tick};
use crate::noise::{check_level, inject_noise, NoiseSpec};
use crate::pricing::{
    buyer_effective_price, demand_index, enforced_listing_price, recommend_price, PriceQuote,
    PricingParams,
};
use crate::reputation::{ReputationLedger, ReputationParams, ORCHESTRATOR_ID};
use crate::risk::{assess_risk, HarmImpactVector, RiskAssessment};
use crate::subsample::{draw_subsample, validate_subsample, Subsample, SubsamplePolicy};
use crate::txn::{consent_delta, transition, AbortReason, Transaction, TxnEvent, TxnState};

use market_micro::to_micro;

/// Micro-credit conversion, isolated so every call site rounds identically.
pub mod market_micro {
    use crate::math;

    /// Credits to micro-credits (1 credit = 1_000_000 micro), rounding to
    /// the nearest integer. All escrow arithmetic happens in micro-credits
    /// so conservation checks are exact.
    pub fn to_micro(credits: f64) -> u64 {
        if credits <= 0.0 {
            return 0;
        }
        math::round(credits * 1_000_000.0) as u64
    }

    pub fn micro_to_credits(micro: u64) -> f64 {
        micro as f64 / 1_000_000.0
    }
}

/// License properties a buyer insists on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequiredLicenseTerms {
    pub min_lifespan: Lifespan,
    pub exclusivity_required: bool,
    pub purposes_needed: BTreeSet<Purpose>,
}

impl RequiredLicenseTerms {
    /// Anything-goes requirements: any template satisfies them.
    pub fn any() -> Self {
        RequiredLicenseTerms {
            min_lifespan: Lifespan::Ticks(0),
            exclusivity_required: false,
            purposes_needed: BTreeSet::new(),
        }
    }

    pub fn satisfied_by(&self, template: &LicenseTemplate) -> bool {
        template.lifespan.covers(&self.min_lifespan)
            && (!self.exclusivity_required || template.exclusive)
            && self.purposes_needed.is_subset(&template.permitted_uses)
    }
}

/// Whether the buyer intends to validate a subsample before funding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleChoice {
    Require,
    Waive,
}

/// What a buyer wants, and the limits they transact under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuySpec {
    pub buyer_id: MemberId,
    pub category: String,
    pub max_price_per_point: f64,
    pub max_noise_tolerance: f64,
    pub min_seller_reputation: f64,
    pub required_license_terms: RequiredLicenseTerms,
    pub subsample_policy: SubsampleChoice,
}

impl BuySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_price_per_point > 0.0 && self.max_price_per_point.is_finite()) {
            return Err(Error::InvalidPricingInput(format!(
                "max price per point {} must be positive",
                self.max_price_per_point
            )));
        }
        check_level(self.max_noise_tolerance)?;
        if !(0.0..=1.0).contains(&self.min_seller_reputation) {
            return Err(Error::InvalidScore(self.min_seller_reputation));
        }
        Ok(())
    }
}

/// What a seller brings to the listing pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SellSpec {
    pub seller_id: MemberId,
    pub dataset: DataSet,
    pub impacts: HarmImpactVector,
    pub noise_level: f64,
    pub ask_per_point: f64,
    pub license_terms: LicenseTemplate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ListingStatus {
    Active,
    Withdrawn,
    Sold,
}

/// The public face of a product. The points themselves stay with the
/// seller; everything a buyer can see before a subsample is here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Listing {
    pub listing_id: String,
    pub seller_id: MemberId,
    pub descriptor: DataDescriptor,
    pub risk: RiskAssessment,
    pub license_template: LicenseTemplate,
    /// Enforced price per point: the seller's ask after the mandatory
    /// noise discount.
    pub listing_price: f64,
    pub status: ListingStatus,
    pub listed_at: Tick,
}

impl Listing {
    pub fn category(&self) -> &str {
        &self.descriptor.category
    }

    pub fn point_count(&self) -> u64 {
        self.descriptor.count
    }
}

/// One row of a search result, already priced for the searching buyer.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchCandidate {
    pub listing_id: String,
    pub seller_id: MemberId,
    pub effective_unit_price: f64,
    pub declared_noise_level: f64,
    pub point_count: u64,
}

/// What `identify` hands back: the session view of one member.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionContext {
    pub member_id: MemberId,
    pub roles: Vec<Role>,
    pub reputation: f64,
    pub subsample_privilege: SubsamplePrivilege,
    /// True when the member may only waive subsamples, never request them.
    pub waiver_only: bool,
}

/// Everything that parameterizes a marketplace instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketParams {
    /// Root of every derived random stream (noise seeds, subsample seeds).
    pub base_seed: u64,
    /// Per-point value anchor fed into price recommendations.
    pub base_unit_value: f64,
    pub pricing: PricingParams,
    pub reputation: ReputationParams,
    pub subsample: SubsamplePolicy,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            base_seed: 0,
            base_unit_value: 1.0,
            pricing: PricingParams::default(),
            reputation: ReputationParams::default(),
            subsample: SubsamplePolicy::default(),
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_unit_value > 0.0 && self.base_unit_value.is_finite()) {
            return Err(Error::ConfigError {
                path: "params.base_unit_value".into(),
                message: "must be positive".into(),
            });
        }
        self.pricing.validate()?;
        self.reputation.validate()?;
        self.subsample.validate()
    }
}

/// Replayable marketplace state: a pure fold over the event ledger.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarketState {
    pub members: BTreeMap<MemberId, Member>,
    /// Actor labels from `Identified` events, for ledger-only reporting.
    pub agent_kinds: BTreeMap<MemberId, String>,
    pub listings: BTreeMap<String, Listing>,
    pub transactions: BTreeMap<String, Transaction>,
    pub licenses: BTreeMap<String, License>,
    pub reputation: ReputationLedger,
    /// Standing demand: one open spec per (buyer, category), closed by a
    /// settlement in that category.
    pub open_specs: BTreeMap<(MemberId, String), BuySpec>,
    /// Subsample requests per (buyer, category, window index).
    pub subsample_counts: BTreeMap<(MemberId, String, u64), u32>,
    next_listing: u64,
    next_txn: u64,
    next_license: u64,
}

impl MarketState {
    fn new() -> Self {
        MarketState {
            reputation: ReputationLedger::new(),
            ..MarketState::default()
        }
    }

    /// Open buy specs and active listings in a category; the inputs to the
    /// demand index.
    pub fn demand_snapshot(&self, category: &str) -> (u64, u64) {
        let specs = self
            .open_specs
            .keys()
            .filter(|(_, c)| c == category)
            .count() as u64;
        let listings = self
            .listings
            .values()
            .filter(|l| l.status == ListingStatus::Active && l.category() == category)
            .count() as u64;
        (specs, listings)
    }
}

/// The live marketplace: params, replayable state, ledger, and the two
/// off-ledger stores (dataset vault, issued-subsample cache).
#[derive(Debug, Clone)]
pub struct Marketplace {
    params: MarketParams,
    state: MarketState,
    log: EventLog,
    vault: BTreeMap<String, DataSet>,
    issued_subsamples: BTreeMap<String, Subsample>,
}

impl Marketplace {
    pub fn new(params: MarketParams) -> Result<Self> {
        params.validate()?;
        Ok(Marketplace {
            params,
            state: MarketState::new(),
            log: EventLog::new(),
            vault: BTreeMap::new(),
            issued_subsamples: BTreeMap::new(),
        })
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn state(&self) -> &MarketState {
        &self.state
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    pub fn listing(&self, listing_id: &str) -> Result<&Listing> {
        self.state
            .listings
            .get(listing_id)
            .ok_or_else(|| Error::UnknownListing(listing_id.into()))
    }

    pub fn transaction(&self, txn_id: &str) -> Result<&Transaction> {
        self.state
            .transactions
            .get(txn_id)
            .ok_or_else(|| Error::UnknownTransaction(txn_id.into()))
    }

    pub fn reputation_of(&self, member: &MemberId) -> Result<f64> {
        self.state.reputation.reputation_of(member, &self.params.reputation)
    }

    /// Rebuilds state from a ledger. The result compares equal to the state
    /// of the marketplace that produced the events.
    pub fn replay(events: &[MarketEvent]) -> Result<MarketState> {
        let mut state = MarketState::new();
        let mut last_tick = 0;
        for (i, event) in events.iter().enumerate() {
            if event.seq != i as u64 + 1 || event.tick < last_tick {
                return Err(Error::LedgerParse {
                    line: i + 1,
                    message: "event sequence or clock out of order".into(),
                });
            }
            last_tick = event.tick;
            Self::apply_event(&mut state, event)?;
        }
        Ok(state)
    }

    fn commit(&mut self, tick: Tick, body: EventBody) -> Result<()> {
        let event = self.log.append(tick, body)?;
        Self::apply_event(&mut self.state, event)
    }

    /// The single place where events become state.
    fn apply_event(state: &mut MarketState, event: &MarketEvent) -> Result<()> {
        match &event.body {
            EventBody::Identified {
                member,
                roles,
                agent_kind,
            } => {
                if !state.members.contains_key(member) {
                    state
                        .members
                        .insert(member.clone(), Member::new(member.clone(), roles.clone(), event.tick));
                    state.agent_kinds.insert(member.clone(), agent_kind.clone());
                    state.reputation.add_member(member.clone());
                }
            }
            EventBody::Listed { listing, .. } => {
                state.next_listing += 1;
                state.listings.insert(listing.listing_id.clone(), listing.clone());
            }
            EventBody::SearchIssued { spec } => {
                state
                    .open_specs
                    .insert((spec.buyer_id.clone(), spec.category.clone()), spec.clone());
            }
            EventBody::Matched {
                txn_id,
                buyer,
                listing_id,
                unit_price_micro,
                total_price_micro,
                ..
            } => {
                state.next_txn += 1;
                state.transactions.insert(
                    txn_id.clone(),
                    Transaction::new(
                        txn_id.clone(),
                        buyer.clone(),
                        listing_id.clone(),
                        *unit_price_micro,
                        *total_price_micro,
                        event.tick,
                    ),
                );
            }
            EventBody::PriceAccepted { txn_id } => {
                Self::apply_txn_event(state, txn_id, TxnEvent::BuyerAcceptsPrice)?;
            }
            EventBody::PriceRejected { .. } => {
                // Decision marker; the Aborted event that follows moves the
                // transaction.
            }
            EventBody::SubsampleRequested {
                txn_id,
                window_index,
                ..
            } => {
                let (buyer, category) = {
                    let t = state
                        .transactions
                        .get(txn_id)
                        .ok_or_else(|| Error::UnknownTransaction(txn_id.clone()))?;
                    let l = state
                        .listings
                        .get(&t.listing_id)
                        .ok_or_else(|| Error::UnknownListing(t.listing_id.clone()))?;
                    (t.buyer_id.clone(), l.category().into())
                };
                *state
                    .subsample_counts
                    .entry((buyer, category, *window_index))
                    .or_insert(0) += 1;
                Self::apply_txn_event(state, txn_id, TxnEvent::RequestSubsample)?;
            }
            EventBody::SubsampleAccepted { txn_id } => {
                Self::apply_txn_event(state, txn_id, TxnEvent::AcceptSubsample)?;
            }
            EventBody::SubsampleRejected { txn_id, justified } => {
                if !justified {
                    let buyer = state
                        .transactions
                        .get(txn_id)
                        .ok_or_else(|| Error::UnknownTransaction(txn_id.clone()))?
                        .buyer_id
                        .clone();
                    state.reputation.apply_unjustified_reject(&buyer);
                }
                // The transaction moves on the Aborted event that follows.
            }
            EventBody::SubsampleWaived { txn_id } => {
                Self::apply_txn_event(state, txn_id, TxnEvent::WaiveSubsample)?;
            }
            EventBody::EscrowFunded {
                txn_id,
                amount_micro,
            } => {
                Self::apply_txn_event(state, txn_id, TxnEvent::FundEscrow)?;
                let t = state.transactions.get_mut(txn_id).expect("checked above");
                t.escrow_micro = *amount_micro;
            }
            EventBody::DataDelivered { txn_id, .. } => {
                Self::apply_txn_event(state, txn_id, TxnEvent::DeliverData)?;
            }
            EventBody::Settled {
                txn_id, license, ..
            } => {
                Self::apply_txn_event(state, txn_id, TxnEvent::ReleaseEscrow)?;
                let t = state.transactions.get_mut(txn_id).expect("checked above");
                t.escrow_micro = 0;
                let buyer = t.buyer_id.clone();
                let listing_id = t.listing_id.clone();
                state.next_license += 1;
                state
                    .licenses
                    .insert(license.id.clone(), license.clone());
                if license.terms.exclusive {
                    if let Some(l) = state.listings.get_mut(&listing_id) {
                        l.status = ListingStatus::Sold;
                    }
                }
                state
                    .open_specs
                    .remove(&(buyer, license.category.clone()));
            }
            EventBody::Aborted { txn_id, reason, .. } => {
                let t = state
                    .transactions
                    .get_mut(txn_id)
                    .ok_or_else(|| Error::UnknownTransaction(txn_id.clone()))?;
                t.state = TxnState::Aborted(*reason);
                t.escrow_micro = 0;
            }
            EventBody::ReputationUpdated {
                member,
                counterparty,
                sign,
                weight,
                ..
            } => {
                state.reputation.apply_edge(
                    member.clone(),
                    counterparty.clone(),
                    *sign,
                    *weight,
                    event.tick,
                );
            }
            EventBody::LicenseViolationReported { .. } => {
                // Marker; consequences arrive as ReputationUpdated events.
            }
            EventBody::MemberExpelled {
                member,
                withdrawn_listings,
            } => {
                if let Some(m) = state.members.get_mut(member) {
                    m.expelled = true;
                }
                for lid in withdrawn_listings {
                    if let Some(l) = state.listings.get_mut(lid) {
                        l.status = ListingStatus::Withdrawn;
                    }
                }
            }
            EventBody::SubsamplingSuspended { member } => {
                if let Some(m) = state.members.get_mut(member) {
                    m.subsample_privilege = SubsamplePrivilege::Suspended;
                }
            }
        }
        Ok(())
    }

    fn apply_txn_event(state: &mut MarketState, txn_id: &str, ev: TxnEvent) -> Result<()> {
        let t = state
            .transactions
            .get_mut(txn_id)
            .ok_or_else(|| Error::UnknownTransaction(txn_id.into()))?;
        t.state = transition(&t.state, ev)?;
        t.consent_count += consent_delta(ev);
        Ok(())
    }

    // ------------------------------------------------------------------
    // Membership

    /// Admits a member. Idempotent for already-admitted members; expelled
    /// ids stay out for good.
    pub fn register_member(
        &mut self,
        id: &MemberId,
        roles: Vec<Role>,
        agent_kind: &str,
        tick: Tick,
    ) -> Result<()> {
        if let Some(existing) = self.state.members.get(id) {
            if existing.expelled {
                return Err(Error::AccessDenied(format!("{id} is expelled")));
            }
            return Ok(());
        }
        self.commit(
            tick,
            EventBody::Identified {
                member: id.clone(),
                roles,
                agent_kind: agent_kind.into(),
            },
        )
    }

    /// Session entry: reputation check plus privilege flags.
    pub fn identify(&mut self, id: &MemberId, tick: Tick) -> Result<SessionContext> {
        let member = self
            .state
            .members
            .get(id)
            .ok_or_else(|| Error::UnknownMember(id.0.clone()))?;
        if member.expelled {
            return Err(Error::AccessDenied(format!("{id} is expelled")));
        }
        let ctx = SessionContext {
            member_id: id.clone(),
            roles: member.roles.clone(),
            reputation: self.reputation_of(id)?,
            subsample_privilege: member.subsample_privilege,
            waiver_only: member.subsample_privilege == SubsamplePrivilege::Suspended,
        };
        let agent_kind = self
            .state
            .agent_kinds
            .get(id)
            .cloned()
            .unwrap_or_default();
        self.commit(
            tick,
            EventBody::Identified {
                member: ctx.member_id.clone(),
                roles: ctx.roles.clone(),
                agent_kind,
            },
        )?;
        Ok(ctx)
    }

    fn active_member(&self, id: &MemberId) -> Result<&Member> {
        let member = self
            .state
            .members
            .get(id)
            .ok_or_else(|| Error::UnknownMember(id.0.clone()))?;
        if member.expelled {
            return Err(Error::AccessDenied(format!("{id} is expelled")));
        }
        Ok(member)
    }

    // ------------------------------------------------------------------
    // Listing

    /// Runs the honest product pipeline: risk assessment, noise injection,
    /// descriptor computation, license fixing, price recommendation, and
    /// the enforced noise discount on the seller's ask.
    pub fn generate_product(&mut self, spec: &SellSpec, tick: Tick) -> Result<(String, PriceQuote)> {
        self.list_product(spec, None, tick)
    }

    /// Lists with a seller-supplied descriptor instead of one computed from
    /// the data. Descriptors are attestations: in a market where the data
    /// never leaves the seller, the platform cannot check claimed statistics
    /// against points it does not hold, and a tampered client can claim
    /// anything. Count, time range, field names, and declared noise are
    /// still forced to match, since those are load-bearing for subsampling
    /// and pricing. Subsample validation exists to catch the rest.
    pub fn list_with_attested_descriptor(
        &mut self,
        spec: &SellSpec,
        descriptor: DataDescriptor,
        tick: Tick,
    ) -> Result<(String, PriceQuote)> {
        self.list_product(spec, Some(descriptor), tick)
    }

    fn list_product(
        &mut self,
        spec: &SellSpec,
        attested: Option<DataDescriptor>,
        tick: Tick,
    ) -> Result<(String, PriceQuote)> {
        let seller = self.active_member(&spec.seller_id)?;
        if !seller.is_seller() {
            return Err(Error::AccessDenied(format!(
                "{} holds no seller role",
                spec.seller_id
            )));
        }
        if !spec.dataset.provenance.is_listable() {
            return Err(Error::UnlistableProvenance(
                spec.dataset.provenance.as_str().into(),
            ));
        }
        check_level(spec.noise_level)?;
        let category = spec.dataset.category.clone();

        if spec.license_terms.exclusive {
            self.check_exclusive_slot(&spec.seller_id, &category, tick)?;
        }

        let ordinal = self.state.next_listing + 1;
        let listing_id = format!("L{ordinal:06}");
        let noise_seed = derive_seed(self.params.base_seed, "noise", ordinal);
        let noised = inject_noise(
            &spec.dataset,
            NoiseSpec::new(spec.noise_level, noise_seed)?,
        )?;
        let descriptor = match attested {
            None => describe_dataset(&noised, spec.noise_level)?,
            Some(claimed) => {
                let actual = describe_dataset(&noised, spec.noise_level)?;
                if claimed.count != actual.count
                    || claimed.time_range != actual.time_range
                    || claimed.category != actual.category
                    || claimed.declared_noise_level != actual.declared_noise_level
                    || claimed.fields.keys().ne(actual.fields.keys())
                {
                    return Err(Error::MalformedDataset(
                        "attested descriptor shape disagrees with the data".into(),
                    ));
                }
                claimed
            }
        };

        let risk = assess_risk(spec.impacts)?;
        let (open_specs, active_listings) = self.state.demand_snapshot(&category);
        let demand = demand_index(open_specs, active_listings, &self.params.pricing);
        let quote = recommend_price(
            self.params.base_unit_value,
            descriptor.count,
            &risk,
            spec.noise_level,
            &spec.license_terms,
            demand,
            &self.params.pricing,
        )?;
        let listing_price =
            enforced_listing_price(spec.ask_per_point, spec.noise_level, &self.params.pricing)?;

        let listing = Listing {
            listing_id: listing_id.clone(),
            seller_id: spec.seller_id.clone(),
            descriptor,
            risk,
            license_template: spec.license_terms.clone(),
            listing_price,
            status: ListingStatus::Active,
            listed_at: tick,
        };
        self.commit(tick, EventBody::Listed { listing, quote })?;
        self.vault.insert(listing_id.clone(), noised);
        Ok((listing_id, quote))
    }

    /// Rivalry guard: one exclusive pipeline per (seller, category) at a
    /// time, counting both granted licenses still active and exclusive
    /// listings still open.
    fn check_exclusive_slot(
        &self,
        seller: &MemberId,
        category: &str,
        tick: Tick,
    ) -> Result<()> {
        let verdict =
            check_seller_double_sale(self.state.licenses.values(), seller, category, tick)?;
        if verdict != ComplianceVerdict::Compliant {
            return Err(Error::ExclusivityConflict {
                seller: seller.0.clone(),
                category: category.into(),
            });
        }
        let open_exclusive = self.state.listings.values().any(|l| {
            l.seller_id == *seller
                && l.category() == category
                && l.license_template.exclusive
                && l.status == ListingStatus::Active
        });
        if open_exclusive {
            return Err(Error::ExclusivityConflict {
                seller: seller.0.clone(),
                category: category.into(),
            });
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Search and match

    /// Filters active listings against the spec and prices each for this
    /// buyer. Ordered by ascending effective price per point, ties to the
    /// older listing, then lexicographic id. Emits the demand signal.
    pub fn market_search(&mut self, spec: &BuySpec, tick: Tick) -> Result<Vec<MatchCandidate>> {
        let buyer = self.active_member(&spec.buyer_id)?;
        if !buyer.is_buyer() {
            return Err(Error::AccessDenied(format!(
                "{} holds no buyer role",
                spec.buyer_id
            )));
        }
        spec.validate()?;
        let buyer_rep = self.reputation_of(&spec.buyer_id)?;

        let mut out: Vec<MatchCandidate> = Vec::new();
        for listing in self.state.listings.values() {
            if listing.status != ListingStatus::Active
                || listing.category() != spec.category
                || listing.seller_id == spec.buyer_id
            {
                continue;
            }
            if self
                .state
                .members
                .get(&listing.seller_id)
                .is_none_or(|m| m.expelled)
            {
                continue;
            }
            if listing.descriptor.declared_noise_level > spec.max_noise_tolerance {
                continue;
            }
            let seller_rep = self.reputation_of(&listing.seller_id)?;
            if seller_rep < spec.min_seller_reputation {
                continue;
            }
            if !spec.required_license_terms.satisfied_by(&listing.license_template) {
                continue;
            }
            let effective =
                buyer_effective_price(listing.listing_price, buyer_rep, &self.params.pricing);
            if effective > spec.max_price_per_point {
                continue;
            }
            if listing.license_template.exclusive && self.exclusive_listing_busy(&listing.listing_id)
            {
                continue;
            }
            out.push(MatchCandidate {
                listing_id: listing.listing_id.clone(),
                seller_id: listing.seller_id.clone(),
                effective_unit_price: effective,
                declared_noise_level: listing.descriptor.declared_noise_level,
                point_count: listing.point_count(),
            });
        }
        out.sort_by(|a, b| {
            a.effective_unit_price
                .total_cmp(&b.effective_unit_price)
                .then_with(|| {
                    let at = self.state.listings[&a.listing_id].listed_at;
                    let bt = self.state.listings[&b.listing_id].listed_at;
                    at.cmp(&bt)
                })
                .then_with(|| a.listing_id.cmp(&b.listing_id))
        });

        self.commit(tick, EventBody::SearchIssued { spec: spec.clone() })?;
        Ok(out)
    }

    fn exclusive_listing_busy(&self, listing_id: &str) -> bool {
        self.state
            .transactions
            .values()
            .any(|t| t.listing_id == listing_id && !t.state.is_terminal())
    }

    /// Opens a transaction on a listing, freezing this buyer's effective
    /// price in micro-credits.
    pub fn match_listing(
        &mut self,
        buyer_id: &MemberId,
        listing_id: &str,
        tick: Tick,
    ) -> Result<String> {
        let buyer = self.active_member(buyer_id)?;
        if !buyer.is_buyer() {
            return Err(Error::AccessDenied(format!(
                "{buyer_id} holds no buyer role"
            )));
        }
        let listing = self.listing(listing_id)?;
        if listing.status != ListingStatus::Active {
            return Err(Error::ListingNotActive(listing_id.into()));
        }
        if listing.seller_id == *buyer_id {
            return Err(Error::SelfTransaction(buyer_id.0.clone()));
        }
        let seller_id = listing.seller_id.clone();
        self.active_member(&seller_id)?;
        if listing.license_template.exclusive && self.exclusive_listing_busy(listing_id) {
            return Err(Error::ExclusivityConflict {
                seller: seller_id.0.clone(),
                category: listing.category().into(),
            });
        }

        let buyer_rep = self.reputation_of(buyer_id)?;
        let effective =
            buyer_effective_price(listing.listing_price, buyer_rep, &self.params.pricing);
        let unit_price_micro = to_micro(effective);
        let total_price_micro = unit_price_micro
            .checked_mul(listing.point_count())
            .ok_or_else(|| Error::InvalidPricingInput("price overflows escrow".into()))?;

        let txn_id = format!("T{:06}", self.state.next_txn + 1);
        self.commit(
            tick,
            EventBody::Matched {
                txn_id: txn_id.clone(),
                buyer: buyer_id.clone(),
                seller: seller_id,
                listing_id: listing_id.into(),
                unit_price_micro,
                total_price_micro,
            },
        )?;
        Ok(txn_id)
    }

    // ------------------------------------------------------------------
    // Transaction advancement

    fn check_step(&self, txn_id: &str, ev: TxnEvent) -> Result<()> {
        let t = self.transaction(txn_id)?;
        transition(&t.state, ev)?;
        Ok(())
    }

    /// First consent: the buyer takes the price.
    pub fn accept_price(&mut self, txn_id: &str, tick: Tick) -> Result<()> {
        self.check_step(txn_id, TxnEvent::BuyerAcceptsPrice)?;
        self.commit(tick, EventBody::PriceAccepted { txn_id: txn_id.into() })
    }

    /// The buyer walks away from the price. Costless by design: the buyer
    /// is free to re-search under a new spec.
    pub fn reject_price(&mut self, txn_id: &str, tick: Tick) -> Result<()> {
        self.check_step(txn_id, TxnEvent::BuyerRejectsPrice)?;
        self.commit(tick, EventBody::PriceRejected { txn_id: txn_id.into() })?;
        self.commit(
            tick,
            EventBody::Aborted {
                txn_id: txn_id.into(),
                reason: AbortReason::PriceRejected,
                refund_micro: 0,
            },
        )
    }

    /// Issues a deterministic subsample of the listed (noised) data.
    ///
    /// # Errors
    ///
    /// `SubsamplingSuspended` for buyers who burned their privilege,
    /// `SubsampleQuotaExceeded` past the per-window cap, and the usual
    /// state-machine errors.
    pub fn request_subsample(&mut self, txn_id: &str, tick: Tick) -> Result<Subsample> {
        self.check_step(txn_id, TxnEvent::RequestSubsample)?;
        let t = self.transaction(txn_id)?;
        let buyer_id = t.buyer_id.clone();
        let listing_id = t.listing_id.clone();
        let buyer = self.active_member(&buyer_id)?;
        if buyer.subsample_privilege == SubsamplePrivilege::Suspended {
            return Err(Error::SubsamplingSuspended(buyer_id.0.clone()));
        }
        let category: String = self.listing(&listing_id)?.category().into();
        let window_index = self.params.subsample.window_index(tick);
        let used = self
            .state
            .subsample_counts
            .get(&(buyer_id.clone(), category.clone(), window_index))
            .copied()
            .unwrap_or(0);
        if used >= self.params.subsample.request_cap {
            return Err(Error::SubsampleQuotaExceeded {
                buyer: buyer_id.0.clone(),
                category,
            });
        }

        let data = self
            .vault
            .get(&listing_id)
            .ok_or_else(|| Error::UnknownListing(listing_id.clone()))?;
        let domain = format!("subsample:{txn_id}");
        let seed = derive_seed(self.params.base_seed, &domain, u64::from(used + 1));
        let subsample = draw_subsample(data, &self.params.subsample, seed, txn_id)?;

        self.commit(
            tick,
            EventBody::SubsampleRequested {
                txn_id: txn_id.into(),
                size: subsample.points.len() as u64,
                seed,
                window_index,
                request_number: used + 1,
            },
        )?;
        self.issued_subsamples.insert(txn_id.into(), subsample.clone());
        Ok(subsample)
    }

    /// Second consent, subsample path.
    pub fn accept_subsample(&mut self, txn_id: &str, tick: Tick) -> Result<()> {
        self.check_step(txn_id, TxnEvent::AcceptSubsample)?;
        self.commit(tick, EventBody::SubsampleAccepted { txn_id: txn_id.into() })?;
        self.issued_subsamples.remove(txn_id);
        Ok(())
    }

    /// Second consent, trust path.
    pub fn waive_subsample(&mut self, txn_id: &str, tick: Tick) -> Result<()> {
        self.check_step(txn_id, TxnEvent::WaiveSubsample)?;
        self.commit(tick, EventBody::SubsampleWaived { txn_id: txn_id.into() })
    }

    /// The buyer rejects the issued subsample. The marketplace re-validates
    /// it to classify the rejection: a failing subsample convicts the
    /// seller, a passing one counts against the buyer and can suspend their
    /// subsampling privilege. Returns whether the rejection was justified.
    pub fn reject_subsample(&mut self, txn_id: &str, tick: Tick) -> Result<bool> {
        self.check_step(txn_id, TxnEvent::RejectSubsample)?;
        let t = self.transaction(txn_id)?;
        let buyer_id = t.buyer_id.clone();
        let listing_id = t.listing_id.clone();
        let subsample = self
            .issued_subsamples
            .get(txn_id)
            .ok_or_else(|| Error::UnknownTransaction(txn_id.into()))?
            .clone();
        let listing = self.listing(&listing_id)?;
        let seller_id = listing.seller_id.clone();
        let verdict = validate_subsample(
            &subsample,
            &listing.descriptor,
            listing.descriptor.declared_noise_level,
        );
        let justified = !verdict.is_pass();
        self.issued_subsamples.remove(txn_id);

        self.commit(
            tick,
            EventBody::SubsampleRejected {
                txn_id: txn_id.into(),
                justified,
            },
        )?;
        self.commit(
            tick,
            EventBody::Aborted {
                txn_id: txn_id.into(),
                reason: AbortReason::SubsampleRejected,
                refund_micro: 0,
            },
        )?;

        if justified {
            // The data really does not match its descriptor: the seller
            // takes the violation.
            self.penalize(&seller_id, &buyer_id, tick)?;
        } else {
            let orchestrator = MemberId::new(ORCHESTRATOR_ID);
            let (old, new, weight) = self.state.reputation.preview_edge(
                &buyer_id,
                &orchestrator,
                -1,
                &self.params.reputation,
            )?;
            self.commit(
                tick,
                EventBody::ReputationUpdated {
                    member: buyer_id.clone(),
                    counterparty: orchestrator,
                    sign: -1,
                    weight,
                    old_score: old,
                    new_score: new,
                },
            )?;
            let count = self.state.reputation.unjustified_rejects(&buyer_id);
            let still_active = self
                .state
                .members
                .get(&buyer_id)
                .is_some_and(|m| m.subsample_privilege == SubsamplePrivilege::Active);
            if count >= self.params.reputation.unjustified_reject_limit && still_active {
                self.commit(
                    tick,
                    EventBody::SubsamplingSuspended {
                        member: buyer_id.clone(),
                    },
                )?;
            }
            self.maybe_expel(&buyer_id, tick)?;
        }
        Ok(justified)
    }

    /// Buyer funds escrow with the frozen total.
    pub fn fund_escrow(&mut self, txn_id: &str, tick: Tick) -> Result<()> {
        self.check_step(txn_id, TxnEvent::FundEscrow)?;
        let amount = self.transaction(txn_id)?.total_price_micro;
        self.commit(
            tick,
            EventBody::EscrowFunded {
                txn_id: txn_id.into(),
                amount_micro: amount,
            },
        )
    }

    /// Buyer backs out after consenting. This one is not free: a violation
    /// edge lands on the buyer.
    pub fn refuse_funding(&mut self, txn_id: &str, tick: Tick) -> Result<()> {
        self.check_step(txn_id, TxnEvent::BuyerRefusesFunding)?;
        let t = self.transaction(txn_id)?;
        let buyer_id = t.buyer_id.clone();
        let listing_id = t.listing_id.clone();
        let seller_id = self.listing(&listing_id)?.seller_id.clone();
        self.commit(
            tick,
            EventBody::Aborted {
                txn_id: txn_id.into(),
                reason: AbortReason::FundingRefused,
                refund_micro: 0,
            },
        )?;
        self.penalize(&buyer_id, &seller_id, tick)
    }

    /// Seller hands the noised dataset over; returns it for the buyer.
    pub fn deliver_data(&mut self, txn_id: &str, tick: Tick) -> Result<DataSet> {
        self.check_step(txn_id, TxnEvent::DeliverData)?;
        let listing_id = self.transaction(txn_id)?.listing_id.clone();
        let data = self
            .vault
            .get(&listing_id)
            .ok_or_else(|| Error::UnknownListing(listing_id))?
            .clone();
        self.commit(
            tick,
            EventBody::DataDelivered {
                txn_id: txn_id.into(),
                point_count: data.len() as u64,
            },
        )?;
        Ok(data)
    }

    /// Seller reneges after funding: full refund, violation edge on the
    /// seller.
    pub fn refuse_delivery(&mut self, txn_id: &str, tick: Tick) -> Result<()> {
        self.check_step(txn_id, TxnEvent::SellerRefusesDelivery)?;
        let t = self.transaction(txn_id)?;
        let buyer_id = t.buyer_id.clone();
        let refund = t.escrow_micro;
        let listing_id = t.listing_id.clone();
        let seller_id = self.listing(&listing_id)?.seller_id.clone();
        self.commit(
            tick,
            EventBody::Aborted {
                txn_id: txn_id.into(),
                reason: AbortReason::DeliveryRefused,
                refund_micro: refund,
            },
        )?;
        self.penalize(&seller_id, &buyer_id, tick)
    }

    /// Releases escrow to the seller, grants the license, and records the
    /// symmetric success outcome. Returns the license id.
    pub fn settle(&mut self, txn_id: &str, tick: Tick) -> Result<String> {
        self.check_step(txn_id, TxnEvent::ReleaseEscrow)?;
        let t = self.transaction(txn_id)?;
        let buyer_id = t.buyer_id.clone();
        let receipt = t.escrow_micro;
        let listing_id = t.listing_id.clone();
        let listing = self.listing(&listing_id)?;
        let seller_id = listing.seller_id.clone();
        let category: String = listing.category().into();
        let terms = listing.license_template.clone();

        if terms.exclusive {
            // Unreachable through the public API (matching guards the
            // exclusive slot), but settlement is where rivalry becomes
            // binding, so it holds the last line.
            let verdict = check_seller_double_sale(
                self.state.licenses.values(),
                &seller_id,
                &category,
                tick,
            )?;
            if verdict != ComplianceVerdict::Compliant {
                return Err(Error::ExclusivityConflict {
                    seller: seller_id.0.clone(),
                    category,
                });
            }
        }

        let license_id = format!("LC{:06}", self.state.next_license + 1);
        let license = License::grant(
            license_id.clone(),
            seller_id.clone(),
            buyer_id.clone(),
            category,
            terms,
            tick,
        );

        let (old_b, new_b, weight_b) =
            self.state
                .reputation
                .preview_edge(&buyer_id, &seller_id, 1, &self.params.reputation)?;
        let (old_s, new_s, weight_s) =
            self.state
                .reputation
                .preview_edge(&seller_id, &buyer_id, 1, &self.params.reputation)?;

        self.commit(
            tick,
            EventBody::Settled {
                txn_id: txn_id.into(),
                receipt_micro: receipt,
                license,
            },
        )?;
        self.commit(
            tick,
            EventBody::ReputationUpdated {
                member: buyer_id.clone(),
                counterparty: seller_id.clone(),
                sign: 1,
                weight: weight_b,
                old_score: old_b,
                new_score: new_b,
            },
        )?;
        self.commit(
            tick,
            EventBody::ReputationUpdated {
                member: seller_id,
                counterparty: buyer_id,
                sign: 1,
                weight: weight_s,
                old_score: old_s,
                new_score: new_s,
            },
        )?;
        Ok(license_id)
    }

    /// Single entry point over the whole event alphabet, for drivers that
    /// treat the transaction as an opaque machine.
    pub fn advance(&mut self, txn_id: &str, event: TxnEvent, tick: Tick) -> Result<()> {
        match event {
            TxnEvent::BuyerAcceptsPrice => self.accept_price(txn_id, tick),
            TxnEvent::BuyerRejectsPrice => self.reject_price(txn_id, tick),
            TxnEvent::RequestSubsample => self.request_subsample(txn_id, tick).map(|_| ()),
            TxnEvent::WaiveSubsample => self.waive_subsample(txn_id, tick),
            TxnEvent::AcceptSubsample => self.accept_subsample(txn_id, tick),
            TxnEvent::RejectSubsample => self.reject_subsample(txn_id, tick).map(|_| ()),
            TxnEvent::FundEscrow => self.fund_escrow(txn_id, tick),
            TxnEvent::BuyerRefusesFunding => self.refuse_funding(txn_id, tick),
            TxnEvent::DeliverData => self.deliver_data(txn_id, tick).map(|_| ()),
            TxnEvent::SellerRefusesDelivery => self.refuse_delivery(txn_id, tick),
            TxnEvent::ReleaseEscrow => self.settle(txn_id, tick).map(|_| ()),
        }
    }

    // ------------------------------------------------------------------
    // Monitors

    /// A seller reports a buyer's breach of a granted license. Only the
    /// licensor may report, and the violator is the license holder.
    pub fn report_license_violation(
        &mut self,
        reporter: &MemberId,
        license_id: &str,
        kind: ViolationKind,
        tick: Tick,
    ) -> Result<()> {
        self.active_member(reporter)?;
        let license = self
            .state
            .licenses
            .get(license_id)
            .ok_or_else(|| Error::UnknownLicense(license_id.into()))?;
        if license.seller != *reporter {
            return Err(Error::UnrelatedActor(reporter.0.clone()));
        }
        let violator = license.buyer.clone();
        self.commit(
            tick,
            EventBody::LicenseViolationReported {
                license_id: license_id.into(),
                violator: violator.clone(),
                kind,
            },
        )?;
        self.penalize(&violator, reporter, tick)
    }

    /// Books a violation edge and expels the offender if the new score
    /// falls through the floor.
    fn penalize(&mut self, offender: &MemberId, counterparty: &MemberId, tick: Tick) -> Result<()> {
        let (old, new, weight) =
            self.state
                .reputation
                .preview_edge(offender, counterparty, -1, &self.params.reputation)?;
        self.commit(
            tick,
            EventBody::ReputationUpdated {
                member: offender.clone(),
                counterparty: counterparty.clone(),
                sign: -1,
                weight,
                old_score: old,
                new_score: new,
            },
        )?;
        self.maybe_expel(offender, tick)
    }

    fn maybe_expel(&mut self, member: &MemberId, tick: Tick) -> Result<()> {
        let expelled_already = self
            .state
            .members
            .get(member)
            .is_none_or(|m| m.expelled);
        if expelled_already {
            return Ok(());
        }
        let score = self.reputation_of(member)?;
        if score >= self.params.reputation.expulsion_threshold {
            return Ok(());
        }
        let withdrawn: Vec<String> = self
            .state
            .listings
            .values()
            .filter(|l| l.seller_id == *member && l.status == ListingStatus::Active)
            .map(|l| l.listing_id.clone())
            .collect();
        self.commit(
            tick,
            EventBody::MemberExpelled {
                member: member.clone(),
                withdrawn_listings: withdrawn,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::math;
    use crate::risk::RiskBand;
    use alloc::vec;

    const CATEGORY: &str = "activity/step_count";

    fn wave_values(n: usize) -> Vec<f64> {
        (0..n)
            .map(|t| {
                let t = t as f64;
                80.0 + 15.0 * math::cos(t * core::f64::consts::TAU / 96.0)
                    + 2.0 * math::cos(t * 0.7)
            })
            .collect()
    }

    fn dataset(n: usize) -> DataSet {
        DataSet::single_field(CATEGORY, "steps", &wave_values(n)).unwrap()
    }

    fn market() -> Marketplace {
        Marketplace::new(MarketParams {
            base_seed: 42,
            ..MarketParams::default()
        })
        .unwrap()
    }

    fn add_seller(m: &mut Marketplace, id: &str) {
        m.register_member(&id.into(), vec![Role::Seller], "seller", 0)
            .unwrap();
    }

    fn add_buyer(m: &mut Marketplace, id: &str) {
        m.register_member(&id.into(), vec![Role::Buyer], "buyer", 0)
            .unwrap();
    }

    fn sell_spec(seller: &str, n: usize, noise: f64, ask: f64) -> SellSpec {
        SellSpec {
            seller_id: seller.into(),
            dataset: dataset(n),
            impacts: HarmImpactVector::new(4, 5, 2).unwrap(),
            noise_level: noise,
            ask_per_point: ask,
            license_terms: LicenseTemplate::new(
                false,
                Lifespan::Ticks(120),
                [Purpose::ProductOptimization],
                false,
                false,
            ),
        }
    }

    fn buy_spec(buyer: &str, max_price: f64, tolerance: f64) -> BuySpec {
        BuySpec {
            buyer_id: buyer.into(),
            category: CATEGORY.into(),
            max_price_per_point: max_price,
            max_noise_tolerance: tolerance,
            min_seller_reputation: 0.0,
            required_license_terms: RequiredLicenseTerms::any(),
            subsample_policy: SubsampleChoice::Require,
        }
    }

    /// Drives a matched transaction all the way to settlement.
    fn drive_purchase(
        m: &mut Marketplace,
        buyer: &str,
        listing_id: &str,
        t0: Tick,
        waive: bool,
    ) -> String {
        let txn = m.match_listing(&buyer.into(), listing_id, t0).unwrap();
        m.accept_price(&txn, t0 + 1).unwrap();
        if waive {
            m.waive_subsample(&txn, t0 + 1).unwrap();
        } else {
            m.request_subsample(&txn, t0 + 2).unwrap();
            m.accept_subsample(&txn, t0 + 2).unwrap();
        }
        m.fund_escrow(&txn, t0 + 3).unwrap();
        m.deliver_data(&txn, t0 + 4).unwrap();
        m.settle(&txn, t0 + 4).unwrap();
        txn
    }

    #[test]
    fn listing_pipeline_reproduces_the_reference_quote() {
        let mut m = market();
        add_seller(&mut m, "s1");
        // Ask the gross per-point value so the enforced price lands exactly
        // on the recommendation: per point, U * (1 + R) * X * T_L with the
        // noise discount still to come.
        let gross_total = 1000.0 * (1.0 + 20.0 / 30.0) * 1.5 * (1.0 + 0.5 * 90.0 / 365.0);
        let mut spec = sell_spec("s1", 1000, 0.25, gross_total / 1000.0);
        spec.license_terms =
            LicenseTemplate::new(true, Lifespan::Ticks(90), [Purpose::ProductOptimization], false, false);
        let (listing_id, quote) = m.generate_product(&spec, 0).unwrap();

        let oracle = 820_000.0 / 365.0;
        assert!(
            (quote.recommended - oracle).abs() / oracle < 1e-9,
            "recommended {}",
            quote.recommended
        );
        assert!((quote.gross_value() - gross_total).abs() / gross_total < 1e-9);
        assert_eq!(quote.factors.demand, 1.0);

        let listing = m.listing(&listing_id).unwrap();
        let total = listing.listing_price * 1000.0;
        assert!(
            (total - oracle).abs() / oracle < 1e-9,
            "listing total {total}"
        );
        assert_eq!(listing.risk.band, RiskBand::High);
        assert_eq!(listing.descriptor.count, 1000);
        assert_eq!(listing.descriptor.declared_noise_level, 0.25);
        assert_eq!(listing.status, ListingStatus::Active);
    }

    #[test]
    fn derived_metadata_cannot_be_listed() {
        let mut m = market();
        add_seller(&mut m, "s1");
        let mut spec = sell_spec("s1", 20, 0.0, 1.0);
        spec.dataset.provenance = Provenance::DerivedMetadata;
        assert_eq!(
            m.generate_product(&spec, 0),
            Err(Error::UnlistableProvenance("derived_metadata".into()))
        );
    }

    #[test]
    fn roles_gate_the_two_sides_of_the_market() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        assert!(matches!(
            m.generate_product(&sell_spec("b1", 20, 0.0, 1.0), 0),
            Err(Error::AccessDenied(_))
        ));
        assert!(matches!(
            m.market_search(&buy_spec("s1", 10.0, 0.5), 0),
            Err(Error::AccessDenied(_))
        ));
        assert!(matches!(
            m.market_search(&buy_spec("ghost", 10.0, 0.5), 0),
            Err(Error::UnknownMember(_))
        ));
    }

    #[test]
    fn one_exclusive_slot_per_seller_and_category() {
        let mut m = market();
        add_seller(&mut m, "s1");
        let mut spec = sell_spec("s1", 20, 0.0, 1.0);
        spec.license_terms =
            LicenseTemplate::new(true, Lifespan::Perpetual, [Purpose::ProductOptimization], false, false);
        m.generate_product(&spec, 0).unwrap();
        assert!(matches!(
            m.generate_product(&spec, 1),
            Err(Error::ExclusivityConflict { .. })
        ));
        // A different category is its own slot; non-exclusive terms are
        // never constrained.
        let mut other = spec.clone();
        other.dataset.category = "sleep/phases".into();
        m.generate_product(&other, 2).unwrap();
        let open = sell_spec("s1", 20, 0.0, 1.0);
        m.generate_product(&open, 3).unwrap();
        m.generate_product(&open, 4).unwrap();
    }

    #[test]
    fn settled_exclusive_license_blocks_relisting_until_expiry() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        let mut spec = sell_spec("s1", 50, 0.0, 1.0);
        spec.license_terms =
            LicenseTemplate::new(true, Lifespan::Ticks(100), [Purpose::ProductOptimization], false, false);
        let (lid, _) = m.generate_product(&spec, 0).unwrap();
        drive_purchase(&mut m, "b1", &lid, 1, true);

        // The listing is sold and the license is live: no new exclusive slot.
        assert_eq!(m.listing(&lid).unwrap().status, ListingStatus::Sold);
        assert!(matches!(
            m.generate_product(&spec, 10),
            Err(Error::ExclusivityConflict { .. })
        ));
        // Once the license expires the slot frees up.
        m.generate_product(&spec, 200).unwrap();
    }

    #[test]
    fn settlement_grants_license_and_symmetric_reputation() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        let (lid, _) = m.generate_product(&sell_spec("s1", 200, 0.25, 2.0), 0).unwrap();
        m.market_search(&buy_spec("b1", 10.0, 0.5), 1).unwrap();
        assert_eq!(m.state().open_specs.len(), 1);

        let txn = drive_purchase(&mut m, "b1", &lid, 1, false);
        let t = m.transaction(&txn).unwrap();
        assert_eq!(t.state, TxnState::Settled);
        assert_eq!(t.consent_count, 2);
        assert_eq!(t.escrow_micro, 0);
        // Listing price 2.0 * (1 - 0.8 * 0.25) = 1.6; a base-reputation
        // buyer pays no premium.
        assert_eq!(t.unit_price_micro, 1_600_000);
        assert_eq!(t.total_price_micro, 320_000_000);

        let lic = m.state().licenses.values().next().unwrap();
        assert_eq!(lic.seller, "s1".into());
        assert_eq!(lic.buyer, "b1".into());
        assert_eq!(lic.category, CATEGORY);
        assert_eq!(lic.granted_at, Some(5));

        let expected = 0.5 + 0.5 / 6.0;
        assert!((m.reputation_of(&"s1".into()).unwrap() - expected).abs() < 1e-12);
        assert!((m.reputation_of(&"b1".into()).unwrap() - expected).abs() < 1e-12);

        // Settlement closed the standing demand; the non-exclusive listing
        // stays purchasable.
        assert!(m.state().open_specs.is_empty());
        assert_eq!(m.listing(&lid).unwrap().status, ListingStatus::Active);
    }

    #[test]
    fn waiver_path_settles_with_two_consents() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        let (lid, _) = m.generate_product(&sell_spec("s1", 40, 0.0, 1.0), 0).unwrap();
        let txn = drive_purchase(&mut m, "b1", &lid, 1, true);
        let t = m.transaction(&txn).unwrap();
        assert_eq!(t.state, TxnState::Settled);
        assert_eq!(t.consent_count, 2);
    }

    #[test]
    fn search_filters_and_orders_candidates() {
        let mut m = market();
        for s in ["s1", "s2", "s3"] {
            add_seller(&mut m, s);
        }
        add_buyer(&mut m, "b1");
        let (l1, _) = m.generate_product(&sell_spec("s1", 30, 0.0, 2.0), 0).unwrap();
        let (l2, _) = m.generate_product(&sell_spec("s2", 30, 0.0, 2.0), 1).unwrap();
        let (l3, _) = m.generate_product(&sell_spec("s3", 30, 0.5, 2.0), 2).unwrap();

        // Tolerance 0.25 excludes the half-noised listing; the equal-priced
        // survivors order by listing age.
        let hits = m.market_search(&buy_spec("b1", 10.0, 0.25), 3).unwrap();
        let ids: Vec<&str> = hits.iter().map(|c| c.listing_id.as_str()).collect();
        assert_eq!(ids, [l1.as_str(), l2.as_str()]);

        // With tolerance to spare, the noise discount makes l3 cheapest.
        let hits = m.market_search(&buy_spec("b1", 10.0, 0.5), 3).unwrap();
        assert_eq!(hits[0].listing_id, l3);
        assert!((hits[0].effective_unit_price - 1.2).abs() < 1e-12);

        // Budget cuts from the top.
        let hits = m.market_search(&buy_spec("b1", 1.5, 0.5), 3).unwrap();
        let ids: Vec<&str> = hits.iter().map(|c| c.listing_id.as_str()).collect();
        assert_eq!(ids, [l3.as_str()]);

        // Nobody clears a reputation floor above base yet.
        let mut picky = buy_spec("b1", 10.0, 0.5);
        picky.min_seller_reputation = 0.6;
        assert!(m.market_search(&picky, 4).unwrap().is_empty());

        // License requirements prune templates that cannot satisfy them.
        let mut exclusive_only = buy_spec("b1", 10.0, 0.5);
        exclusive_only.required_license_terms.exclusivity_required = true;
        assert!(m.market_search(&exclusive_only, 5).unwrap().is_empty());
        let mut long_term = buy_spec("b1", 10.0, 0.5);
        long_term.required_license_terms.min_lifespan = Lifespan::Ticks(121);
        assert!(m.market_search(&long_term, 6).unwrap().is_empty());
    }

    #[test]
    fn demand_pressure_raises_the_next_quote() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        add_buyer(&mut m, "b2");
        m.market_search(&buy_spec("b1", 10.0, 0.5), 0).unwrap();
        m.market_search(&buy_spec("b2", 10.0, 0.5), 0).unwrap();
        // Two open specs against zero listings: D clamps at 2.
        let (_, quote) = m.generate_product(&sell_spec("s1", 30, 0.0, 2.0), 1).unwrap();
        assert_eq!(quote.factors.demand, 2.0);
    }

    #[test]
    fn match_guards_reject_bad_targets() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        m.register_member(&"dual".into(), vec![Role::Seller, Role::Buyer], "dual", 0)
            .unwrap();
        let (lid, _) = m.generate_product(&sell_spec("dual", 30, 0.0, 2.0), 0).unwrap();

        assert!(matches!(
            m.match_listing(&"b1".into(), "L999999", 1),
            Err(Error::UnknownListing(_))
        ));
        assert_eq!(
            m.match_listing(&"dual".into(), &lid, 1),
            Err(Error::SelfTransaction("dual".into()))
        );
    }

    #[test]
    fn exclusive_listing_admits_one_transaction_at_a_time() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        add_buyer(&mut m, "b2");
        let mut spec = sell_spec("s1", 30, 0.0, 2.0);
        spec.license_terms =
            LicenseTemplate::new(true, Lifespan::Ticks(50), [Purpose::ProductOptimization], false, false);
        let (lid, _) = m.generate_product(&spec, 0).unwrap();

        let txn = m.match_listing(&"b1".into(), &lid, 1).unwrap();
        assert!(matches!(
            m.match_listing(&"b2".into(), &lid, 1),
            Err(Error::ExclusivityConflict { .. })
        ));
        // A busy exclusive listing also hides from search.
        assert!(m.market_search(&buy_spec("b2", 10.0, 0.5), 1).unwrap().is_empty());

        // The buyer walking away frees the listing.
        m.reject_price(&txn, 2).unwrap();
        assert_eq!(
            m.transaction(&txn).unwrap().state,
            TxnState::Aborted(AbortReason::PriceRejected)
        );
        m.match_listing(&"b2".into(), &lid, 3).unwrap();
    }

    #[test]
    fn funding_refusal_penalizes_the_buyer() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        let (lid, _) = m.generate_product(&sell_spec("s1", 30, 0.0, 2.0), 0).unwrap();
        let txn = m.match_listing(&"b1".into(), &lid, 1).unwrap();
        m.accept_price(&txn, 2).unwrap();
        m.waive_subsample(&txn, 2).unwrap();
        m.refuse_funding(&txn, 3).unwrap();

        let t = m.transaction(&txn).unwrap();
        assert_eq!(t.state, TxnState::Aborted(AbortReason::FundingRefused));
        assert_eq!(t.escrow_micro, 0);
        assert!(m.reputation_of(&"b1".into()).unwrap() < 0.5);
        assert_eq!(m.reputation_of(&"s1".into()).unwrap(), 0.5);

        // Exactly one violation edge follows the abort.
        let penalties = m
            .log()
            .events()
            .iter()
            .filter(|e| matches!(&e.body, EventBody::ReputationUpdated { sign: -1, .. }))
            .count();
        assert_eq!(penalties, 1);
    }

    #[test]
    fn delivery_refusal_refunds_escrow_and_penalizes_the_seller() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        let (lid, _) = m.generate_product(&sell_spec("s1", 30, 0.0, 2.0), 0).unwrap();
        let txn = m.match_listing(&"b1".into(), &lid, 1).unwrap();
        m.accept_price(&txn, 2).unwrap();
        m.waive_subsample(&txn, 2).unwrap();
        m.fund_escrow(&txn, 3).unwrap();
        let funded = m.transaction(&txn).unwrap().escrow_micro;
        assert_eq!(funded, 60_000_000);
        m.refuse_delivery(&txn, 4).unwrap();

        let t = m.transaction(&txn).unwrap();
        assert_eq!(t.state, TxnState::Aborted(AbortReason::DeliveryRefused));
        assert_eq!(t.escrow_micro, 0);
        assert!(m.reputation_of(&"s1".into()).unwrap() < 0.5);
        assert_eq!(m.reputation_of(&"b1".into()).unwrap(), 0.5);

        let refund = m
            .log()
            .events()
            .iter()
            .find_map(|e| match &e.body {
                EventBody::Aborted { refund_micro, .. } => Some(*refund_micro),
                _ => None,
            })
            .unwrap();
        assert_eq!(refund, funded);
    }

    #[test]
    fn subsample_quota_caps_requests_per_window() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        let mut lids = Vec::new();
        for i in 0..4u64 {
            let (lid, _) = m.generate_product(&sell_spec("s1", 100, 0.0, 1.0), i).unwrap();
            lids.push(lid);
        }
        let mut txns = Vec::new();
        for (i, lid) in lids.iter().enumerate() {
            let tick = 4 + i as Tick;
            let txn = m.match_listing(&"b1".into(), lid, tick).unwrap();
            m.accept_price(&txn, tick).unwrap();
            txns.push(txn);
        }
        for (i, txn) in txns.iter().take(3).enumerate() {
            m.request_subsample(txn, 8 + i as Tick).unwrap();
        }
        assert_eq!(
            m.request_subsample(&txns[3], 11),
            Err(Error::SubsampleQuotaExceeded {
                buyer: "b1".into(),
                category: CATEGORY.into(),
            })
        );
        // The transaction survives the refusal and succeeds next window.
        let sub = m.request_subsample(&txns[3], 100).unwrap();
        assert_eq!(sub.points.len(), 10);
    }

    #[test]
    fn unjustified_rejections_suspend_then_expel() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "farmer");
        // Constant data: every subsample matches the descriptor exactly, so
        // every rejection is unjustified.
        let spec = SellSpec {
            dataset: DataSet::single_field(CATEGORY, "steps", &[5.0; 50]).unwrap(),
            ..sell_spec("s1", 50, 0.0, 1.0)
        };
        let (lid, _) = m.generate_product(&spec, 0).unwrap();

        // Three rejects exhaust window 0's quota; two more in window 1.
        fn reject_at(m: &mut Marketplace, lid: &str, tick: Tick) -> bool {
            let txn = m.match_listing(&"farmer".into(), lid, tick).unwrap();
            m.accept_price(&txn, tick).unwrap();
            m.request_subsample(&txn, tick).unwrap();
            m.reject_subsample(&txn, tick).unwrap()
        }
        for tick in [1, 2, 3, 100] {
            assert!(
                !reject_at(&mut m, &lid, tick),
                "rejection at {tick} counted as justified"
            );
        }
        let farmer: MemberId = "farmer".into();
        assert_eq!(
            m.state().members[&farmer].subsample_privilege,
            SubsamplePrivilege::Active
        );
        assert!(!m.state().members[&farmer].expelled);

        assert!(!reject_at(&mut m, &lid, 101));
        assert_eq!(
            m.state().members[&farmer].subsample_privilege,
            SubsamplePrivilege::Suspended
        );
        assert!(m.state().members[&farmer].expelled);
        // 0.5 - 0.5/6 - .. - 0.5/10 dives under the 0.2 floor on the fifth.
        let score = m.state().reputation.reputation_of(&farmer, &m.params().reputation).unwrap();
        let mut oracle = 0.5;
        for d in 6..=10u32 {
            oracle -= 0.5 / f64::from(d);
        }
        assert!((score - oracle).abs() < 1e-12, "score {score} oracle {oracle}");

        // Sanction order: penalty edge, then suspension, then expulsion.
        let tail: Vec<&str> = m
            .log()
            .events()
            .iter()
            .rev()
            .take(3)
            .map(|e| e.body.kind())
            .collect();
        assert_eq!(
            tail,
            ["MemberExpelled", "SubsamplingSuspended", "ReputationUpdated"]
        );
        assert!(matches!(
            m.match_listing(&farmer, &lid, 102),
            Err(Error::AccessDenied(_))
        ));
    }

    #[test]
    fn forged_descriptor_is_caught_and_convicts_the_seller() {
        let mut m = market();
        add_seller(&mut m, "junk");
        for b in ["b1", "b2", "b3", "b4", "b5"] {
            add_buyer(&mut m, b);
        }
        // The descriptor attests the clean series; the listed points are
        // shifted far outside its statistics.
        let clean = dataset(400);
        let claim = describe_dataset(&clean, 0.5).unwrap();
        let shifted_values: Vec<f64> = wave_values(400).iter().map(|v| v + 70.0).collect();
        let spec = SellSpec {
            dataset: DataSet::single_field(CATEGORY, "steps", &shifted_values).unwrap(),
            ..sell_spec("junk", 400, 0.5, 0.6)
        };
        let (lid, _) = m
            .list_with_attested_descriptor(&spec, claim, 0)
            .unwrap();

        for (i, b) in ["b1", "b2", "b3", "b4", "b5"].iter().enumerate() {
            let tick = 1 + i as Tick;
            let txn = m.match_listing(&(*b).into(), &lid, tick).unwrap();
            m.accept_price(&txn, tick).unwrap();
            m.request_subsample(&txn, tick).unwrap();
            let justified = m.reject_subsample(&txn, tick).unwrap();
            assert!(justified, "buyer {b} should have caught the forgery");
            // The accuser walks away clean.
            assert_eq!(m.reputation_of(&(*b).into()).unwrap(), 0.5);
        }

        let junk: MemberId = "junk".into();
        assert!(m.state().members[&junk].expelled);
        assert_eq!(m.listing(&lid).unwrap().status, ListingStatus::Withdrawn);
        let withdrawn = m
            .log()
            .events()
            .iter()
            .find_map(|e| match &e.body {
                EventBody::MemberExpelled {
                    withdrawn_listings, ..
                } => Some(withdrawn_listings.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(withdrawn, vec![lid.clone()]);
        assert!(matches!(
            m.generate_product(&sell_spec("junk", 20, 0.0, 1.0), 50),
            Err(Error::AccessDenied(_))
        ));
    }

    #[test]
    fn attested_descriptor_must_match_the_data_shape() {
        let mut m = market();
        add_seller(&mut m, "s1");
        let spec = sell_spec("s1", 30, 0.0, 1.0);
        let mut claim = describe_dataset(&spec.dataset, 0.0).unwrap();
        claim.count = 31;
        assert!(matches!(
            m.list_with_attested_descriptor(&spec, claim, 0),
            Err(Error::MalformedDataset(_))
        ));
    }

    #[test]
    fn license_violation_reports_come_only_from_the_licensor() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        add_buyer(&mut m, "bystander");
        let (lid, _) = m.generate_product(&sell_spec("s1", 30, 0.0, 2.0), 0).unwrap();
        drive_purchase(&mut m, "b1", &lid, 1, true);
        let license_id = m.state().licenses.keys().next().unwrap().clone();

        assert_eq!(
            m.report_license_violation(
                &"bystander".into(),
                &license_id,
                ViolationKind::ProhibitedResale,
                10,
            ),
            Err(Error::UnrelatedActor("bystander".into()))
        );
        assert!(matches!(
            m.report_license_violation(&"s1".into(), "LC999999", ViolationKind::ProhibitedResale, 10),
            Err(Error::UnknownLicense(_))
        ));

        let before = m.reputation_of(&"b1".into()).unwrap();
        m.report_license_violation(&"s1".into(), &license_id, ViolationKind::ProhibitedResale, 10)
            .unwrap();
        assert!(m.reputation_of(&"b1".into()).unwrap() < before);
    }

    #[test]
    fn escrow_is_conserved_across_mixed_outcomes() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        add_buyer(&mut m, "b2");
        let (l1, _) = m.generate_product(&sell_spec("s1", 30, 0.0, 2.0), 0).unwrap();
        let (l2, _) = m.generate_product(&sell_spec("s1", 30, 0.0, 2.0), 0).unwrap();

        // One settlement, one funded-then-refused delivery.
        drive_purchase(&mut m, "b1", &l1, 1, true);
        let txn = m.match_listing(&"b2".into(), &l2, 10).unwrap();
        m.accept_price(&txn, 11).unwrap();
        m.waive_subsample(&txn, 11).unwrap();
        m.fund_escrow(&txn, 12).unwrap();
        m.refuse_delivery(&txn, 13).unwrap();

        let (mut funded, mut receipts, mut refunds) = (0u64, 0u64, 0u64);
        for e in m.log().events() {
            match &e.body {
                EventBody::EscrowFunded { amount_micro, .. } => funded += amount_micro,
                EventBody::Settled { receipt_micro, .. } => receipts += receipt_micro,
                EventBody::Aborted { refund_micro, .. } => refunds += refund_micro,
                _ => {}
            }
        }
        let held: u64 = m.state().transactions.values().map(|t| t.escrow_micro).sum();
        assert!(funded > 0);
        assert_eq!(funded, receipts + refunds + held);
        assert_eq!(held, 0);
    }

    #[test]
    fn replay_reconstructs_the_live_state() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_seller(&mut m, "junk");
        add_buyer(&mut m, "b1");
        add_buyer(&mut m, "b2");

        let (l1, _) = m.generate_product(&sell_spec("s1", 120, 0.25, 2.0), 0).unwrap();
        let clean = dataset(80);
        let claim = describe_dataset(&clean, 0.0).unwrap();
        let shifted: Vec<f64> = wave_values(80).iter().map(|v| v + 70.0).collect();
        let junk_spec = SellSpec {
            dataset: DataSet::single_field(CATEGORY, "steps", &shifted).unwrap(),
            ..sell_spec("junk", 80, 0.0, 0.5)
        };
        let (l2, _) = m.list_with_attested_descriptor(&junk_spec, claim, 0).unwrap();

        m.market_search(&buy_spec("b1", 10.0, 0.5), 1).unwrap();
        drive_purchase(&mut m, "b1", &l1, 1, false);

        // A justified rejection against the junk listing.
        let txn = m.match_listing(&"b2".into(), &l2, 6).unwrap();
        m.accept_price(&txn, 6).unwrap();
        m.request_subsample(&txn, 7).unwrap();
        assert!(m.reject_subsample(&txn, 7).unwrap());

        // A price rejection.
        let txn = m.match_listing(&"b2".into(), &l1, 8).unwrap();
        m.reject_price(&txn, 8).unwrap();

        let live = m.state().clone();
        let replayed = Marketplace::replay(m.log().events()).unwrap();
        assert_eq!(replayed, live);

        // The same holds through the serialized ledger.
        let parsed = EventLog::parse_jsonl(&m.log().export_jsonl()).unwrap();
        assert_eq!(Marketplace::replay(parsed.events()).unwrap(), live);
    }

    #[test]
    fn delivered_data_is_the_noised_series_from_the_vault() {
        let mut m = market();
        add_seller(&mut m, "s1");
        add_buyer(&mut m, "b1");
        let (lid, _) = m.generate_product(&sell_spec("s1", 60, 0.5, 2.0), 0).unwrap();
        let txn = m.match_listing(&"b1".into(), &lid, 1).unwrap();
        m.accept_price(&txn, 2).unwrap();
        m.waive_subsample(&txn, 2).unwrap();
        m.fund_escrow(&txn, 3).unwrap();
        let delivered = m.deliver_data(&txn, 4).unwrap();
        assert_eq!(delivered.len(), 60);
        // Declared noise 0.5 really was injected.
        let original = wave_values(60);
        let changed = delivered
            .column(0)
            .zip(original.iter())
            .filter(|(a, b)| (a - **b).abs() > 1e-9)
            .count();
        assert!(changed > 50, "only {changed} of 60 points moved");
        m.settle(&txn, 5).unwrap();
    }

    #[test]
    fn marketplace_rejects_invalid_params() {
        let bad = MarketParams {
            base_unit_value: 0.0,
            ..MarketParams::default()
        };
        assert!(matches!(
            Marketplace::new(bad),
            Err(Error::ConfigError { .. })
        ));
    }
}

