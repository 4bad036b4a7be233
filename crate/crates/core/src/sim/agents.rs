//! Agent behaviors: what each archetype does with its turn.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{describe_dataset, DataSet};
use crate::error::{Error, Result};
use crate::event::derive_seed;
use crate::license::{LicenseTemplate, Purpose};
use crate::market::market_micro::to_micro;
use crate::market::{
    BuySpec, ListingStatus, Marketplace, RequiredLicenseTerms, SellSpec, SubsampleChoice,
};
use crate::member::{MemberId, Tick};
use crate::noise::standard_normal;
use crate::pricing::{demand_index, recommend_price};
use crate::risk::assess_risk;
use crate::sim::config::{Archetype, ResolvedBehavior, ScenarioParams};
use crate::subsample::validate_subsample;
use crate::txn::{AbortReason, TxnState};

/// Where a buyer currently stands. Sellers are stateless between turns;
/// their situation is fully readable from the market.
#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Ready,
    InTxn(String),
    /// Three searches running came up empty or unaffordable. The buyer sits
    /// out until the given tick, long enough for sold-out exclusive stock to
    /// come back on relist.
    Backoff(Tick),
}

/// How long a buyer waits after three fruitless searches before trying again.
const SEARCH_BACKOFF_TICKS: u64 = 25;

#[derive(Debug, Clone)]
pub struct Agent {
    pub member_id: MemberId,
    pub behavior: ResolvedBehavior,
    rng: ChaCha8Rng,
    phase: Phase,
    budget_micro: u64,
    failed_searches: u32,
}

impl Agent {
    pub fn new(member_id: MemberId, behavior: ResolvedBehavior, scenario_seed: u64) -> Self {
        let seed = derive_seed(scenario_seed, &format!("agent:{member_id}"), 0);
        let budget_micro = to_micro(behavior.budget);
        Agent {
            member_id,
            behavior,
            rng: ChaCha8Rng::seed_from_u64(seed),
            phase: Phase::Ready,
            budget_micro,
            failed_searches: 0,
        }
    }

    /// One turn. Agents act through the public marketplace commands only,
    /// so everything they cause is in the ledger.
    pub fn step(
        &mut self,
        market: &mut Marketplace,
        params: &ScenarioParams,
        tick: Tick,
    ) -> Result<()> {
        let expelled = market
            .state()
            .members
            .get(&self.member_id)
            .is_none_or(|m| m.expelled);
        if expelled {
            return Ok(());
        }
        if self.behavior.archetype.is_seller() {
            self.seller_turn(market, params, tick)
        } else {
            self.buyer_turn(market, tick)
        }
    }

    fn seller_turn(
        &mut self,
        market: &mut Marketplace,
        params: &ScenarioParams,
        tick: Tick,
    ) -> Result<()> {
        // Serve open obligations first: deliver and settle anything funded.
        let due: Vec<String> = market
            .state()
            .transactions
            .values()
            .filter(|t| {
                matches!(t.state, TxnState::EscrowFunded | TxnState::DataDelivered)
                    && market
                        .state()
                        .listings
                        .get(&t.listing_id)
                        .is_some_and(|l| l.seller_id == self.member_id)
            })
            .map(|t| t.txn_id.clone())
            .collect();
        for txn_id in due {
            if market.transaction(&txn_id)?.state == TxnState::EscrowFunded {
                market.deliver_data(&txn_id, tick)?;
            }
            market.settle(&txn_id, tick)?;
        }

        let have_active = market
            .state()
            .listings
            .values()
            .any(|l| l.seller_id == self.member_id && l.status == ListingStatus::Active);
        if have_active {
            return Ok(());
        }
        match self.list_inventory(market, params, tick) {
            // Exclusive stock stays off the market while a granted license
            // runs; try again after expiry.
            Err(Error::ExclusivityConflict { .. }) => Ok(()),
            other => other,
        }
    }

    fn list_inventory(
        &mut self,
        market: &mut Marketplace,
        params: &ScenarioParams,
        tick: Tick,
    ) -> Result<()> {
        let b = &self.behavior;
        let template = LicenseTemplate::new(
            b.exclusive,
            b.lifespan,
            [Purpose::ProductOptimization, Purpose::ResearchAggregate],
            b.resale_allowed,
            b.extraction_allowed,
        );

        // Quote once at zero noise: the recommendation is then the gross
        // value, and one ask serves every noise variant of this inventory.
        let (open_specs, active_listings) = market.state().demand_snapshot(&b.category);
        let demand = demand_index(open_specs, active_listings, &market.params().pricing);
        let risk = assess_risk(params.impacts_for(&b.category))?;
        let quote = recommend_price(
            market.params().base_unit_value,
            u64::from(b.dataset_points),
            &risk,
            0.0,
            &template,
            demand,
            &market.params().pricing,
        )?;
        let ask_per_point =
            quote.recommended / f64::from(b.dataset_points) * b.ask_multiplier;

        let levels: &[f64] = if b.exclusive {
            // One exclusive slot per category; list only the lead variant.
            &b.noise_levels[..1]
        } else {
            &b.noise_levels
        };
        let impacts = params.impacts_for(&b.category);
        for &noise_level in levels {
            let dataset = synth_series(b.dataset_points, &b.category, &mut self.rng);
            if self.behavior.archetype == Archetype::JunkSeller {
                // Attest the clean series, list points shifted six standard
                // deviations away from it.
                let claim = describe_dataset(&dataset, noise_level)?;
                let sigma = claim
                    .fields
                    .values()
                    .next()
                    .map(|s| s.std)
                    .unwrap_or(1.0);
                let shifted = shift_dataset(&dataset, 6.0 * sigma)?;
                let spec = SellSpec {
                    seller_id: self.member_id.clone(),
                    dataset: shifted,
                    impacts,
                    noise_level,
                    ask_per_point,
                    license_terms: template.clone(),
                };
                market.list_with_attested_descriptor(&spec, claim, tick)?;
            } else {
                let spec = SellSpec {
                    seller_id: self.member_id.clone(),
                    dataset,
                    impacts,
                    noise_level,
                    ask_per_point,
                    license_terms: template.clone(),
                };
                market.generate_product(&spec, tick)?;
            }
        }
        Ok(())
    }

    fn buyer_turn(&mut self, market: &mut Marketplace, tick: Tick) -> Result<()> {
        match self.phase.clone() {
            Phase::Backoff(resume_at) if tick < resume_at => Ok(()),
            Phase::Backoff(_) => {
                self.failed_searches = 0;
                self.phase = Phase::Ready;
                self.search_and_match(market, tick)
            }
            Phase::Ready => self.search_and_match(market, tick),
            Phase::InTxn(txn_id) => self.advance_purchase(market, &txn_id, tick),
        }
    }

    fn subsample_choice(&self) -> SubsampleChoice {
        match self.behavior.archetype {
            Archetype::AdversaryBuyer => SubsampleChoice::Waive,
            _ => SubsampleChoice::Require,
        }
    }

    fn search_and_match(&mut self, market: &mut Marketplace, tick: Tick) -> Result<()> {
        let b = &self.behavior;
        let spec = BuySpec {
            buyer_id: self.member_id.clone(),
            category: b.category.clone(),
            max_price_per_point: b.max_price_per_point,
            max_noise_tolerance: b.noise_tolerance,
            min_seller_reputation: b.min_seller_reputation,
            required_license_terms: RequiredLicenseTerms::any(),
            subsample_policy: self.subsample_choice(),
        };
        let hits = market.market_search(&spec, tick)?;
        let affordable = hits.iter().find(|c| {
            to_micro(c.effective_unit_price)
                .checked_mul(c.point_count)
                .is_some_and(|total| total <= self.budget_micro)
        });
        match affordable {
            None => {
                self.failed_searches += 1;
                if self.failed_searches >= 3 {
                    self.phase = Phase::Backoff(tick + SEARCH_BACKOFF_TICKS);
                }
                Ok(())
            }
            Some(candidate) => {
                self.failed_searches = 0;
                let txn_id = market.match_listing(&self.member_id, &candidate.listing_id, tick)?;
                self.phase = Phase::InTxn(txn_id);
                Ok(())
            }
        }
    }

    fn advance_purchase(
        &mut self,
        market: &mut Marketplace,
        txn_id: &str,
        tick: Tick,
    ) -> Result<()> {
        let txn = market.transaction(txn_id)?;
        let state = txn.state;
        let total = txn.total_price_micro;
        let listing_id = txn.listing_id.clone();
        match state {
            TxnState::Matched => {
                if total <= self.budget_micro {
                    market.accept_price(txn_id, tick)?;
                } else {
                    market.reject_price(txn_id, tick)?;
                    self.phase = Phase::Ready;
                }
                Ok(())
            }
            TxnState::PriceAccepted => self.handle_subsample_stage(market, txn_id, &listing_id, tick),
            TxnState::SubsampleIssued => {
                // Request and response happen in one turn; reaching this
                // state from outside means accept.
                market.accept_subsample(txn_id, tick)?;
                Ok(())
            }
            TxnState::SubsampleAccepted | TxnState::SubsampleWaived => {
                if total <= self.budget_micro {
                    market.fund_escrow(txn_id, tick)?;
                    self.budget_micro -= total;
                } else {
                    market.refuse_funding(txn_id, tick)?;
                    self.phase = Phase::Ready;
                }
                Ok(())
            }
            // The seller's move.
            TxnState::EscrowFunded | TxnState::DataDelivered => Ok(()),
            TxnState::Settled => {
                self.phase = Phase::Ready;
                Ok(())
            }
            TxnState::Aborted(reason) => {
                if reason == AbortReason::DeliveryRefused {
                    self.budget_micro += total;
                }
                self.phase = Phase::Ready;
                Ok(())
            }
        }
    }

    fn handle_subsample_stage(
        &mut self,
        market: &mut Marketplace,
        txn_id: &str,
        listing_id: &str,
        tick: Tick,
    ) -> Result<()> {
        if self.subsample_choice() == SubsampleChoice::Waive {
            market.waive_subsample(txn_id, tick)?;
            return Ok(());
        }
        match market.request_subsample(txn_id, tick) {
            Ok(sub) => {
                let listing = market.listing(listing_id)?;
                let verdict = validate_subsample(
                    &sub,
                    &listing.descriptor,
                    listing.descriptor.declared_noise_level,
                );
                let capricious = self.behavior.reject_probability > 0.0
                    && self.rng.random::<f64>() < self.behavior.reject_probability;
                if !verdict.is_pass() || capricious {
                    market.reject_subsample(txn_id, tick)?;
                    self.phase = Phase::Ready;
                } else {
                    market.accept_subsample(txn_id, tick)?;
                }
                Ok(())
            }
            // Window quota exhausted: hold this position and retry.
            Err(Error::SubsampleQuotaExceeded { .. }) => Ok(()),
            // Privilege revoked: waiving is the only way forward.
            Err(Error::SubsamplingSuspended(_)) => {
                market.waive_subsample(txn_id, tick)?;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }
}

/// Synthetic wearable-style series: a daily rhythm plus personal jitter.
pub fn synth_series(points: u32, category: &str, rng: &mut ChaCha8Rng) -> DataSet {
    let values: Vec<f64> = (0..points)
        .map(|t| {
            let phase = f64::from(t) * core::f64::consts::TAU / 96.0;
            80.0 + 15.0 * crate::math::cos(phase) + 5.0 * standard_normal(rng)
        })
        .collect();
    DataSet::single_field(category, "value", &values).expect("non-empty synthetic series")
}

fn shift_dataset(ds: &DataSet, offset: f64) -> Result<DataSet> {
    let shifted: Vec<f64> = ds.column(0).map(|v| v + offset).collect();
    let mut out = DataSet::single_field(ds.category.clone(), "value", &shifted)?;
    out.provenance = ds.provenance;
    Ok(out)
}
