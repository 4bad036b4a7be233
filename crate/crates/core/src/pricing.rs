//! Price formation: recommendation, noise enforcement, reputation premium.
//!
//! Value is a product of independent factors so every term stays auditable:
//!
//! ```text
//! recommended = U * Q * (1 + alpha*R) * (1 - beta*n) * X * S * T_L * D
//! ```
//!
//! where U is the seller's base unit value, Q the point count, R the
//! normalized risk (riskier data is worth more to the seller, who carries
//! the exposure), n the declared noise level (the one discount a seller
//! cannot refuse), X and S the exclusivity and resale multipliers, T_L the
//! lifespan factor, and D the demand index observed in the category.
//!
//! Sellers may ask whatever they like gross of noise; the marketplace
//! applies the noise discount mechanically at listing time. Buyers below
//! the reputation threshold pay a premium on top of the listing price, and
//! that premium flows to the seller as compensation for counterparty risk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::license::{LicenseTemplate, Lifespan};
use crate::math;
use crate::noise::check_level;
use crate::risk::RiskAssessment;

/// Coefficients for every pricing formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PricingParams {
    /// Risk premium coefficient.
    pub alpha: f64,
    /// Maximum noise discount; n=1 prices at (1 - beta).
    pub beta: f64,
    /// Buyer-reputation premium coefficient.
    pub gamma: f64,
    /// Reputation at or above this pays no premium.
    pub rep_threshold: f64,
    pub exclusivity_mult: f64,
    pub resale_mult: f64,
    /// Lifespan factor gain per capped year.
    pub lifespan_half_gain: f64,
    pub lifespan_cap_years: f64,
    /// Demand index is clamped into this interval.
    pub demand_bounds: (f64, f64),
}

impl Default for PricingParams {
    fn default() -> Self {
        PricingParams {
            alpha: 1.0,
            beta: 0.8,
            gamma: 2.0,
            rep_threshold: 0.5,
            exclusivity_mult: 1.5,
            resale_mult: 1.25,
            lifespan_half_gain: 0.5,
            lifespan_cap_years: 2.0,
            demand_bounds: (0.5, 2.0),
        }
    }
}

impl PricingParams {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool); 8] = [
            ("alpha", self.alpha >= 0.0 && self.alpha.is_finite()),
            ("beta", (0.0..=1.0).contains(&self.beta)),
            ("gamma", self.gamma >= 0.0 && self.gamma.is_finite()),
            ("rep_threshold", (0.0..=1.0).contains(&self.rep_threshold)),
            ("exclusivity_mult", self.exclusivity_mult >= 1.0),
            ("resale_mult", self.resale_mult >= 1.0),
            (
                "lifespan_half_gain",
                self.lifespan_half_gain >= 0.0 && self.lifespan_cap_years >= 0.0,
            ),
            (
                "demand_bounds",
                self.demand_bounds.0 > 0.0 && self.demand_bounds.0 <= self.demand_bounds.1,
            ),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::ConfigError {
                    path: alloc::format!("params.pricing.{name}"),
                    message: "coefficient outside its allowed range".into(),
                });
            }
        }
        Ok(())
    }
}

/// Every multiplicative term of a recommendation, for audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceFactors {
    pub base_unit_value: f64,
    pub quantity: f64,
    pub risk_premium: f64,
    pub noise_discount: f64,
    pub exclusivity: f64,
    pub resale: f64,
    pub lifespan: f64,
    pub demand: f64,
}

impl PriceFactors {
    /// Recomputes the recommendation from its parts.
    pub fn product(&self) -> f64 {
        self.base_unit_value
            * self.quantity
            * self.risk_premium
            * self.noise_discount
            * self.exclusivity
            * self.resale
            * self.lifespan
            * self.demand
    }
}

/// A recommendation plus the factors that built it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceQuote {
    pub recommended: f64,
    pub factors: PriceFactors,
}

impl PriceQuote {
    /// The recommendation gross of the noise discount: the natural seller
    /// ask. A seller asking this lists at exactly `recommended` once the
    /// marketplace applies the discount.
    pub fn gross_value(&self) -> f64 {
        let f = self.factors;
        f.base_unit_value * f.quantity * f.risk_premium * f.exclusivity * f.resale * f.lifespan
            * f.demand
    }
}

/// Supply/demand pressure in a category, clamped to the configured bounds.
pub fn demand_index(
    open_buy_specs: u64,
    active_listings: u64,
    params: &PricingParams,
) -> f64 {
    let raw = (1.0 + open_buy_specs as f64) / (1.0 + active_listings as f64);
    math::clamp(raw, params.demand_bounds.0, params.demand_bounds.1)
}

fn lifespan_factor(lifespan: &Lifespan, params: &PricingParams) -> f64 {
    let capped_years = match lifespan {
        Lifespan::Perpetual => params.lifespan_cap_years,
        Lifespan::Ticks(d) => math::min(*d as f64 / 365.0, params.lifespan_cap_years),
    };
    1.0 + params.lifespan_half_gain * capped_years
}

/// Quotes a full recommendation for a prospective listing.
///
/// # Errors
///
/// `InvalidPricingInput` on a non-positive or non-finite base value, zero
/// quantity, an out-of-range risk score, or a demand index outside the
/// configured bounds; `InvalidNoiseLevel` outside [0, 1].
pub fn recommend_price(
    base_unit_value: f64,
    quantity: u64,
    risk: &RiskAssessment,
    noise_level: f64,
    license: &LicenseTemplate,
    demand: f64,
    params: &PricingParams,
) -> Result<PriceQuote> {
    if !(base_unit_value > 0.0 && base_unit_value.is_finite()) {
        return Err(Error::InvalidPricingInput(alloc::format!(
            "base unit value {base_unit_value} must be positive"
        )));
    }
    if quantity == 0 {
        return Err(Error::InvalidPricingInput("quantity must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&risk.normalized) {
        return Err(Error::InvalidPricingInput(alloc::format!(
            "risk score {} outside [0, 1]",
            risk.normalized
        )));
    }
    check_level(noise_level)?;
    if !(params.demand_bounds.0..=params.demand_bounds.1).contains(&demand) {
        return Err(Error::InvalidPricingInput(alloc::format!(
            "demand index {demand} outside bounds"
        )));
    }

    let factors = PriceFactors {
        base_unit_value,
        quantity: quantity as f64,
        risk_premium: 1.0 + params.alpha * risk.normalized,
        noise_discount: 1.0 - params.beta * noise_level,
        exclusivity: if license.exclusive {
            params.exclusivity_mult
        } else {
            1.0
        },
        resale: if license.resale_allowed {
            params.resale_mult
        } else {
            1.0
        },
        lifespan: lifespan_factor(&license.lifespan, params),
        demand,
    };
    Ok(PriceQuote {
        recommended: factors.product(),
        factors,
    })
}

/// The one modification a seller cannot refuse: the noise discount applied
/// to their gross ask at listing time.
///
/// # Errors
///
/// `InvalidAsk` on a non-positive ask; `InvalidNoiseLevel` outside [0, 1].
pub fn enforced_listing_price(
    seller_ask: f64,
    noise_level: f64,
    params: &PricingParams,
) -> Result<f64> {
    if !(seller_ask > 0.0 && seller_ask.is_finite()) {
        return Err(Error::InvalidAsk(seller_ask));
    }
    check_level(noise_level)?;
    Ok(seller_ask * (1.0 - params.beta * noise_level))
}

/// What a particular buyer actually pays: the listing price plus a premium
/// that grows as their reputation falls below the threshold.
pub fn buyer_effective_price(
    listing_price: f64,
    buyer_reputation: f64,
    params: &PricingParams,
) -> f64 {
    let shortfall = math::max(0.0, params.rep_threshold - buyer_reputation);
    listing_price * (1.0 + params.gamma * shortfall)
}
