//! Scenario configuration: agent populations and marketplace parameters.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::license::Lifespan;
use crate::market::MarketParams;
use crate::pricing::PricingParams;
use crate::reputation::ReputationParams;
use crate::risk::HarmImpactVector;
use crate::subsample::SubsamplePolicy;

/// Behavioral archetype an agent group runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Archetype {
    /// Lists a clean and a half-noised copy of fresh data at the quoted
    /// price, delivers on time, settles promptly.
    HonestSeller,
    /// Searches for the cheapest acceptable listing, verifies subsamples
    /// honestly, funds what it can afford.
    HonestBuyer,
    /// Underprices forged data: the attested descriptor comes from a clean
    /// series, the listed points are shifted far away from it.
    JunkSeller,
    /// Refuses any noise at all and waives subsampling, paying whatever
    /// clean data costs.
    AdversaryBuyer,
    /// Requests subsamples and rejects every one of them, keeping the data.
    SubsampleFarmer,
}

impl Archetype {
    /// Stable label recorded with each member so ledger analysis can group
    /// outcomes without knowing the configuration.
    pub fn kind(self) -> &'static str {
        match self {
            Archetype::HonestSeller => "honest_seller",
            Archetype::HonestBuyer => "honest_buyer",
            Archetype::JunkSeller => "junk_seller",
            Archetype::AdversaryBuyer => "adversary_buyer",
            Archetype::SubsampleFarmer => "subsample_farmer",
        }
    }

    /// Member id prefix; agents are named `{prefix}-{ordinal:02}`.
    pub fn id_prefix(self) -> &'static str {
        match self {
            Archetype::HonestSeller => "honest-seller",
            Archetype::HonestBuyer => "honest-buyer",
            Archetype::JunkSeller => "junk-seller",
            Archetype::AdversaryBuyer => "adversary-buyer",
            Archetype::SubsampleFarmer => "subsample-farmer",
        }
    }

    pub fn is_seller(self) -> bool {
        matches!(self, Archetype::HonestSeller | Archetype::JunkSeller)
    }
}

/// Per-group overrides. Unset fields fall back to the archetype defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ask_multiplier: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_levels: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_points: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lifespan_ticks: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perpetual: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclusive: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resale_allowed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extraction_allowed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_price_per_point: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_seller_reputation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reject_probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentGroup {
    pub archetype: Archetype,
    pub count: u32,
    #[serde(default)]
    pub parameters: AgentParams,
}

/// Marketplace-level knobs shared by every agent in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub base_unit_value: f64,
    pub pricing: PricingParams,
    pub reputation: ReputationParams,
    pub subsample: SubsamplePolicy,
    /// Harm impacts by data category; the `"*"` entry is the fallback and
    /// must be present.
    pub risk_defaults: BTreeMap<String, HarmImpactVector>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        let mut risk_defaults = BTreeMap::new();
        risk_defaults.insert(
            "*".to_string(),
            HarmImpactVector::new(2, 3, 1).expect("default impacts"),
        );
        ScenarioParams {
            base_unit_value: 1.0,
            pricing: PricingParams::default(),
            reputation: ReputationParams::default(),
            subsample: SubsamplePolicy::default(),
            risk_defaults,
        }
    }
}

impl ScenarioParams {
    pub fn impacts_for(&self, category: &str) -> HarmImpactVector {
        self.risk_defaults
            .get(category)
            .or_else(|| self.risk_defaults.get("*"))
            .copied()
            .expect("validated risk_defaults")
    }
}

/// A complete, reproducible scenario: same config, same ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub ticks: u64,
    pub agents: Vec<AgentGroup>,
    #[serde(default)]
    pub params: ScenarioParams,
}

impl ScenarioConfig {
    /// The reference population: ten honest pairs around one junk seller,
    /// one subsample farmer, and one noise-averse buyer.
    pub fn golden() -> Self {
        let group = |archetype, count| AgentGroup {
            archetype,
            count,
            parameters: AgentParams::default(),
        };
        ScenarioConfig {
            seed: 42,
            ticks: 500,
            agents: vec![
                group(Archetype::HonestSeller, 10),
                group(Archetype::HonestBuyer, 10),
                group(Archetype::JunkSeller, 1),
                group(Archetype::AdversaryBuyer, 1),
                group(Archetype::SubsampleFarmer, 1),
            ],
            params: ScenarioParams::default(),
        }
    }

    /// Marketplace parameters induced by this scenario.
    pub fn market_params(&self) -> MarketParams {
        MarketParams {
            base_seed: self.seed,
            base_unit_value: self.params.base_unit_value,
            pricing: self.params.pricing,
            reputation: self.params.reputation,
            subsample: self.params.subsample.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(path: impl Into<String>, message: impl Into<String>) -> Error {
            Error::ConfigError {
                path: path.into(),
                message: message.into(),
            }
        }
        if self.ticks == 0 {
            return Err(bad("ticks", "must be at least 1"));
        }
        if self.ticks > 1_000_000 {
            return Err(bad("ticks", "longer than 1,000,000 ticks"));
        }
        if self.agents.is_empty() {
            return Err(bad("agents", "at least one agent group is required"));
        }
        if !self.params.risk_defaults.contains_key("*") {
            return Err(bad(
                "params.risk_defaults",
                "missing the \"*\" fallback entry",
            ));
        }
        if !(self.params.base_unit_value > 0.0 && self.params.base_unit_value.is_finite()) {
            return Err(bad("params.base_unit_value", "must be finite and positive"));
        }
        self.market_params().validate()?;
        for (i, group) in self.agents.iter().enumerate() {
            let at = |field: &str| format!("agents[{i}].{field}");
            if group.count == 0 {
                return Err(bad(at("count"), "empty group"));
            }
            if group.count > 10_000 {
                return Err(bad(at("count"), "more than 10,000 agents"));
            }
            let p = &group.parameters;
            if let Some(mult) = p.ask_multiplier {
                if !(mult > 0.0 && mult.is_finite()) {
                    return Err(bad(
                        at("parameters.ask_multiplier"),
                        "must be finite and positive",
                    ));
                }
            }
            if let Some(levels) = &p.noise_levels {
                if levels.is_empty() {
                    return Err(bad(at("parameters.noise_levels"), "empty list"));
                }
                if levels.iter().any(|n| !(0.0..=1.0).contains(n)) {
                    return Err(bad(
                        at("parameters.noise_levels"),
                        "levels must lie in [0, 1]",
                    ));
                }
            }
            if p.dataset_points == Some(0) {
                return Err(bad(at("parameters.dataset_points"), "empty dataset"));
            }
            if let Some(prob) = p.reject_probability {
                if !(0.0..=1.0).contains(&prob) {
                    return Err(bad(
                        at("parameters.reject_probability"),
                        "must lie in [0, 1]",
                    ));
                }
            }
            if let Some(tol) = p.noise_tolerance {
                if !(0.0..=1.0).contains(&tol) {
                    return Err(bad(
                        at("parameters.noise_tolerance"),
                        "must lie in [0, 1]",
                    ));
                }
            }
            for (field, value) in [
                ("budget", p.budget),
                ("max_price_per_point", p.max_price_per_point),
            ] {
                if let Some(v) = value {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(bad(
                            format!("agents[{i}].parameters.{field}"),
                            "must be finite and non-negative",
                        ));
                    }
                }
            }
            if let Some(floor) = p.min_seller_reputation {
                if !(0.0..=1.0).contains(&floor) {
                    return Err(bad(
                        at("parameters.min_seller_reputation"),
                        "must lie in [0, 1]",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The population a config registers, in registration order. Ordinals are
/// numbered per archetype across groups, so two groups sharing an archetype
/// (say, exclusive and open sellers) never collide on member ids.
pub fn population(config: &ScenarioConfig) -> Vec<(String, Archetype, ResolvedBehavior)> {
    let mut next_ordinal: BTreeMap<Archetype, u32> = BTreeMap::new();
    let mut out = Vec::new();
    for group in &config.agents {
        let ordinal = next_ordinal.entry(group.archetype).or_insert(0);
        for _ in 0..group.count {
            let id = format!("{}-{:02}", group.archetype.id_prefix(), ordinal);
            out.push((
                id,
                group.archetype,
                resolve_behavior(group.archetype, &group.parameters),
            ));
            *ordinal += 1;
        }
    }
    out
}

/// Fully resolved behavior for one agent: archetype defaults with the
/// group's overrides applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedBehavior {
    pub archetype: Archetype,
    pub ask_multiplier: f64,
    pub noise_levels: Vec<f64>,
    pub dataset_points: u32,
    pub lifespan: Lifespan,
    pub exclusive: bool,
    pub resale_allowed: bool,
    pub extraction_allowed: bool,
    pub category: String,
    pub budget: f64,
    pub noise_tolerance: f64,
    pub max_price_per_point: f64,
    pub min_seller_reputation: f64,
    pub reject_probability: f64,
}

pub const DEFAULT_CATEGORY: &str = "activity/step_count";

pub fn resolve_behavior(archetype: Archetype, p: &AgentParams) -> ResolvedBehavior {
    let (ask_multiplier, noise_levels, reject_probability) = match archetype {
        Archetype::HonestSeller => (1.0, vec![0.0, 0.5], 0.0),
        Archetype::JunkSeller => (0.3, vec![0.5], 0.0),
        Archetype::HonestBuyer => (1.0, vec![], 0.0),
        Archetype::AdversaryBuyer => (1.0, vec![], 0.0),
        Archetype::SubsampleFarmer => (1.0, vec![], 1.0),
    };
    let (budget, noise_tolerance) = match archetype {
        Archetype::AdversaryBuyer => (20_000.0, 0.0),
        Archetype::SubsampleFarmer => (1_000_000.0, 1.0),
        _ => (1_000_000.0, 0.5),
    };
    let lifespan = match (p.perpetual, p.lifespan_ticks) {
        (Some(true), _) => Lifespan::Perpetual,
        (_, Some(ticks)) => Lifespan::Ticks(ticks),
        _ => Lifespan::Ticks(365),
    };
    ResolvedBehavior {
        archetype,
        ask_multiplier: p.ask_multiplier.unwrap_or(ask_multiplier),
        noise_levels: p.noise_levels.clone().unwrap_or(noise_levels),
        dataset_points: p.dataset_points.unwrap_or(1000),
        lifespan,
        exclusive: p.exclusive.unwrap_or(false),
        resale_allowed: p.resale_allowed.unwrap_or(false),
        extraction_allowed: p.extraction_allowed.unwrap_or(false),
        category: p.category.clone().unwrap_or_else(|| DEFAULT_CATEGORY.to_string()),
        budget: p.budget.unwrap_or(budget),
        noise_tolerance: p.noise_tolerance.unwrap_or(noise_tolerance),
        max_price_per_point: p.max_price_per_point.unwrap_or(10.0),
        min_seller_reputation: p.min_seller_reputation.unwrap_or(0.0),
        reject_probability: p.reject_probability.unwrap_or(reject_probability),
    }
}
