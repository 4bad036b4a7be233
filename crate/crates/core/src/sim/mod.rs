//! Scenario simulation: agent archetypes, the tick loop, and ledger
//! metrics. A scenario is a seeded population acting through the public
//! marketplace commands; its entire output is the event ledger, and every
//! metric is recomputable from that ledger alone.

pub mod agents;
pub mod config;
pub mod metrics;
pub mod runner;

pub use agents::{synth_series, Agent};
pub use config::{
    population, resolve_behavior, AgentGroup, AgentParams, Archetype, ResolvedBehavior,
    ScenarioConfig, ScenarioParams, DEFAULT_CATEGORY,
};
pub use metrics::{
    compute_metrics, escrow_totals, metrics_from_ledger, EscrowTotals, ScenarioMetrics,
    TrajectoryPoint,
};
pub use runner::run_scenario;
