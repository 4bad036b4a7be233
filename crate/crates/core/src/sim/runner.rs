//! The tick loop: registers the population, then gives every agent one
//! turn per tick in a seed-determined order.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::event::{derive_seed, EventLog};
use crate::market::Marketplace;
use crate::member::{MemberId, Role};
use crate::sim::agents::Agent;
use crate::sim::config::{population, ScenarioConfig};
use crate::sim::metrics::{metrics_from_ledger, ScenarioMetrics};

/// Runs a scenario to completion. The same config always produces the same
/// ledger, byte for byte; the metrics are computed from that ledger alone.
pub fn run_scenario(config: &ScenarioConfig) -> Result<(EventLog, ScenarioMetrics)> {
    config.validate()?;
    let mut market = Marketplace::new(config.market_params())?;

    let mut agents: Vec<Agent> = Vec::new();
    for (id, archetype, behavior) in population(config) {
        let id = MemberId::new(id);
        let roles = if archetype.is_seller() {
            vec![Role::Seller]
        } else {
            vec![Role::Buyer]
        };
        market.register_member(&id, roles, archetype.kind(), 0)?;
        agents.push(Agent::new(id, behavior, config.seed));
    }

    for tick in 1..=config.ticks {
        // Turn order is drawn fresh each tick from the scenario seed, so
        // no archetype systematically moves first.
        let mut order: Vec<usize> = (0..agents.len()).collect();
        let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "tick-order", tick));
        order.shuffle(&mut order_rng);
        for idx in order {
            agents[idx].step(&mut market, &config.params, tick)?;
        }
    }

    let metrics = metrics_from_ledger(market.log())?;
    Ok((market.into_log(), metrics))
}
