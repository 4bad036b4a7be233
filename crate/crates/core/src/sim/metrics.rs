//! Ledger analysis. Every number here is computed from an exported event
//! stream alone, so a saved ledger file carries its own evaluation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::event::{EventBody, EventLog};
use crate::member::{MemberId, Tick};
use crate::sim::config::{population, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub tick: Tick,
    pub score: f64,
}

/// Summary of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub settled_count: u64,
    pub aborted_by_reason: BTreeMap<String, u64>,
    /// Mean settled per-point price (credits), grouped by the listing's
    /// declared noise level.
    pub mean_unit_price_by_noise_band: BTreeMap<String, f64>,
    /// Mean settled per-point price paid by buyers labeled honest.
    pub honest_cost_per_point: Option<f64>,
    /// Mean settled per-point price paid by buyers labeled adversary.
    pub adversary_cost_per_point: Option<f64>,
    pub junk_expulsion_tick: Option<Tick>,
    pub farmer_suspension_tick: Option<Tick>,
    /// Reputation score after each update, per member.
    pub reputation_trajectories: BTreeMap<String, Vec<TrajectoryPoint>>,
    /// SHA-256 of the exported ledger; the identity of the run.
    pub event_log_hash: String,
}

/// Escrow flows summed over a ledger. Conservation requires
/// `funded == receipts + refunds + still-held`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EscrowTotals {
    pub funded_micro: u64,
    pub receipt_micro: u64,
    pub refund_micro: u64,
}

pub fn escrow_totals(log: &EventLog) -> EscrowTotals {
    let mut totals = EscrowTotals::default();
    for event in log.events() {
        match &event.body {
            EventBody::EscrowFunded { amount_micro, .. } => totals.funded_micro += amount_micro,
            EventBody::Settled { receipt_micro, .. } => totals.receipt_micro += receipt_micro,
            EventBody::Aborted { refund_micro, .. } => totals.refund_micro += refund_micro,
            _ => {}
        }
    }
    totals
}

fn noise_band(level: f64) -> &'static str {
    if level < 0.25 {
        "[0.00,0.25)"
    } else if level < 0.5 {
        "[0.25,0.50)"
    } else if level < 0.75 {
        "[0.50,0.75)"
    } else {
        "[0.75,1.00]"
    }
}

#[derive(Default)]
struct MeanAcc {
    sum: f64,
    n: u64,
}

impl MeanAcc {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Computes metrics from an event stream and nothing else.
pub fn metrics_from_ledger(log: &EventLog) -> Result<ScenarioMetrics> {
    let mut kinds: BTreeMap<MemberId, String> = BTreeMap::new();
    let mut listing_noise: BTreeMap<String, f64> = BTreeMap::new();
    // txn id -> (buyer, listing id, unit price in micro)
    let mut txns: BTreeMap<String, (MemberId, String, u64)> = BTreeMap::new();

    let mut settled_count = 0u64;
    let mut aborted_by_reason: BTreeMap<String, u64> = BTreeMap::new();
    let mut band_means: BTreeMap<&'static str, MeanAcc> = BTreeMap::new();
    let mut honest = MeanAcc::default();
    let mut adversary = MeanAcc::default();
    let mut junk_expulsion_tick = None;
    let mut farmer_suspension_tick = None;
    let mut trajectories: BTreeMap<String, Vec<TrajectoryPoint>> = BTreeMap::new();

    for event in log.events() {
        match &event.body {
            EventBody::Identified {
                member, agent_kind, ..
            } => {
                kinds.entry(member.clone()).or_insert_with(|| agent_kind.clone());
                trajectories.entry(member.as_str().to_string()).or_default();
            }
            EventBody::Listed { listing, .. } => {
                listing_noise.insert(
                    listing.listing_id.clone(),
                    listing.descriptor.declared_noise_level,
                );
            }
            EventBody::Matched {
                txn_id,
                buyer,
                listing_id,
                unit_price_micro,
                ..
            } => {
                txns.insert(
                    txn_id.clone(),
                    (buyer.clone(), listing_id.clone(), *unit_price_micro),
                );
            }
            EventBody::Settled { txn_id, .. } => {
                settled_count += 1;
                let Some((buyer, listing_id, unit_micro)) = txns.get(txn_id) else {
                    return Err(Error::LedgerParse {
                        line: event.seq as usize,
                        message: format!("settlement of unmatched transaction {txn_id}"),
                    });
                };
                let unit_credits = *unit_micro as f64 / 1_000_000.0;
                if let Some(noise) = listing_noise.get(listing_id) {
                    band_means.entry(noise_band(*noise)).or_default().push(unit_credits);
                }
                match kinds.get(buyer).map(String::as_str) {
                    Some("honest_buyer") => honest.push(unit_credits),
                    Some("adversary_buyer") => adversary.push(unit_credits),
                    _ => {}
                }
            }
            EventBody::Aborted { reason, .. } => {
                *aborted_by_reason.entry(reason.as_str().to_string()).or_insert(0) += 1;
            }
            EventBody::ReputationUpdated {
                member, new_score, ..
            } => {
                trajectories
                    .entry(member.as_str().to_string())
                    .or_default()
                    .push(TrajectoryPoint {
                        tick: event.tick,
                        score: *new_score,
                    });
            }
            EventBody::MemberExpelled { member, .. } => {
                if junk_expulsion_tick.is_none()
                    && kinds.get(member).is_some_and(|k| k == "junk_seller")
                {
                    junk_expulsion_tick = Some(event.tick);
                }
            }
            EventBody::SubsamplingSuspended { member } => {
                if farmer_suspension_tick.is_none()
                    && kinds.get(member).is_some_and(|k| k == "subsample_farmer")
                {
                    farmer_suspension_tick = Some(event.tick);
                }
            }
            _ => {}
        }
    }

    let mean_unit_price_by_noise_band = band_means
        .into_iter()
        .filter_map(|(band, acc)| acc.mean().map(|m| (band.to_string(), m)))
        .collect();

    let digest = Sha256::digest(log.export_jsonl().as_bytes());
    Ok(ScenarioMetrics {
        settled_count,
        aborted_by_reason,
        mean_unit_price_by_noise_band,
        honest_cost_per_point: honest.mean(),
        adversary_cost_per_point: adversary.mean(),
        junk_expulsion_tick,
        farmer_suspension_tick,
        reputation_trajectories: trajectories,
        event_log_hash: hex::encode(digest),
    })
}

/// Metrics with a population cross-check: the ledger must contain exactly
/// the members the config would register, with matching labels.
pub fn compute_metrics(log: &EventLog, config: &ScenarioConfig) -> Result<ScenarioMetrics> {
    config.validate()?;
    let mut registered: BTreeMap<MemberId, &str> = BTreeMap::new();
    for event in log.events() {
        if let EventBody::Identified {
            member, agent_kind, ..
        } = &event.body
        {
            registered.entry(member.clone()).or_insert(agent_kind);
        }
    }
    for (id, archetype, _) in population(config) {
        let id = MemberId::new(id);
        match registered.get(&id) {
            Some(kind) if *kind == archetype.kind() => {}
            Some(kind) => {
                return Err(Error::ConfigError {
                    path: "agents".to_string(),
                    message: format!(
                        "ledger labels {id} as {kind}, config expects {}",
                        archetype.kind()
                    ),
                });
            }
            None => {
                return Err(Error::ConfigError {
                    path: "agents".to_string(),
                    message: format!("ledger never identifies {id}"),
                });
            }
        }
    }
    metrics_from_ledger(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ledger_yields_zeroed_metrics() {
        let log = EventLog::new();
        let m = metrics_from_ledger(&log).unwrap();
        assert_eq!(m.settled_count, 0);
        assert!(m.aborted_by_reason.is_empty());
        assert!(m.mean_unit_price_by_noise_band.is_empty());
        assert_eq!(m.honest_cost_per_point, None);
        assert_eq!(m.adversary_cost_per_point, None);
        assert_eq!(m.junk_expulsion_tick, None);
        assert!(m.reputation_trajectories.is_empty());
        // SHA-256 of zero bytes.
        assert_eq!(
            m.event_log_hash,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn noise_bands_cover_the_unit_interval() {
        assert_eq!(noise_band(0.0), "[0.00,0.25)");
        assert_eq!(noise_band(0.25), "[0.25,0.50)");
        assert_eq!(noise_band(0.4999), "[0.25,0.50)");
        assert_eq!(noise_band(0.5), "[0.50,0.75)");
        assert_eq!(noise_band(0.75), "[0.75,1.00]");
        assert_eq!(noise_band(1.0), "[0.75,1.00]");
    }

    #[test]
    fn metrics_round_trip_through_json() {
        let log = EventLog::new();
        let m = metrics_from_ledger(&log).unwrap();
        let text = serde_json::to_string_pretty(&m).unwrap();
        let back: ScenarioMetrics = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
