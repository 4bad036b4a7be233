//! Buyer-side sample validation, the adverse-selection countermeasure.
//!
//! A listing's descriptor is the seller's own claim about the data. Before
//! funding escrow a buyer may draw a small deterministic sample and test the
//! claim: sample statistics that wander outside a noise-widened three-sigma
//! band around the descriptor brand the listing as junk. Because the sample
//! reveals real points, requests are capped per buyer, category, and time
//! window, and the marketplace tracks buyers who reject passing samples.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{column_stats, DataDescriptor, DataPoint, DataSet, FieldStats};
use crate::error::{Error, Result};
use crate::math;
use crate::member::Tick;

/// Draw-size and rate-limit knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubsamplePolicy {
    /// Fraction of the dataset revealed per draw.
    pub fraction: f64,
    /// Lower bound on the draw; small sets are revealed whole.
    pub min_points: u64,
    /// Requests allowed per buyer per category per window.
    pub request_cap: u32,
    /// Length of the tumbling rate-limit window.
    pub window_ticks: u64,
}

impl Default for SubsamplePolicy {
    fn default() -> Self {
        SubsamplePolicy {
            fraction: 0.05,
            min_points: 10,
            request_cap: 3,
            window_ticks: 100,
        }
    }
}

impl SubsamplePolicy {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool); 4] = [
            (
                "fraction",
                self.fraction > 0.0 && self.fraction <= 1.0,
            ),
            ("min_points", self.min_points >= 1),
            ("request_cap", self.request_cap >= 1),
            ("window_ticks", self.window_ticks >= 1),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::ConfigError {
                    path: format!("params.subsample.{name}"),
                    message: "value outside its allowed range".into(),
                });
            }
        }
        Ok(())
    }

    /// Tumbling-window index a tick falls into.
    pub fn window_index(&self, tick: Tick) -> u64 {
        tick / self.window_ticks
    }

    /// Points revealed for a dataset of `count` points:
    /// `min(count, max(ceil(fraction * count), min_points))`.
    pub fn sample_size(&self, count: u64) -> u64 {
        let by_fraction = math::ceil(self.fraction * count as f64) as u64;
        math::min(count as f64, math::max(by_fraction as f64, self.min_points as f64)) as u64
    }
}

/// The points actually revealed to the buyer, plus their statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subsample {
    pub txn_id: String,
    pub fields: Vec<String>,
    pub points: Vec<DataPoint>,
    pub stats: BTreeMap<String, FieldStats>,
    pub seed: u64,
}

/// Outcome of checking a subsample against the listing's descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsampleVerdict {
    Pass,
    Fail(String),
}

impl SubsampleVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, SubsampleVerdict::Pass)
    }
}

/// Draws a seeded pseudorandom subsample, returned in timestamp order.
///
/// # Errors
///
/// `EmptyDataset` when there is nothing to draw from.
pub fn draw_subsample(
    dataset: &DataSet,
    policy: &SubsamplePolicy,
    seed: u64,
    txn_id: impl Into<String>,
) -> Result<Subsample> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let count = dataset.len();
    let size = policy.sample_size(count as u64) as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, count, size).into_vec();
    indices.sort_unstable();
    let points: Vec<DataPoint> = indices.iter().map(|&i| dataset.points[i].clone()).collect();

    let mut stats = BTreeMap::new();
    for (idx, name) in dataset.fields.iter().enumerate() {
        let col: Vec<f64> = points.iter().map(|p| p.values[idx]).collect();
        stats.insert(name.clone(), column_stats(&col));
    }
    Ok(Subsample {
        txn_id: txn_id.into(),
        fields: dataset.fields.clone(),
        points,
        stats,
        seed,
    })
}

/// Tests a subsample against the descriptor it was advertised under.
///
/// Per field, with `tol = (3 * descriptor_std / sqrt(sample_size)) * (1 +
/// noise_level)`: the sample mean must sit within `descriptor_mean ± tol`
/// and the sample extremes inside the descriptor bounds widened by `tol`.
/// The noise factor keeps honestly noised listings from failing their own
/// declared distortion.
pub fn validate_subsample(
    subsample: &Subsample,
    descriptor: &DataDescriptor,
    noise_level: f64,
) -> SubsampleVerdict {
    if subsample.points.is_empty() {
        return SubsampleVerdict::Fail("empty subsample".into());
    }
    let m = subsample.points.len() as f64;
    for (field, expected) in &descriptor.fields {
        let Some(actual) = subsample.stats.get(field) else {
            return SubsampleVerdict::Fail(format!("field {field} missing from subsample"));
        };
        let tol = (3.0 * expected.std / math::sqrt(m)) * (1.0 + noise_level);
        if math::abs(actual.mean - expected.mean) > tol {
            return SubsampleVerdict::Fail(format!(
                "field {field}: sample mean {} outside {} +/- {tol}",
                actual.mean, expected.mean
            ));
        }
        if actual.min < expected.min - tol {
            return SubsampleVerdict::Fail(format!(
                "field {field}: sample min {} below descriptor min {} - {tol}",
                actual.min, expected.min
            ));
        }
        if actual.max > expected.max + tol {
            return SubsampleVerdict::Fail(format!(
                "field {field}: sample max {} above descriptor max {} + {tol}",
                actual.max, expected.max
            ));
        }
    }
    SubsampleVerdict::Pass
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::describe_dataset;
    use crate::noise::{inject_noise, standard_normal, NoiseSpec};

    fn policy() -> SubsamplePolicy {
        SubsamplePolicy::default()
    }

    fn wavy(n: usize, seed: u64) -> DataSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..n)
            .map(|t| {
                80.0 + 15.0 * math::cos(t as f64 * core::f64::consts::TAU / 96.0)
                    + 5.0 * standard_normal(&mut rng)
            })
            .collect();
        DataSet::single_field("activity/walking", "v", &values).unwrap()
    }

    #[test]
    fn sample_sizes_follow_the_fraction_and_floor() {
        let p = policy();
        assert_eq!(p.sample_size(1000), 50);
        assert_eq!(p.sample_size(8), 8);
        assert_eq!(p.sample_size(100), 10);
        assert_eq!(p.sample_size(10), 10);
        assert_eq!(p.sample_size(201), 11);
        assert_eq!(p.sample_size(1), 1);
    }

    #[test]
    fn window_indices_are_tumbling() {
        let p = policy();
        assert_eq!(p.window_index(0), 0);
        assert_eq!(p.window_index(99), 0);
        assert_eq!(p.window_index(100), 1);
        assert_eq!(p.window_index(250), 2);
    }

    #[test]
    fn draw_is_deterministic_and_a_subset() {
        let ds = wavy(400, 1);
        let a = draw_subsample(&ds, &policy(), 77, "T1").unwrap();
        let b = draw_subsample(&ds, &policy(), 77, "T1").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 20);
        // Timestamp order and membership in the original set.
        let mut last = None;
        for p in &a.points {
            if let Some(prev) = last {
                assert!(p.timestamp > prev);
            }
            last = Some(p.timestamp);
            assert_eq!(ds.points[p.timestamp as usize].values, p.values);
        }
        let c = draw_subsample(&ds, &policy(), 78, "T1").unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn honest_subsamples_nearly_always_pass() {
        let ds = wavy(1000, 7);
        let noised = inject_noise(&ds, NoiseSpec::new(0.25, 40).unwrap()).unwrap();
        let descriptor = describe_dataset(&noised, 0.25).unwrap();
        let mut passes = 0;
        for seed in 0..100 {
            let sub = draw_subsample(&noised, &policy(), seed, "T1").unwrap();
            if validate_subsample(&sub, &descriptor, 0.25).is_pass() {
                passes += 1;
            }
        }
        assert!(passes >= 99, "only {passes}/100 honest draws passed");
    }

    #[test]
    fn shifted_junk_fails_validation() {
        let clean = wavy(1000, 9);
        let descriptor = describe_dataset(&clean, 0.5).unwrap();
        let sigma = descriptor.fields["v"].std;
        let mut junk = clean.clone();
        for p in &mut junk.points {
            p.values[0] += 5.0 * sigma;
        }
        for seed in 0..20 {
            let sub = draw_subsample(&junk, &policy(), seed, "T1").unwrap();
            let verdict = validate_subsample(&sub, &descriptor, 0.5);
            assert!(matches!(verdict, SubsampleVerdict::Fail(_)), "seed {seed}");
        }
    }

    #[test]
    fn tolerance_widens_with_declared_noise() {
        // A sample mean offset that fails at noise 0 passes at noise 1,
        // because the band doubles.
        let ds = wavy(1000, 3);
        let descriptor = describe_dataset(&ds, 0.0).unwrap();
        let sigma = descriptor.fields["v"].std;
        let mut sub = draw_subsample(&ds, &policy(), 5, "T1").unwrap();
        let m = sub.points.len() as f64;
        let offset = 4.5 * sigma / math::sqrt(m);
        let stats = sub.stats.get_mut("v").unwrap();
        stats.mean += offset;
        // Keep extremes inside so only the mean check can trip.
        stats.min = descriptor.fields["v"].min;
        stats.max = descriptor.fields["v"].max;
        assert!(matches!(
            validate_subsample(&sub, &descriptor, 0.0),
            SubsampleVerdict::Fail(_)
        ));
        assert!(validate_subsample(&sub, &descriptor, 1.0).is_pass());
    }

    #[test]
    fn out_of_bounds_extremes_fail() {
        let ds = wavy(500, 11);
        let descriptor = describe_dataset(&ds, 0.0).unwrap();
        let mut sub = draw_subsample(&ds, &policy(), 2, "T1").unwrap();
        sub.stats.get_mut("v").unwrap().max = descriptor.fields["v"].max + 1000.0;
        assert!(matches!(
            validate_subsample(&sub, &descriptor, 0.0),
            SubsampleVerdict::Fail(_)
        ));
    }

    #[test]
    fn policy_bounds_are_enforced() {
        let bad = SubsamplePolicy {
            fraction: 0.0,
            ..SubsamplePolicy::default()
        };
        assert!(matches!(bad.validate(), Err(Error::ConfigError { .. })));
        let bad = SubsamplePolicy {
            window_ticks: 0,
            ..SubsamplePolicy::default()
        };
        assert!(matches!(bad.validate(), Err(Error::ConfigError { .. })));
    }
}
