//! Privacy noise injection and the utility it costs.
//!
//! Perturbation model: each field value gains an independent zero-mean
//! Gaussian error with standard deviation `level * std(field)`, where the
//! std is the population std of that field in the original data. Level 0
//! returns the input bit-identically; level 1 drowns a field in its own
//! variance.
//!
//! Randomness: a ChaCha8 stream keyed by the spec seed, consumed point-major
//! then field-minor, mapped through Box-Muller over libm. The generator and
//! the math are both platform-pinned, so a (dataset, level, seed) triple
//! produces the same noised bytes everywhere.
//!
//! Utility is the buyer-side mirror of the same knob: 1 minus the mean
//! normalized RMSE across fields, floored at 0. More noise, less utility.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{column_stats, DataSet};
use crate::error::{Error, Result};
use crate::math;

/// How hard to perturb and with which stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Fraction of each field's own std injected as error, in [0, 1].
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(level: f64, seed: u64) -> Result<Self> {
        check_level(level)?;
        Ok(NoiseSpec { level, seed })
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if !level.is_finite() || !(0.0..=1.0).contains(&level) {
        return Err(Error::InvalidNoiseLevel(level));
    }
    Ok(())
}

/// One standard normal draw via Box-Muller.
///
/// Consumes exactly two `u64`s from the stream. The cosine branch alone is
/// used; the paired sine draw is discarded to keep the stream layout simple.
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    // u1 in (0, 1] so the log stays finite; u2 in [0, 1).
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(core::f64::consts::TAU * u2)
}

/// Perturbs a dataset into the product actually delivered to buyers.
/// Category, fields, timestamps, and provenance pass through untouched;
/// only the values move.
///
/// # Errors
///
/// `InvalidNoiseLevel` outside [0, 1], `EmptyDataset` on no points.
pub fn inject_noise(dataset: &DataSet, spec: NoiseSpec) -> Result<DataSet> {
    check_level(spec.level)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut noised = dataset.clone();
    if spec.level == 0.0 {
        return Ok(noised);
    }

    let sigmas: Vec<f64> = (0..dataset.fields.len())
        .map(|idx| {
            let col: Vec<f64> = dataset.column(idx).collect();
            column_stats(&col).std
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for point in &mut noised.points {
        for (value, sigma) in point.values.iter_mut().zip(&sigmas) {
            // Constant fields have sigma 0 and pass through unchanged,
            // but the draw still happens so the stream layout is stable.
            *value += standard_normal(&mut rng) * (spec.level * sigma);
        }
    }
    Ok(noised)
}

/// Fraction of statistical usefulness surviving the noise, in [0, 1].
///
/// Per field: `nrmse = rmse(original, noised) / std(original)`; a constant
/// field contributes 0 when untouched and saturates the score to 0 when
/// perturbed. The overall score is `max(0, 1 - mean(nrmse))`.
pub fn utility_score(original: &DataSet, noised: &DataSet) -> Result<f64> {
    if original.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if original.fields != noised.fields {
        return Err(Error::ShapeMismatch(String::from("field names differ")));
    }
    if original.len() != noised.len() {
        return Err(Error::ShapeMismatch(format!(
            "point counts differ: {} vs {}",
            original.len(),
            noised.len()
        )));
    }

    let n = original.len() as f64;
    let mut nrmse_sum = 0.0;
    for idx in 0..original.fields.len() {
        let col: Vec<f64> = original.column(idx).collect();
        let sigma = column_stats(&col).std;
        let mut sq = 0.0;
        for (o, d) in original.column(idx).zip(noised.column(idx)) {
            let e = o - d;
            sq += e * e;
        }
        let rmse = math::sqrt(sq / n);
        nrmse_sum += if sigma > 0.0 {
            rmse / sigma
        } else if rmse == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    let mean_nrmse = nrmse_sum / original.fields.len() as f64;
    Ok(math::max(0.0, 1.0 - mean_nrmse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataPoint;
    use alloc::vec;
    use proptest::prelude::*;

    fn ramp(n: usize) -> DataSet {
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        DataSet::single_field("c", "v", &values).unwrap()
    }

    #[test]
    fn level_zero_is_bit_identical() {
        let ds = DataSet::single_field("c", "v", &[1.5, -2.25, 0.1]).unwrap();
        let out = inject_noise(&ds, NoiseSpec::new(0.0, 99).unwrap()).unwrap();
        for (a, b) in ds.points.iter().zip(&out.points) {
            assert_eq!(a.values[0].to_bits(), b.values[0].to_bits());
        }
        assert_eq!(out.provenance, ds.provenance);
    }

    #[test]
    fn same_seed_same_bytes_different_seed_different_bytes() {
        let ds = ramp(64);
        let spec = NoiseSpec::new(0.5, 7).unwrap();
        let a = inject_noise(&ds, spec).unwrap();
        let b = inject_noise(&ds, spec).unwrap();
        assert_eq!(a, b);
        let c = inject_noise(&ds, NoiseSpec::new(0.5, 8).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn injected_error_matches_requested_std() {
        let n = 100_000;
        let ds = ramp(n);
        let sigma = column_stats(&ds.column(0).collect::<Vec<_>>()).std;
        let level = 0.5;
        let out = inject_noise(&ds, NoiseSpec::new(level, 42).unwrap()).unwrap();

        let errs: Vec<f64> = ds
            .column(0)
            .zip(out.column(0))
            .map(|(o, d)| d - o)
            .collect();
        let stats = column_stats(&errs);
        let expected = level * sigma;
        assert!(
            (stats.std - expected).abs() / expected < 0.02,
            "std {} vs expected {expected}",
            stats.std
        );
        assert!(stats.mean.abs() < expected * 0.02, "mean {}", stats.mean);
    }

    #[test]
    fn rejects_bad_levels_and_empty_sets() {
        assert!(matches!(
            NoiseSpec::new(1.5, 0),
            Err(Error::InvalidNoiseLevel(_))
        ));
        assert!(matches!(
            NoiseSpec::new(-0.01, 0),
            Err(Error::InvalidNoiseLevel(_))
        ));
        assert!(matches!(
            NoiseSpec::new(f64::NAN, 0),
            Err(Error::InvalidNoiseLevel(_))
        ));
        let empty = DataSet {
            category: "c".into(),
            fields: vec!["v".into()],
            points: vec![],
            provenance: crate::data::Provenance::DirectlyProvided,
        };
        assert_eq!(
            inject_noise(&empty, NoiseSpec::new(0.5, 1).unwrap()),
            Err(Error::EmptyDataset)
        );
    }

    #[test]
    fn identical_sets_have_full_utility() {
        let ds = ramp(10);
        assert_eq!(utility_score(&ds, &ds).unwrap(), 1.0);
    }

    #[test]
    fn one_std_of_error_zeroes_utility() {
        let ds = DataSet::single_field("c", "v", &[1.0, 2.0, 3.0]).unwrap();
        let sigma = 0.816_496_580_927_726;
        let mut shifted = ds.clone();
        for p in &mut shifted.points {
            p.values[0] += sigma;
        }
        // Constant +sigma error means rmse = sigma exactly, so nrmse = 1.
        let u = utility_score(&ds, &shifted).unwrap();
        assert!(u.abs() < 1e-12, "utility {u}");
    }

    #[test]
    fn quarter_level_noise_keeps_about_three_quarters_utility() {
        let ds = ramp(100_000);
        let out = inject_noise(&ds, NoiseSpec::new(0.25, 11).unwrap()).unwrap();
        let u = utility_score(&ds, &out).unwrap();
        assert!((u - 0.75).abs() < 0.03, "utility {u}");
    }

    #[test]
    fn utility_decreases_with_level() {
        let ds = ramp(20_000);
        let mut last = f64::INFINITY;
        for level in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let out = inject_noise(&ds, NoiseSpec::new(level, 5).unwrap()).unwrap();
            let u = utility_score(&ds, &out).unwrap();
            assert!(u < last || (level == 0.0 && u == 1.0), "level {level}: {u}");
            last = u;
        }
    }

    #[test]
    fn constant_field_utility_is_all_or_nothing() {
        let ds = DataSet::single_field("c", "v", &[4.0, 4.0, 4.0]).unwrap();
        assert_eq!(utility_score(&ds, &ds).unwrap(), 1.0);
        let mut bent = ds.clone();
        bent.points[1].values[0] = 4.001;
        assert_eq!(utility_score(&ds, &bent).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = ramp(4);
        let b = ramp(5);
        assert!(matches!(
            utility_score(&a, &b),
            Err(Error::ShapeMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn noise_preserves_shape_and_metadata(
            n in 1usize..40,
            level in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let values: Vec<f64> = (0..n).map(|i| (i as f64) * 0.5 - 3.0).collect();
            let ds = DataSet::single_field("cat", "v", &values).unwrap();
            let out = inject_noise(&ds, NoiseSpec::new(level, seed).unwrap()).unwrap();
            prop_assert_eq!(out.len(), ds.len());
            prop_assert_eq!(&out.category, &ds.category);
            prop_assert_eq!(&out.fields, &ds.fields);
            let ts_in: Vec<u64> = ds.points.iter().map(|p| p.timestamp).collect();
            let ts_out: Vec<u64> = out.points.iter().map(|p| p.timestamp).collect();
            prop_assert_eq!(ts_in, ts_out);
            prop_assert_eq!(out.provenance, ds.provenance);
        }

        #[test]
        fn utility_never_leaves_unit_interval(
            n in 2usize..60,
            level in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let values: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
            let ds = DataSet::single_field("cat", "v", &values).unwrap();
            let out = inject_noise(&ds, NoiseSpec::new(level, seed).unwrap()).unwrap();
            let u = utility_score(&ds, &out).unwrap();
            prop_assert!((0.0..=1.0).contains(&u));
        }
    }

    #[test]
    fn multi_field_noise_scales_per_field() {
        // Field "a" spans widely, "b" is constant; only "a" should move.
        let points = vec![
            DataPoint::new(0, vec![0.0, 5.0]),
            DataPoint::new(1, vec![10.0, 5.0]),
            DataPoint::new(2, vec![20.0, 5.0]),
        ];
        let ds = DataSet::new("c", vec!["a".into(), "b".into()], points).unwrap();
        let out = inject_noise(&ds, NoiseSpec::new(1.0, 13).unwrap()).unwrap();
        assert!(ds.column(0).zip(out.column(0)).any(|(o, d)| o != d));
        assert!(ds.column(1).zip(out.column(1)).all(|(o, d)| o == d));
    }
}
