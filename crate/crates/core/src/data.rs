//! Datasets, proprietary provenance, and the descriptor a listing advertises.
//!
//! A dataset never leaves its owner; the marketplace only ever sees the
//! [`DataDescriptor`]. Descriptors are therefore seller-attested: the honest
//! path computes them with [`describe_dataset`] over the noised points, but
//! nothing in a decentralized market can stop a seller from publishing stats
//! that do not match the data. Subsample validation exists to catch exactly
//! that.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::noise::check_level;

/// How strongly the data subject owns the data: instantiated deliberately,
/// thrown off as an activity byproduct, or derived downstream by analysis.
/// Only the first two tiers may be listed; derived metadata belongs to
/// whoever derived it and stays out of this marketplace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    DirectlyProvided,
    ByproductOfActivity,
    DerivedMetadata,
}

impl Provenance {
    pub fn is_listable(&self) -> bool {
        !matches!(self, Provenance::DerivedMetadata)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::DirectlyProvided => "directly_provided",
            Provenance::ByproductOfActivity => "byproduct_of_activity",
            Provenance::DerivedMetadata => "derived_metadata",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One timestamped observation. `values` aligns with the owning
/// [`DataSet::fields`] by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub timestamp: u64,
    pub values: Vec<f64>,
}

impl DataPoint {
    pub fn new(timestamp: u64, values: Vec<f64>) -> Self {
        DataPoint { timestamp, values }
    }
}

/// A non-empty series of observations in one category, strictly ordered by
/// timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub category: String,
    pub fields: Vec<String>,
    pub points: Vec<DataPoint>,
    pub provenance: Provenance,
}

impl DataSet {
    /// Builds a directly-provided dataset, enforcing the shape invariants:
    /// at least one field and one point, every point carrying one finite
    /// value per field, timestamps strictly increasing.
    pub fn new(
        category: impl Into<String>,
        fields: Vec<String>,
        points: Vec<DataPoint>,
    ) -> Result<Self> {
        let ds = DataSet {
            category: category.into(),
            fields,
            points,
            provenance: Provenance::DirectlyProvided,
        };
        ds.check_shape()?;
        Ok(ds)
    }

    /// Single-field helper with timestamps 0..n; the common case in
    /// scenarios and tests.
    pub fn single_field(
        category: impl Into<String>,
        field: impl Into<String>,
        values: &[f64],
    ) -> Result<Self> {
        let points = values
            .iter()
            .enumerate()
            .map(|(i, v)| DataPoint::new(i as u64, alloc::vec![*v]))
            .collect();
        DataSet::new(category, alloc::vec![field.into()], points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Values of one field by positional index, in point order.
    pub fn column(&self, field_idx: usize) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(move |p| p.values[field_idx])
    }

    fn check_shape(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if self.fields.is_empty() {
            return Err(Error::MalformedDataset("no fields declared".into()));
        }
        let arity = self.fields.len();
        let mut last_ts = None;
        for (i, p) in self.points.iter().enumerate() {
            if p.values.len() != arity {
                return Err(Error::MalformedDataset(format!(
                    "point {i} has {} values, expected {arity}",
                    p.values.len()
                )));
            }
            if p.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::MalformedDataset(format!(
                    "point {i} has a non-finite value"
                )));
            }
            if let Some(prev) = last_ts {
                if p.timestamp <= prev {
                    return Err(Error::MalformedDataset(format!(
                        "timestamps not strictly increasing at point {i}"
                    )));
                }
            }
            last_ts = Some(p.timestamp);
        }
        Ok(())
    }
}

/// Population statistics for one field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation (divisor n, not n-1), so a singleton
    /// has a well-defined std of 0.
    pub std: f64,
}

/// The public face of a dataset: everything a buyer sees before a subsample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDescriptor {
    pub category: String,
    pub count: u64,
    /// First and last point timestamps, inclusive.
    pub time_range: (u64, u64),
    pub fields: BTreeMap<String, FieldStats>,
    /// Noise level the seller declares for the listed product.
    pub declared_noise_level: f64,
}

/// Population stats of a value sequence. Two-pass; fine at desk scale.
pub(crate) fn column_stats(values: &[f64]) -> FieldStats {
    let n = values.len() as f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in values {
        min = math::min(min, v);
        max = math::max(max, v);
        sum += v;
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for &v in values {
        let d = v - mean;
        sq += d * d;
    }
    FieldStats {
        min,
        max,
        mean,
        std: math::sqrt(sq / n),
    }
}

/// Summarizes a dataset into the descriptor it would be advertised under.
///
/// # Errors
///
/// `EmptyDataset` when there are no points, `InvalidNoiseLevel` when the
/// declared level leaves [0, 1].
pub fn describe_dataset(dataset: &DataSet, declared_noise: f64) -> Result<DataDescriptor> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_level(declared_noise)?;
    let mut fields = BTreeMap::new();
    for (idx, name) in dataset.fields.iter().enumerate() {
        let col: Vec<f64> = dataset.column(idx).collect();
        fields.insert(name.clone(), column_stats(&col));
    }
    Ok(DataDescriptor {
        category: dataset.category.clone(),
        count: dataset.len() as u64,
        time_range: (
            dataset.points[0].timestamp,
            dataset.points[dataset.len() - 1].timestamp,
        ),
        fields,
        declared_noise_level: declared_noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn three_point_set() -> DataSet {
        DataSet::single_field("activity/walking", "value", &[1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn describes_small_series() {
        let d = describe_dataset(&three_point_set(), 0.0).unwrap();
        assert_eq!(d.count, 3);
        assert_eq!(d.time_range, (0, 2));
        assert_eq!(d.category, "activity/walking");
        assert_eq!(d.declared_noise_level, 0.0);
        let s = d.fields["value"];
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 3.0);
        assert_eq!(s.mean, 2.0);
        // population std of [1,2,3] is sqrt(2/3)
        assert!((s.std - 0.816_496_580_927_726).abs() < 1e-12);
    }

    #[test]
    fn descriptor_is_pure() {
        let ds = three_point_set();
        assert_eq!(
            describe_dataset(&ds, 0.25).unwrap(),
            describe_dataset(&ds, 0.25).unwrap()
        );
    }

    #[test]
    fn singleton_has_zero_std() {
        let ds = DataSet::single_field("c", "v", &[5.0]).unwrap();
        let d = describe_dataset(&ds, 0.0).unwrap();
        assert_eq!(d.count, 1);
        let s = d.fields["v"];
        assert_eq!((s.min, s.max, s.mean, s.std), (5.0, 5.0, 5.0, 0.0));
    }

    #[test]
    fn empty_dataset_is_rejected_everywhere() {
        assert_eq!(
            DataSet::new("c", vec!["v".into()], vec![]),
            Err(Error::EmptyDataset)
        );
        // A hand-built empty set is caught at description time too.
        let ds = DataSet {
            category: "c".into(),
            fields: vec!["v".into()],
            points: vec![],
            provenance: Provenance::DirectlyProvided,
        };
        assert_eq!(describe_dataset(&ds, 0.0), Err(Error::EmptyDataset));
    }

    #[test]
    fn declared_noise_is_range_checked() {
        assert!(matches!(
            describe_dataset(&three_point_set(), 1.2),
            Err(Error::InvalidNoiseLevel(_))
        ));
    }

    #[test]
    fn arity_mismatch_is_malformed() {
        let points = vec![
            DataPoint::new(0, vec![1.0, 2.0]),
            DataPoint::new(1, vec![1.0]),
        ];
        let err = DataSet::new("c", vec!["a".into(), "b".into()], points).unwrap_err();
        assert!(matches!(err, Error::MalformedDataset(_)));
    }

    #[test]
    fn timestamps_must_strictly_increase() {
        let backwards = vec![DataPoint::new(5, vec![1.0]), DataPoint::new(4, vec![1.0])];
        assert!(matches!(
            DataSet::new("c", vec!["v".into()], backwards),
            Err(Error::MalformedDataset(_))
        ));
        let duplicated = vec![DataPoint::new(7, vec![1.0]), DataPoint::new(7, vec![2.0])];
        assert!(matches!(
            DataSet::new("c", vec!["v".into()], duplicated),
            Err(Error::MalformedDataset(_))
        ));
    }

    #[test]
    fn non_finite_values_are_malformed() {
        let points = vec![DataPoint::new(0, vec![f64::NAN])];
        assert!(matches!(
            DataSet::new("c", vec!["v".into()], points),
            Err(Error::MalformedDataset(_))
        ));
    }

    #[test]
    fn derived_metadata_is_not_listable() {
        assert!(Provenance::DirectlyProvided.is_listable());
        assert!(Provenance::ByproductOfActivity.is_listable());
        assert!(!Provenance::DerivedMetadata.is_listable());
    }

    #[test]
    fn multi_field_stats_are_per_column() {
        let points = vec![
            DataPoint::new(0, vec![1.0, 10.0]),
            DataPoint::new(1, vec![3.0, 10.0]),
        ];
        let ds = DataSet::new("c", vec!["a".into(), "b".into()], points).unwrap();
        let d = describe_dataset(&ds, 0.5).unwrap();
        assert_eq!(d.fields["a"].mean, 2.0);
        assert_eq!(d.fields["a"].std, 1.0);
        assert_eq!(d.fields["b"].std, 0.0);
        assert!(d.fields["a"].min <= d.fields["a"].mean);
        assert!(d.fields["a"].mean <= d.fields["a"].max);
    }
}
