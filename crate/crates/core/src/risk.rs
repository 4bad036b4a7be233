//! Privacy-harm scoring for a prospective listing.
//!
//! A seller rates the data on three harm channels, each on a 0..=5 impact
//! scale. The channels are not equal: revealing harms weigh twice and
//! intruding harms three times what distorting harms do, so the raw score is
//!
//! ```text
//! raw = 1*distortion + 2*revelation + 3*intrusion      (max 30)
//! ```
//!
//! and the normalized score is `raw / 30`. The normalized score feeds the
//! pricing premium; the band is the coarse label shown to buyers.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel weights, in (distortion, revelation, intrusion) order.
pub const HARM_WEIGHTS: (u8, u8, u8) = (1, 2, 3);

/// Largest possible raw score: (1 + 2 + 3) * 5.
pub const MAX_RAW_SCORE: u8 = 30;

/// Impact ratings on the three harm channels, each 0..=5.
///
/// 0 means the channel does not apply at all; the descriptive scale the
/// ratings follow starts at 1 (low) and ends at 5 (critical).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmImpactVector {
    pub distortion: u8,
    pub revelation: u8,
    pub intrusion: u8,
}

impl HarmImpactVector {
    /// Validates the 0..=5 range on every channel.
    pub fn new(distortion: u8, revelation: u8, intrusion: u8) -> Result<Self> {
        for c in [distortion, revelation, intrusion] {
            if c > 5 {
                return Err(Error::InvalidImpact(c));
            }
        }
        Ok(HarmImpactVector {
            distortion,
            revelation,
            intrusion,
        })
    }
}

/// Quartile bands over the normalized score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskBand {
    Low,
    Moderate,
    High,
    Critical,
}

impl RiskBand {
    pub fn as_str(&self) -> &'static str {
        match self {
            RiskBand::Low => "Low",
            RiskBand::Moderate => "Moderate",
            RiskBand::High => "High",
            RiskBand::Critical => "Critical",
        }
    }
}

impl fmt::Display for RiskBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A scored impact vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub impacts: HarmImpactVector,
    pub raw_score: u8,
    /// `raw_score / 30`, in [0, 1].
    pub normalized: f64,
    pub band: RiskBand,
}

/// Maps a normalized score to its band. Boundaries belong to the upper band
/// except 1.0, which stays Critical.
pub fn risk_band(normalized: f64) -> Result<RiskBand> {
    if !(0.0..=1.0).contains(&normalized) {
        return Err(Error::InvalidScore(normalized));
    }
    Ok(if normalized < 0.25 {
        RiskBand::Low
    } else if normalized < 0.5 {
        RiskBand::Moderate
    } else if normalized < 0.75 {
        RiskBand::High
    } else {
        RiskBand::Critical
    })
}

/// Scores an impact vector.
pub fn assess_risk(impacts: HarmImpactVector) -> Result<RiskAssessment> {
    // Reject out-of-range values even when the vector was built literally.
    let impacts = HarmImpactVector::new(impacts.distortion, impacts.revelation, impacts.intrusion)?;
    let (wd, wr, wi) = HARM_WEIGHTS;
    let raw_score =
        wd * impacts.distortion + wr * impacts.revelation + wi * impacts.intrusion;
    let normalized = f64::from(raw_score) / f64::from(MAX_RAW_SCORE);
    Ok(RiskAssessment {
        impacts,
        raw_score,
        normalized,
        band: risk_band(normalized)?,
    })
}
