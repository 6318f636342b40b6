//! Per-sample-point interval tables, reporting precision and coverage summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reporting precision: limits are printed with four decimals.
pub const REPORT_SCALE: f64 = 1e4;

/// Slack in scaled units so that values within 1e-9 of a lattice point are
/// treated as lying on it before outward rounding.
const ROUND_SLACK: f64 = 1e-5;

/// Rounds a lower limit down to four decimals.
pub fn round_lower(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    (x * REPORT_SCALE + ROUND_SLACK).floor() / REPORT_SCALE + 0.0
}

/// Rounds an upper limit up to four decimals.
pub fn round_upper(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    // Adding zero turns a -0.0 from ceil into 0.0.
    (x * REPORT_SCALE - ROUND_SLACK).ceil() / REPORT_SCALE + 0.0
}

/// One closed interval `[L(s), U(s)]` per sample point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitsTable {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LimitsTable {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::TableMismatch(format!(
                "{} lower limits but {} upper limits",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(Error::InvalidInput(format!("NaN limit at point {i}")));
            }
            if l > u {
                return Err(Error::InvalidInput(format!(
                    "lower limit {l} exceeds upper limit {u} at point {i}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Table with the same interval at every point.
    pub fn constant(points: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower; points],
            upper: vec![upper; points],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn interval(&self, s: usize) -> (f64, f64) {
        (self.lower[s], self.upper[s])
    }

    pub fn contains(&self, s: usize, theta: f64) -> bool {
        self.lower[s] <= theta && theta <= self.upper[s]
    }

    /// Total interval length over all sample points.
    pub fn til(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .sum()
    }

    pub fn clipped(&self, lo: f64, hi: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|v| v.clamp(lo, hi)).collect(),
            upper: self.upper.iter().map(|v| v.clamp(lo, hi)).collect(),
        }
    }

    /// Outward rounding to reporting precision.
    pub fn rounded(&self) -> Self {
        Self {
            lower: self.lower.iter().map(|&v| round_lower(v)).collect(),
            upper: self.upper.iter().map(|&v| round_upper(v)).collect(),
        }
    }

    /// Every interval of `self` lies inside the matching interval of `other`,
    /// allowing `tol` of slack at each end.
    pub fn is_subset_of(&self, other: &Self, tol: f64) -> bool {
        self.len() == other.len()
            && (0..self.len()).all(|s| {
                self.lower[s] >= other.lower[s] - tol && self.upper[s] <= other.upper[s] + tol
            })
    }

    /// Pointwise equality after rounding both tables to reporting precision.
    pub fn same_at_report_precision(&self, other: &Self) -> bool {
        let a = self.rounded();
        let b = other.rounded();
        a == b
    }

    pub fn check_len(&self, points: usize) -> Result<()> {
        if self.len() != points {
            return Err(Error::TableMismatch(format!(
                "table has {} rows but the sample space has {points} points",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        for s in 0..self.len() {
            if !self.lower[s].is_finite() || !self.upper[s].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "infinite limit at point {s}; use a one-sided operator"
                )));
            }
        }
        Ok(())
    }
}

/// Infimum coverage, where it is attained, and total length of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub icp: f64,
    /// Parameter point achieving the infimum, e.g. `[p]` or `[p1, p2]`.
    pub at: Vec<f64>,
    /// The infimum is approached from this side of `at` (`-1` left limit,
    /// `1` right limit, `0` attained at `at`).
    pub side: i8,
    pub til: f64,
    pub warnings: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outward_rounding() {
        assert_eq!(round_lower(0.04049), 0.0404);
        assert_eq!(round_upper(0.45641), 0.4565);
        assert_eq!(round_upper(0.21875), 0.2188);
        assert_eq!(round_lower(0.78125), 0.7812);
        // Values a hair off a lattice point snap to it.
        assert_eq!(round_lower(0.5 - 1e-11), 0.5);
        assert_eq!(round_upper(0.5 + 1e-11), 0.5);
        assert_eq!(round_lower(-0.00376), -0.0038);
        assert_eq!(round_upper(f64::INFINITY), f64::INFINITY);
    }

    #[test]
    fn rounding_brackets_value() {
        for i in 0..10_000 {
            let x = -1.0 + 2.0 * (i as f64) / 9999.0 + 1.234e-7;
            assert!(round_lower(x) <= x + 1e-9 && x - round_lower(x) < 1e-4 + 1e-9);
            assert!(round_upper(x) >= x - 1e-9 && round_upper(x) - x < 1e-4 + 1e-9);
        }
    }

    #[test]
    fn table_validation_and_til() {
        assert!(LimitsTable::new(vec![0.0], vec![]).is_err());
        assert!(LimitsTable::new(vec![0.5], vec![0.4]).is_err());
        let t = LimitsTable::new(vec![0.0, 0.25], vec![0.5, 0.25]).unwrap();
        assert_eq!(t.til(), 0.5);
        assert!(t.contains(1, 0.25));
        let wide = LimitsTable::constant(2, 0.0, 1.0);
        assert!(t.is_subset_of(&wide, 0.0));
        assert!(!wide.is_subset_of(&t, 0.0));
        assert!(LimitsTable::constant(1, f64::NEG_INFINITY, 1.0).check_finite().is_err());
    }
}
