//! One-parameter sweeps of the surrogate price with finite differences.

use super::dataset::{COUPON_COUNTS, LAMBDA_RANGE, MATURITY_DAYS_RANGE, R0_RANGE, THRESHOLD_RANGE};
use crate::error::{CatBondError, Result};
use crate::surrogate::{predict_batch, MlpModel, N_FEATURES};
use crate::term_structure::DAYS_PER_YEAR;
use ndarray::Array2;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    R0,
    Lambda,
    Threshold,
    MaturityYears,
    NCoupons,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::R0 => "r0",
            Self::Lambda => "lambda",
            Self::Threshold => "threshold",
            Self::MaturityYears => "maturity_years",
            Self::NCoupons => "n_coupons",
        }
    }

    /// Position in the surrogate's feature vector.
    fn index(self) -> usize {
        self as usize
    }

    /// Whether `v` lies inside the range the training data covered.
    pub fn in_training_range(self, v: f64) -> bool {
        match self {
            Self::R0 => R0_RANGE.contains(v),
            Self::Lambda => LAMBDA_RANGE.contains(v),
            Self::Threshold => THRESHOLD_RANGE.contains(v),
            Self::MaturityYears => MATURITY_DAYS_RANGE.contains(v * DAYS_PER_YEAR),
            Self::NCoupons => (COUPON_COUNTS[0] as f64..=COUPON_COUNTS[COUPON_COUNTS.len() - 1] as f64).contains(&v),
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParameter {
    type Err = CatBondError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r0" => Ok(Self::R0),
            "lambda" => Ok(Self::Lambda),
            "threshold" | "d" => Ok(Self::Threshold),
            "maturity_years" | "t" => Ok(Self::MaturityYears),
            "n_coupons" | "n" => Ok(Self::NCoupons),
            other => Err(CatBondError::invalid("varying", format!("unknown parameter {other:?}"))),
        }
    }
}

/// A full surrogate input `(r0, lambda, D, T_years, N)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BondPoint {
    pub r0: f64,
    pub lambda: f64,
    pub threshold: f64,
    pub maturity_years: f64,
    pub n_coupons: u32,
}

impl BondPoint {
    pub const BASE: Self = Self { r0: 0.03, lambda: 35.0, threshold: 9e9, maturity_years: 1.0, n_coupons: 4 };

    pub fn features(&self) -> [f64; N_FEATURES] {
        [self.r0, self.lambda, self.threshold, self.maturity_years, self.n_coupons as f64]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub varying: SweepParameter,
    /// Non-decreasing.
    pub grid: Vec<f64>,
    pub fixed: BondPoint,
}

impl SweepSpec {
    pub fn new(varying: SweepParameter, grid: Vec<f64>, fixed: BondPoint) -> Result<Self> {
        let s = Self { varying, grid, fixed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(CatBondError::invalid("grid", "must not be empty"));
        }
        if self.grid.iter().any(|v| !v.is_finite()) || self.grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(CatBondError::invalid("grid", "must be finite and sorted"));
        }
        Ok(())
    }
}

/// `steps + 1` evenly spaced points from `lo` to `hi`.
pub fn linear_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps.max(1) as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub prediction: f64,
    /// Price change from the previous grid point.
    pub delta_abs: Option<f64>,
    /// Price change relative to the previous price.
    pub delta_rel: Option<f64>,
    /// `delta_abs / delta_param`; absent when the parameter did not move.
    pub slope: Option<f64>,
    pub extrapolated: bool,
}

pub fn sensitivity_sweep(model: &MlpModel, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let base = spec.fixed.features();
    let mut x = Array2::zeros((spec.grid.len(), N_FEATURES));
    for (mut row, &v) in x.rows_mut().into_iter().zip(&spec.grid) {
        let mut f = base;
        f[spec.varying.index()] = v;
        row.assign(&ndarray::ArrayView1::from(&f));
    }
    let pred = predict_batch(model, x.view())?;
    let mut rows = Vec::with_capacity(spec.grid.len());
    for (i, (&v, &p)) in spec.grid.iter().zip(pred.iter()).enumerate() {
        let (delta_abs, delta_rel, slope) = if i == 0 {
            (None, None, None)
        } else {
            let (pv, pp) = (spec.grid[i - 1], pred[i - 1]);
            let d = p - pp;
            (Some(d), Some(d / pp), (v != pv).then(|| d / (v - pv)))
        };
        rows.push(SweepRow {
            value: v,
            prediction: p,
            delta_abs,
            delta_rel,
            slope,
            extrapolated: !spec.varying.in_training_range(v),
        });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    NonDecreasing,
    NonIncreasing,
}

/// Largest move against `direction` between any earlier and later point.
pub fn worst_violation(values: &[f64], direction: Direction) -> f64 {
    let sign = match direction {
        Direction::NonDecreasing => 1.0,
        Direction::NonIncreasing => -1.0,
    };
    let mut best_so_far = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &v in values {
        let s = sign * v;
        best_so_far = best_so_far.max(s);
        worst = worst.max(best_so_far - s);
    }
    worst
}

/// A named sweep together with the direction the price should move in.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub name: String,
    pub spec: SweepSpec,
    pub expected: Direction,
}

/// Sweep families: intensity at several thresholds, threshold at several
/// intensities, short rate at several intensities; each repeated over
/// coupon counts 0, 4 and 12 at a one-year maturity.
pub fn panel_presets() -> Vec<Panel> {
    let mut out = Vec::new();
    for n in [0u32, 4, 12] {
        for d in [8e9, 9e9, 10e9, 11e9] {
            out.push(Panel {
                name: format!("lambda_at_d{:.0}e9_n{n}", d / 1e9),
                spec: SweepSpec {
                    varying: SweepParameter::Lambda,
                    grid: linear_grid(LAMBDA_RANGE.lo, LAMBDA_RANGE.hi, 20),
                    fixed: BondPoint { threshold: d, n_coupons: n, ..BondPoint::BASE },
                },
                expected: Direction::NonIncreasing,
            });
        }
        for lambda in [30.0, 35.0, 40.0] {
            out.push(Panel {
                name: format!("threshold_at_lambda{lambda:.0}_n{n}"),
                spec: SweepSpec {
                    varying: SweepParameter::Threshold,
                    grid: linear_grid(THRESHOLD_RANGE.lo, THRESHOLD_RANGE.hi, 24),
                    fixed: BondPoint { lambda, n_coupons: n, ..BondPoint::BASE },
                },
                expected: Direction::NonDecreasing,
            });
            out.push(Panel {
                name: format!("r0_at_lambda{lambda:.0}_n{n}"),
                spec: SweepSpec {
                    varying: SweepParameter::R0,
                    grid: linear_grid(R0_RANGE.lo, R0_RANGE.hi, 16),
                    fixed: BondPoint { lambda, n_coupons: n, ..BondPoint::BASE },
                },
                expected: Direction::NonIncreasing,
            });
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10e}")).unwrap_or_default()
}

/// One row per grid point of every sweep, in the order given.
pub fn write_sweep_csv<W: Write>(writer: W, sweeps: &[(&str, SweepParameter, &[SweepRow])]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["panel", "varying", "grid_value", "prediction", "delta_abs", "delta_rel", "slope", "extrapolated"])?;
    for &(panel, varying, rows) in sweeps {
        for r in rows {
            w.write_record([
                panel.to_string(),
                varying.as_str().to_string(),
                format!("{:.10e}", r.value),
                format!("{:.10e}", r.prediction),
                opt(r.delta_abs),
                opt(r.delta_rel),
                opt(r.slope),
                r.extrapolated.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn violation_measure() {
        assert_eq!(worst_violation(&[1.0, 2.0, 3.0], Direction::NonDecreasing), 0.0);
        assert_eq!(worst_violation(&[1.0, 3.0, 2.5, 4.0], Direction::NonDecreasing), 0.5);
        assert_eq!(worst_violation(&[3.0, 2.0, 2.25], Direction::NonIncreasing), 0.25);
    }

    #[test]
    fn grid_validation() {
        assert!(SweepSpec::new(SweepParameter::R0, vec![], BondPoint::BASE).is_err());
        assert!(SweepSpec::new(SweepParameter::R0, vec![0.02, 0.01], BondPoint::BASE).is_err());
        assert!(SweepSpec::new(SweepParameter::R0, vec![0.02, 0.02], BondPoint::BASE).is_ok());
    }

    #[test]
    fn extrapolation_flags() {
        assert!(SweepParameter::Threshold.in_training_range(9e9));
        assert!(!SweepParameter::Threshold.in_training_range(14e9));
        assert!(!SweepParameter::MaturityYears.in_training_range(2.5));
        assert!(SweepParameter::MaturityYears.in_training_range(1.0));
    }

    #[test]
    fn presets_cover_all_families() {
        let p = panel_presets();
        assert_eq!(p.len(), 3 * (4 + 3 + 3));
        assert!(p.iter().all(|panel| panel.spec.validate().is_ok()));
    }

    #[test]
    fn linear_grid_endpoints() {
        let g = linear_grid(7e9, 13e9, 24);
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], 7e9);
        assert_eq!(g[24], 13e9);
    }
}
