//! Side-by-side prices and timings: simulation vs surrogate, with the
//! published PIDE reference values for context.

use crate::error::{CatBondError, Result};
use crate::loss_model::{LossModel, SeverityKind};
use crate::pricer::{price_coupon_cat, BondSpec, REFERENCE_COUPON_RATE};
use crate::rng::StreamSeed;
use crate::surrogate::{predict_batch, MlpModel, N_FEATURES};
use crate::term_structure::VasicekParams;
use ndarray::Array2;
use std::io::Write;
use std::time::{Duration, Instant};

const PUBLISHED_PIDE: &str = include_str!("../../fixtures/published_pide.csv");

/// `(n_coupons, maturity in years)` rows of the comparison table.
pub const TABLE_ROWS: [(u32, f64); 5] = [(0, 1.0), (2, 1.0), (4, 1.0), (8, 2.0), (12, 2.0)];

pub const WARMUP_BATCHES: usize = 3;
pub const TIMED_BATCHES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PublishedValue {
    pub value: f64,
    pub hours: f64,
}

/// Published PIDE price and runtime for a table row, if there is one.
pub fn published_pide(n_coupons: u32, maturity: f64, severity: SeverityKind) -> Option<PublishedValue> {
    PUBLISHED_PIDE.lines().skip(1).find_map(|line| {
        let f: Vec<&str> = line.split(',').collect();
        let matches = f[0].parse::<u32>().ok()? == n_coupons
            && f[1].parse::<f64>().ok()? == maturity
            && f[2] == severity.as_str();
        if !matches {
            return None;
        }
        Some(PublishedValue { value: f[3].parse().ok()?, hours: f[4].parse().ok()? })
    })
}

#[derive(Clone, Debug)]
pub struct ComparisonConfig {
    pub rows: Vec<(u32, f64)>,
    pub r0: f64,
    pub lambda: f64,
    pub threshold: f64,
    pub rates: VasicekParams,
    /// Paths per payment date for each simulated price.
    pub n_paths: u64,
    /// Prices per cell; timings are totals over all of them.
    pub repetitions: usize,
    pub seed: u64,
}

impl ComparisonConfig {
    pub fn reference(seed: u64) -> Self {
        Self {
            rows: TABLE_ROWS.to_vec(),
            r0: 0.03,
            lambda: 35.0,
            threshold: 9e9,
            rates: VasicekParams::reference(),
            n_paths: 100_000,
            repetitions: 1000,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub n_coupons: u32,
    pub maturity: f64,
    pub severity: SeverityKind,
    pub pide: Option<PublishedValue>,
    pub mc_is_value: f64,
    pub mc_is_seconds: f64,
    pub nn_value: Option<f64>,
    pub nn_seconds: Option<f64>,
}

/// Seed of repetition `rep` in a comparison run.
pub fn repetition_seed(seed: u64, rep: u64) -> u64 {
    StreamSeed::new(seed).derive(&[rep]).value()
}

fn bond(config: &ComparisonConfig, n_coupons: u32, maturity: f64) -> Result<BondSpec> {
    BondSpec::equally_spaced(1.0, maturity, n_coupons, REFERENCE_COUPON_RATE, config.threshold)
}

/// Mean price over the repetitions and the total wall-clock time.
pub fn time_simulation(
    config: &ComparisonConfig,
    severity: SeverityKind,
    n_coupons: u32,
    maturity: f64,
) -> Result<(f64, Duration)> {
    if config.repetitions == 0 {
        return Err(CatBondError::invalid("repetitions", "must be positive"));
    }
    let model = LossModel::new(config.lambda, severity.reference())?;
    let spec = bond(config, n_coupons, maturity)?;
    let start = Instant::now();
    let mut total = 0.0;
    for rep in 0..config.repetitions as u64 {
        let seed = repetition_seed(config.seed, rep);
        total += price_coupon_cat(&config.rates, config.r0, &model, &spec, config.n_paths, seed)?.price;
    }
    Ok((total / config.repetitions as f64, start.elapsed()))
}

/// Surrogate price and the median time of one batch of `batch` identical
/// predictions, after warmup batches.
pub fn time_surrogate(model: &MlpModel, features: [f64; N_FEATURES], batch: usize) -> Result<(f64, Duration)> {
    let mut x = Array2::zeros((batch.max(1), N_FEATURES));
    for mut row in x.rows_mut() {
        row.assign(&ndarray::ArrayView1::from(&features));
    }
    let mut value = 0.0;
    for _ in 0..WARMUP_BATCHES {
        value = predict_batch(model, x.view())?[0];
    }
    let mut times: Vec<Duration> = (0..TIMED_BATCHES)
        .map(|_| {
            let start = Instant::now();
            let out = predict_batch(model, x.view());
            let elapsed = start.elapsed();
            std::hint::black_box(out).map(|_| elapsed)
        })
        .collect::<Result<_>>()?;
    times.sort();
    Ok((value, times[TIMED_BATCHES / 2]))
}

/// Runs every row for each severity that has an entry in `models`; a
/// `None` model leaves the surrogate columns empty.
pub fn method_comparison(
    config: &ComparisonConfig,
    models: &[(SeverityKind, Option<&MlpModel>)],
) -> Result<Vec<ComparisonRow>> {
    let mut out = Vec::new();
    for &(severity, model) in models {
        for &(n_coupons, maturity) in &config.rows {
            let (mc_is_value, mc_time) = time_simulation(config, severity, n_coupons, maturity)?;
            let features = [config.r0, config.lambda, config.threshold, maturity, n_coupons as f64];
            let nn = model.map(|m| time_surrogate(m, features, config.repetitions)).transpose()?;
            out.push(ComparisonRow {
                n_coupons,
                maturity,
                severity,
                pide: published_pide(n_coupons, maturity, severity),
                mc_is_value,
                mc_is_seconds: mc_time.as_secs_f64(),
                nn_value: nn.map(|(v, _)| v),
                nn_seconds: nn.map(|(_, t)| t.as_secs_f64()),
            });
        }
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_comparison_csv<W: Write>(writer: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record([
        "n_coupons",
        "maturity_years",
        "severity",
        "pide_value",
        "pide_time_s",
        "mc_is_value",
        "mc_is_time_s",
        "nn_value",
        "nn_time_s",
    ])?;
    for r in rows {
        w.write_record([
            r.n_coupons.to_string(),
            r.maturity.to_string(),
            r.severity.as_str().to_string(),
            opt(r.pide.map(|p| p.value)),
            opt(r.pide.map(|p| p.hours * 3600.0)),
            format!("{:.6}", r.mc_is_value),
            format!("{:.6}", r.mc_is_seconds),
            opt(r.nn_value),
            opt(r.nn_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_constants_load() {
        let p = published_pide(8, 2.0, SeverityKind::Gamma).unwrap();
        assert_eq!(p.value, 0.3146);
        assert_eq!(p.hours, 131.34);
        assert_eq!(published_pide(12, 2.0, SeverityKind::Lognormal).unwrap().value, 0.5931);
        assert!(published_pide(3, 1.0, SeverityKind::Gamma).is_none());
    }

    #[test]
    fn single_repetition_matches_pricer() {
        let config = ComparisonConfig { n_paths: 2000, repetitions: 1, ..ComparisonConfig::reference(11) };
        let (v, _) = time_simulation(&config, SeverityKind::Lognormal, 2, 1.0).unwrap();
        let model = LossModel::new(35.0, SeverityKind::Lognormal.reference()).unwrap();
        let spec = BondSpec::equally_spaced(1.0, 1.0, 2, 0.05, 9e9).unwrap();
        let direct = price_coupon_cat(&config.rates, 0.03, &model, &spec, 2000, repetition_seed(11, 0)).unwrap();
        assert_eq!(v.to_bits(), direct.price.to_bits());
    }

    #[test]
    fn missing_model_leaves_columns_empty() {
        let config = ComparisonConfig { n_paths: 500, repetitions: 2, rows: vec![(0, 1.0)], ..ComparisonConfig::reference(1) };
        let rows = method_comparison(&config, &[(SeverityKind::Gamma, None)]).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].nn_value.is_none() && rows[0].pide.is_some());
        let mut buf = Vec::new();
        write_comparison_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",,"));
    }
}
