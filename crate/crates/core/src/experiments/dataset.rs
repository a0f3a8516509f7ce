//! Simulated training data: random bond/loss parameters labelled with
//! Monte Carlo prices.

use crate::error::{CatBondError, Result};
use crate::loss_model::{LossModel, SeverityDistribution, SeverityKind};
use crate::pricer::{price_coupon_cat, BondSpec, REFERENCE_COUPON_RATE};
use crate::rng::{tags, StreamSeed};
use crate::surrogate::TrainingSample;
use crate::term_structure::{VasicekParams, DAYS_PER_YEAR};
use rand::Rng;
use rayon::prelude::*;
use std::io::{Read, Write};

pub const DATASET_HEADER: [&str; 7] = ["r0", "lambda", "threshold", "maturity_days", "n_coupons", "severity", "price"];

/// Closed interval sampled uniformly; `lo == hi` pins the value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if self.lo == self.hi {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * u
        }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(CatBondError::invalid(name, format!("bad range [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

pub const R0_RANGE: ParamRange = ParamRange::new(0.0, 0.08);
pub const LAMBDA_RANGE: ParamRange = ParamRange::new(30.0, 40.0);
pub const THRESHOLD_RANGE: ParamRange = ParamRange::new(7e9, 13e9);
pub const MATURITY_DAYS_RANGE: ParamRange = ParamRange::new(90.0, 720.0);
pub const COUPON_COUNTS: [u32; 8] = [0, 2, 3, 4, 6, 8, 10, 12];

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub severity: SeverityDistribution,
    pub r0: ParamRange,
    pub lambda: ParamRange,
    pub threshold: ParamRange,
    pub maturity_days: ParamRange,
    pub coupon_counts: Vec<u32>,
    pub coupon_rate: f64,
    pub rates: VasicekParams,
    /// Simulated paths per payment date for each label.
    pub mc_budget: u64,
    pub master_seed: u64,
}

impl DatasetConfig {
    pub const DEFAULT_MC_BUDGET: u64 = 20_000;

    /// Reference generation ranges with the reference severity of `kind`.
    pub fn reference(kind: SeverityKind, n_samples: usize, master_seed: u64) -> Self {
        Self {
            n_samples,
            severity: kind.reference(),
            r0: R0_RANGE,
            lambda: LAMBDA_RANGE,
            threshold: THRESHOLD_RANGE,
            maturity_days: MATURITY_DAYS_RANGE,
            coupon_counts: COUPON_COUNTS.to_vec(),
            coupon_rate: REFERENCE_COUPON_RATE,
            rates: VasicekParams::reference(),
            mc_budget: Self::DEFAULT_MC_BUDGET,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.severity.validate()?;
        self.rates.validate()?;
        self.r0.validate("r0")?;
        self.lambda.validate("lambda")?;
        self.threshold.validate("threshold")?;
        self.maturity_days.validate("maturity_days")?;
        if self.lambda.lo <= 0.0 {
            return Err(CatBondError::invalid("lambda", "intensity must be positive"));
        }
        if self.maturity_days.lo <= 0.0 {
            return Err(CatBondError::invalid("maturity_days", "maturity must be positive"));
        }
        if self.coupon_counts.is_empty() {
            return Err(CatBondError::invalid("coupon_counts", "need at least one choice"));
        }
        if !(self.coupon_rate >= 0.0 && self.coupon_rate.is_finite()) {
            return Err(CatBondError::invalid("coupon_rate", "must be non-negative"));
        }
        if self.mc_budget == 0 {
            return Err(CatBondError::invalid("mc_budget", "must be positive"));
        }
        Ok(())
    }
}

/// Inputs of sample `index`, drawn from its own stream.
fn draw_inputs(config: &DatasetConfig, index: u64) -> (f64, f64, f64, f64, u32) {
    let mut rng = StreamSeed::new(config.master_seed).derive(&[tags::DATASET_PARAMS, index]).rng();
    let r0 = config.r0.sample(&mut rng);
    let lambda = config.lambda.sample(&mut rng);
    let threshold = config.threshold.sample(&mut rng);
    let days = config.maturity_days.sample(&mut rng);
    let n = config.coupon_counts[rng.random_range(0..config.coupon_counts.len())];
    (r0, lambda, threshold, days, n)
}

/// Prices one bond of the dataset's family.
pub fn label_price(
    config: &DatasetConfig,
    r0: f64,
    lambda: f64,
    threshold: f64,
    maturity_days: f64,
    n_coupons: u32,
    seed: u64,
) -> Result<f64> {
    let model = LossModel::new(lambda, config.severity)?;
    let spec = BondSpec::equally_spaced(1.0, maturity_days / DAYS_PER_YEAR, n_coupons, config.coupon_rate, threshold)?;
    Ok(price_coupon_cat(&config.rates, r0, &model, &spec, config.mc_budget, seed)?.price)
}

fn make_sample(config: &DatasetConfig, index: u64) -> Result<TrainingSample> {
    let (r0, lambda, threshold, maturity_days, n_coupons) = draw_inputs(config, index);
    let seed = StreamSeed::new(config.master_seed).derive(&[tags::DATASET_LABEL, index]).value();
    let price = label_price(config, r0, lambda, threshold, maturity_days, n_coupons, seed)?;
    Ok(TrainingSample { r0, lambda, threshold, maturity_days, n_coupons, severity: config.severity.kind(), price })
}

/// Samples in index order. Rows whose pricing fails are logged and left out.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Vec<TrainingSample>> {
    config.validate()?;
    let rows: Vec<Option<TrainingSample>> = (0..config.n_samples as u64)
        .into_par_iter()
        .map(|i| match make_sample(config, i) {
            Ok(s) => Some(s),
            Err(e) => {
                log::warn!("dataset row {i} skipped: {e}");
                None
            }
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset_csv<W: Write>(writer: W, samples: &[TrainingSample]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(DATASET_HEADER)?;
    for s in samples {
        w.write_record([
            real(s.r0),
            real(s.lambda),
            real(s.threshold),
            real(s.maturity_days),
            s.n_coupons.to_string(),
            s.severity.as_str().to_string(),
            real(s.price),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(reader: R) -> Result<Vec<TrainingSample>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(DATASET_HEADER) {
        return Err(CatBondError::Dataset(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let bad = |field: &str| CatBondError::Dataset(format!("row {}: bad {field}", i + 1));
        let real = |j: usize, field: &str| record[j].parse::<f64>().map_err(|_| bad(field));
        out.push(TrainingSample {
            r0: real(0, "r0")?,
            lambda: real(1, "lambda")?,
            threshold: real(2, "threshold")?,
            maturity_days: real(3, "maturity_days")?,
            n_coupons: record[4].parse().map_err(|_| bad("n_coupons"))?,
            severity: record[5].parse().map_err(|_| bad("severity"))?,
            price: real(6, "price")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> DatasetConfig {
        DatasetConfig { mc_budget: 500, ..DatasetConfig::reference(SeverityKind::Gamma, 12, seed) }
    }

    #[test]
    fn inputs_stay_in_range() {
        let c = DatasetConfig::reference(SeverityKind::Gamma, 0, 3);
        for i in 0..500 {
            let (r0, lambda, d, days, n) = draw_inputs(&c, i);
            assert!(R0_RANGE.contains(r0) && LAMBDA_RANGE.contains(lambda));
            assert!(THRESHOLD_RANGE.contains(d) && MATURITY_DAYS_RANGE.contains(days));
            assert!(COUPON_COUNTS.contains(&n));
        }
    }

    #[test]
    fn empty_dataset_writes_header_only() {
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "r0,lambda,threshold,maturity_days,n_coupons,severity,price\n");
        assert!(generate_dataset(&DatasetConfig { n_samples: 0, ..tiny(1) }).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let samples = generate_dataset(&tiny(5)).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &samples).unwrap();
        assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), samples);
    }

    #[test]
    fn labels_within_bounds() {
        for s in generate_dataset(&tiny(9)).unwrap() {
            assert!(s.price > 0.0 && s.price <= 1.0 + 0.05 * 12.0, "{s:?}");
        }
    }

    #[test]
    fn rejects_bad_header() {
        let text = "r0,lambda\n0.1,30\n";
        assert!(read_dataset_csv(text.as_bytes()).is_err());
    }
}
