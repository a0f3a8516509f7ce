//! Risk-neutral CAT bond prices at issuance.
//!
//! Each cash flow `C` at `t` is worth `P_Z(C, 0, t) (1 - theta(t))`, where
//! `theta(t) = P(L(t) >= D)` is estimated independently per payment date
//! (importance sampling while `E[L(t)] < D`, plain Monte Carlo afterwards).
//! A date's random stream is keyed by the date itself, so the same date
//! gets the same estimate no matter which bond it belongs to.

use crate::error::{CatBondError, Result};
use crate::estimators::{estimate_trigger_probability, EstimatorMethod, EstimatorResult, MethodChoice};
use crate::loss_model::{LossModel, TriggerSpec};
use crate::rng::{tags, StreamSeed};
use crate::term_structure::{zcb_price, VasicekParams};
use rayon::prelude::*;

/// Coupon rate per payment used for the reference schedules.
pub const REFERENCE_COUPON_RATE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct BondSpec {
    pub face: f64,
    /// Years.
    pub maturity: f64,
    /// Strictly increasing, all in `(0, maturity]`.
    pub coupon_times: Vec<f64>,
    pub coupon_amounts: Vec<f64>,
    pub expected_recovery: f64,
    pub threshold: f64,
}

impl BondSpec {
    pub fn new(
        face: f64,
        maturity: f64,
        coupon_times: Vec<f64>,
        coupon_amounts: Vec<f64>,
        expected_recovery: f64,
        threshold: f64,
    ) -> Result<Self> {
        let s = Self { face, maturity, coupon_times, coupon_amounts, expected_recovery, threshold };
        s.validate()?;
        Ok(s)
    }

    pub fn zero_coupon(face: f64, maturity: f64, threshold: f64) -> Result<Self> {
        Self::new(face, maturity, Vec::new(), Vec::new(), 0.0, threshold)
    }

    /// `n_coupons` payments of `coupon_rate * face` at `t_i = i T / n`.
    pub fn equally_spaced(face: f64, maturity: f64, n_coupons: u32, coupon_rate: f64, threshold: f64) -> Result<Self> {
        let n = n_coupons as usize;
        // The last date is pinned: n * T / n can round past T.
        let times = (1..=n).map(|i| if i == n { maturity } else { i as f64 * maturity / n as f64 }).collect();
        Self::new(face, maturity, times, vec![coupon_rate * face; n], 0.0, threshold)
    }

    pub fn with_recovery(mut self, expected_recovery: f64) -> Result<Self> {
        self.expected_recovery = expected_recovery;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.face >= 0.0 && self.face.is_finite()) {
            return Err(CatBondError::invalid("face", "must be non-negative"));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(CatBondError::invalid("maturity", "must be positive"));
        }
        if self.coupon_times.len() != self.coupon_amounts.len() {
            return Err(CatBondError::DimensionMismatch {
                expected: self.coupon_times.len(),
                got: self.coupon_amounts.len(),
            });
        }
        let mut prev = 0.0;
        for &t in &self.coupon_times {
            if !(t > prev && t <= self.maturity) {
                return Err(CatBondError::invalid("coupon_times", "must be strictly increasing within (0, maturity]"));
            }
            prev = t;
        }
        if self.coupon_amounts.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(CatBondError::invalid("coupon_amounts", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.expected_recovery) {
            return Err(CatBondError::invalid("expected_recovery", "must lie in [0, 1]"));
        }
        if !self.threshold.is_finite() {
            return Err(CatBondError::invalid("threshold", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DateTrigger {
    pub time: f64,
    /// Clamped to `[0, 1]`; the raw estimate is in the matching `EstimatorResult`.
    pub probability: f64,
    pub method: EstimatorMethod,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriceResult {
    pub price: f64,
    /// Coupon dates in order, then maturity.
    pub per_date_trigger_probs: Vec<DateTrigger>,
    /// `(t, P_Z(1, 0, t))`, aligned with `per_date_trigger_probs`.
    pub discount_factors: Vec<(f64, f64)>,
    pub estimator_details: Vec<EstimatorResult>,
}

/// Seed for the trigger estimate at payment time `t`.
pub fn date_seed(seed: u64, t: f64) -> u64 {
    StreamSeed::new(seed).derive(&[tags::PRICE_DATE, t.to_bits()]).value()
}

struct Leg {
    time: f64,
    discount: f64,
    trigger: EstimatorResult,
}

impl Leg {
    fn survival(&self) -> f64 {
        1.0 - self.trigger.estimate.clamp(0.0, 1.0)
    }
}

/// Estimates `theta` and the unit discount factor at every payment date,
/// coupons first, maturity last.
fn evaluate_legs(rates: &VasicekParams, r0: f64, model: &LossModel, spec: &BondSpec, n: u64, seed: u64) -> Result<Vec<Leg>> {
    rates.validate()?;
    model.validate()?;
    spec.validate()?;
    if !r0.is_finite() {
        return Err(CatBondError::invalid("r0", "must be finite"));
    }
    let mut times = spec.coupon_times.clone();
    times.push(spec.maturity);
    times
        .par_iter()
        .map(|&t| {
            let trigger_spec = TriggerSpec::new(spec.threshold, t)?;
            let trigger = estimate_trigger_probability(model, &trigger_spec, n, date_seed(seed, t), MethodChoice::Auto)?;
            Ok(Leg { time: t, discount: zcb_price(rates, r0, 1.0, 0.0, t)?, trigger })
        })
        .collect()
}

fn assemble(legs: Vec<Leg>, price: f64) -> PriceResult {
    PriceResult {
        price,
        per_date_trigger_probs: legs
            .iter()
            .map(|l| DateTrigger {
                time: l.time,
                probability: l.trigger.estimate.clamp(0.0, 1.0),
                method: l.trigger.method,
            })
            .collect(),
        discount_factors: legs.iter().map(|l| (l.time, l.discount)).collect(),
        estimator_details: legs.into_iter().map(|l| l.trigger).collect(),
    }
}

/// Zero-coupon CAT bond: `(1 - theta(T)) P_Z(F, 0, T)`.
#[allow(clippy::too_many_arguments)]
pub fn price_zero_coupon_cat(
    rates: &VasicekParams,
    r0: f64,
    model: &LossModel,
    face: f64,
    maturity: f64,
    threshold: f64,
    n: u64,
    seed: u64,
) -> Result<PriceResult> {
    price_coupon_cat(rates, r0, model, &BondSpec::zero_coupon(face, maturity, threshold)?, n, seed)
}

/// Coupon CAT bond: coupons and principal each survive with `1 - theta(t)`.
pub fn price_coupon_cat(rates: &VasicekParams, r0: f64, model: &LossModel, spec: &BondSpec, n: u64, seed: u64) -> Result<PriceResult> {
    let legs = evaluate_legs(rates, r0, model, spec, n, seed)?;
    let (principal, coupons) = legs.split_last().expect("maturity leg is always present");
    let coupon_value: f64 =
        coupons.iter().zip(&spec.coupon_amounts).map(|(leg, c)| c * leg.discount * leg.survival()).sum();
    let price = coupon_value + spec.face * principal.discount * principal.survival();
    Ok(assemble(legs, price))
}

/// Coupon CAT bond with expected recovery `E[R]` on the principal:
/// the principal is worth `(1 - E[R]) C_Z(F) + E[R] P_Z(F)`.
pub fn price_recovery_cat(rates: &VasicekParams, r0: f64, model: &LossModel, spec: &BondSpec, n: u64, seed: u64) -> Result<PriceResult> {
    let legs = evaluate_legs(rates, r0, model, spec, n, seed)?;
    let (principal, coupons) = legs.split_last().expect("maturity leg is always present");
    let coupon_value: f64 =
        coupons.iter().zip(&spec.coupon_amounts).map(|(leg, c)| c * leg.discount * leg.survival()).sum();
    let default_free = spec.face * principal.discount;
    let r = spec.expected_recovery;
    let price = coupon_value + (1.0 - r) * default_free * principal.survival() + r * default_free;
    Ok(assemble(legs, price))
}
