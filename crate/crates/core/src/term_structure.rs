//! Affine short-rate discounting.
//!
//! A zero-coupon bond under an affine short-rate model is priced as
//! `F * exp(A(t,T) - B(t,T) * r)`, where `A` and `B` solve
//!
//! ```text
//! dB/dt = -1 - alpha(t) B + gamma(t) B^2 / 2,   B(T,T) = 0
//! dA/dt =  beta(t) B - delta(t) B^2 / 2,        A(T,T) = 0
//! ```
//!
//! for the short-rate dynamics `dr = (alpha r + beta) dt + sqrt(gamma r + delta) dW`.
//! Vasicek has closed forms; [`riccati_solve`] integrates the general system
//! and is used to validate them.

use crate::error::{CatBondError, Result};
use std::fmt;
use std::sync::Arc;

/// Day-count basis for day-denominated maturities.
pub const DAYS_PER_YEAR: f64 = 360.0;

/// Default Riccati integration step, in years.
pub const DEFAULT_RICCATI_STEP: f64 = 1e-4;

pub fn days_to_years(days: f64) -> f64 {
    days / DAYS_PER_YEAR
}

pub fn years_to_days(years: f64) -> f64 {
    years * DAYS_PER_YEAR
}

/// Vasicek model `dr = a (m - r) dt + s dW`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VasicekParams {
    pub mean_reversion_speed: f64,
    pub long_term_mean: f64,
    pub volatility: f64,
}

impl VasicekParams {
    pub fn new(mean_reversion_speed: f64, long_term_mean: f64, volatility: f64) -> Result<Self> {
        let p = Self { mean_reversion_speed, long_term_mean, volatility };
        p.validate()?;
        Ok(p)
    }

    /// The rate model used for all dataset generation: speed 0.2, mean 3%, vol 2%.
    pub const fn reference() -> Self {
        Self { mean_reversion_speed: 0.2, long_term_mean: 0.03, volatility: 0.02 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_reversion_speed > 0.0 && self.mean_reversion_speed.is_finite()) {
            return Err(CatBondError::invalid(
                "mean_reversion_speed",
                format!("must be positive and finite, got {}", self.mean_reversion_speed),
            ));
        }
        if !self.long_term_mean.is_finite() {
            return Err(CatBondError::invalid("long_term_mean", "must be finite"));
        }
        if !(self.volatility >= 0.0 && self.volatility.is_finite()) {
            return Err(CatBondError::invalid(
                "volatility",
                format!("must be non-negative and finite, got {}", self.volatility),
            ));
        }
        Ok(())
    }
}

fn check_times(t: f64, maturity: f64) -> Result<()> {
    if !(t.is_finite() && maturity.is_finite()) {
        return Err(CatBondError::NonFinite("valuation time".into()));
    }
    if t < 0.0 {
        return Err(CatBondError::invalid("t", format!("must be non-negative, got {t}")));
    }
    if t > maturity {
        return Err(CatBondError::TimeOrder { t, maturity });
    }
    Ok(())
}

/// Closed-form Vasicek `(A(t,T), B(t,T))`.
pub fn vasicek_ab(params: &VasicekParams, t: f64, maturity: f64) -> Result<(f64, f64)> {
    params.validate()?;
    check_times(t, maturity)?;
    let tau = maturity - t;
    if tau == 0.0 {
        return Ok((0.0, 0.0));
    }
    let a = params.mean_reversion_speed;
    let s2 = params.volatility * params.volatility;
    // exp_m1 keeps B accurate for a*tau near zero.
    let b = -(-a * tau).exp_m1() / a;
    let big_a = (params.long_term_mean - s2 / (2.0 * a * a)) * (b - tau) - s2 * b * b / (4.0 * a);
    Ok((big_a, b))
}

/// Default-free zero-coupon bond price `face * exp(A - B r0)`.
pub fn zcb_price(params: &VasicekParams, r0: f64, face: f64, t: f64, maturity: f64) -> Result<f64> {
    if !(face >= 0.0 && face.is_finite()) {
        return Err(CatBondError::invalid("face", format!("must be non-negative, got {face}")));
    }
    let (a, b) = vasicek_ab(params, t, maturity)?;
    Ok(face * (a - b * r0).exp())
}

type CoefficientFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Time-dependent coefficients of an affine short-rate model.
#[derive(Clone)]
pub struct AffineCoefficients {
    alpha: CoefficientFn,
    beta: CoefficientFn,
    gamma: CoefficientFn,
    delta: CoefficientFn,
}

impl fmt::Debug for AffineCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineCoefficients").finish_non_exhaustive()
    }
}

impl AffineCoefficients {
    pub fn new(
        alpha: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gamma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        delta: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { alpha: Arc::new(alpha), beta: Arc::new(beta), gamma: Arc::new(gamma), delta: Arc::new(delta) }
    }

    pub fn constant(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        Self::new(move |_| alpha, move |_| beta, move |_| gamma, move |_| delta)
    }

    /// Vasicek in affine form: drift `-a r + a m`, variance `s^2`.
    pub fn vasicek(p: &VasicekParams) -> Self {
        let a = p.mean_reversion_speed;
        Self::constant(-a, a * p.long_term_mean, 0.0, p.volatility * p.volatility)
    }

    pub fn alpha(&self, t: f64) -> f64 {
        (self.alpha)(t)
    }
    pub fn beta(&self, t: f64) -> f64 {
        (self.beta)(t)
    }
    pub fn gamma(&self, t: f64) -> f64 {
        (self.gamma)(t)
    }
    pub fn delta(&self, t: f64) -> f64 {
        (self.delta)(t)
    }
}

/// `A(t,T)` and `B(t,T)` for one maturity `T` on a uniform grid over `[0, T]`.
#[derive(Clone, Debug)]
pub struct DiscountCurve {
    maturity: f64,
    step: f64,
    /// Values at `t_i = i * step`, `i = 0..=n`; the last entry is the terminal condition.
    a: Vec<f64>,
    b: Vec<f64>,
}

impl DiscountCurve {
    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn grid_len(&self) -> usize {
        self.a.len()
    }

    fn interpolate(&self, values: &[f64], t: f64) -> Result<f64> {
        check_times(t, self.maturity)?;
        let n = values.len() - 1;
        let x = t / self.step;
        let i = (x.floor() as usize).min(n);
        if i == n {
            return Ok(values[n]);
        }
        let w = x - i as f64;
        Ok(values[i] * (1.0 - w) + values[i + 1] * w)
    }

    pub fn a_at(&self, t: f64) -> Result<f64> {
        self.interpolate(&self.a, t)
    }

    pub fn b_at(&self, t: f64) -> Result<f64> {
        self.interpolate(&self.b, t)
    }

    /// Grid values at index `i` (`t = i * step`).
    pub fn node(&self, i: usize) -> Option<(f64, f64, f64)> {
        Some((i as f64 * self.step, *self.a.get(i)?, *self.b.get(i)?))
    }

    pub fn price(&self, r: f64, face: f64, t: f64) -> Result<f64> {
        Ok(face * (self.a_at(t)? - self.b_at(t)? * r).exp())
    }
}

/// Integrates the Riccati system backward from `maturity` to 0 with classic
/// RK4. The step is shrunk so that an integer number of steps lands exactly
/// on `t = 0`.
pub fn riccati_solve(coeffs: &AffineCoefficients, maturity: f64, step: f64) -> Result<DiscountCurve> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(CatBondError::invalid("step", format!("must be positive, got {step}")));
    }
    if !(maturity >= 0.0 && maturity.is_finite()) {
        return Err(CatBondError::invalid("maturity", format!("must be non-negative, got {maturity}")));
    }
    let n = ((maturity / step).ceil() as usize).max(1);
    let h = maturity / n as f64;

    // Integrate in time-to-maturity s = T - t so the march is forward:
    // dB/ds = 1 + alpha B - gamma B^2 / 2,  dA/ds = -beta B + delta B^2 / 2.
    let rhs = |s: f64, b: f64| -> (f64, f64) {
        let t = maturity - s;
        let db = 1.0 + coeffs.alpha(t) * b - 0.5 * coeffs.gamma(t) * b * b;
        let da = -coeffs.beta(t) * b + 0.5 * coeffs.delta(t) * b * b;
        (da, db)
    };

    let mut a = vec![0.0; n + 1];
    let mut b = vec![0.0; n + 1];
    let (mut ya, mut yb) = (0.0_f64, 0.0_f64);
    for k in 0..n {
        let s = k as f64 * h;
        let (ka1, kb1) = rhs(s, yb);
        let (ka2, kb2) = rhs(s + 0.5 * h, yb + 0.5 * h * kb1);
        let (ka3, kb3) = rhs(s + 0.5 * h, yb + 0.5 * h * kb2);
        let (ka4, kb4) = rhs(s + h, yb + h * kb3);
        ya += h / 6.0 * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4);
        yb += h / 6.0 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4);
        if !(ya.is_finite() && yb.is_finite()) {
            return Err(CatBondError::NonFinite(format!("Riccati solution at t = {}", maturity - s - h)));
        }
        // grid index counts t upward
        a[n - k - 1] = ya;
        b[n - k - 1] = yb;
    }
    Ok(DiscountCurve { maturity, step: h, a, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const P: VasicekParams = VasicekParams::reference();

    #[test]
    fn closed_form_reference_point() {
        let (a, b) = vasicek_ab(&P, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(b, 0.906_346_234_610_090_9, epsilon = 1e-14);
        assert_abs_diff_eq!(a, -0.002_752_1, epsilon = 5e-8);
        let price = zcb_price(&P, 0.03, 1.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(price, 0.970_501, epsilon = 5e-7);
    }

    #[test]
    fn terminal_condition() {
        assert_eq!(vasicek_ab(&P, 2.5, 2.5).unwrap(), (0.0, 0.0));
        assert_eq!(zcb_price(&P, 0.07, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(zcb_price(&P, 0.07, 0.0, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_volatility_is_deterministic_at_mean() {
        let p = VasicekParams::new(0.2, 0.03, 0.0).unwrap();
        let (a, b) = vasicek_ab(&p, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(a, 0.03 * (b - 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(zcb_price(&p, 0.03, 1.0, 0.0, 1.0).unwrap(), (-0.03f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(vasicek_ab(&P, 1.5, 1.0), Err(CatBondError::TimeOrder { .. })));
        assert!(VasicekParams::new(0.0, 0.03, 0.02).is_err());
        assert!(VasicekParams::new(-0.1, 0.03, 0.02).is_err());
        assert!(VasicekParams::new(0.2, 0.03, -0.01).is_err());
        assert!(riccati_solve(&AffineCoefficients::vasicek(&P), 1.0, 0.0).is_err());
    }

    #[test]
    fn riccati_matches_closed_form() {
        let curve = riccati_solve(&AffineCoefficients::vasicek(&P), 1.0, DEFAULT_RICCATI_STEP).unwrap();
        let (a, b) = vasicek_ab(&P, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(curve.a_at(0.0).unwrap(), a, epsilon = 1e-6);
        assert_abs_diff_eq!(curve.b_at(0.0).unwrap(), b, epsilon = 1e-6);
        let (t_end, a_end, b_end) = curve.node(curve.grid_len() - 1).unwrap();
        assert_eq!((t_end, a_end, b_end), (1.0, 0.0, 0.0));
    }

    #[test]
    fn riccati_zero_coefficients() {
        let curve = riccati_solve(&AffineCoefficients::constant(0.0, 0.0, 0.0, 0.0), 2.0, 1e-3).unwrap();
        for t in [0.0, 0.3, 1.25, 2.0] {
            assert_abs_diff_eq!(curve.b_at(t).unwrap(), 2.0 - t, epsilon = 1e-12);
            assert_eq!(curve.a_at(t).unwrap(), 0.0);
        }
    }

    #[test]
    fn riccati_linear_mean_reversion() {
        let k = 0.7;
        let curve = riccati_solve(&AffineCoefficients::constant(-k, 0.0, 0.0, 0.0), 3.0, 1e-3).unwrap();
        for t in [0.0, 1.0, 2.9] {
            let exact = (1.0 - (-k * (3.0f64 - t)).exp()) / k;
            assert_abs_diff_eq!(curve.b_at(t).unwrap(), exact, epsilon = 1e-9);
        }
    }

    #[test]
    fn riccati_blow_up_is_reported() {
        // dB/ds = 1 + B^2 has a pole at s = pi/2.
        let coeffs = AffineCoefficients::constant(0.0, 0.0, -2.0, 0.0);
        assert!(matches!(riccati_solve(&coeffs, 3.0, 1e-3), Err(CatBondError::NonFinite(_))));
    }

    #[test]
    fn day_count() {
        assert_eq!(days_to_years(360.0), 1.0);
        assert_eq!(years_to_days(0.25), 90.0);
    }
}
