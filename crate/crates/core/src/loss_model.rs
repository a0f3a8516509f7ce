//! Compound-Poisson aggregate loss `L(t) = X_1 + ... + X_M(t)` with
//! `M(t) ~ Poisson(lambda t)` and i.i.d. Gamma or Lognormal severities.

use crate::error::{CatBondError, Result};
use crate::special::{gamma_q, ln_poisson_pmf, normal_cdf};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use statrs::function::gamma::gamma_lr;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SeverityDistribution {
    /// Gamma with shape `k` and scale `beta`.
    Gamma { shape: f64, scale: f64 },
    /// `exp(N(log_mean, log_sd^2))`.
    Lognormal { log_mean: f64, log_sd: f64 },
}

impl SeverityDistribution {
    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        let s = Self::Gamma { shape, scale };
        s.validate()?;
        Ok(s)
    }

    pub fn lognormal(log_mean: f64, log_sd: f64) -> Result<Self> {
        let s = Self::Lognormal { log_mean, log_sd };
        s.validate()?;
        Ok(s)
    }

    /// `Gamma(1, 1.635e8)`, the exponential severity of the reference study.
    pub const fn reference_gamma() -> Self {
        Self::Gamma { shape: 1.0, scale: 1.635e8 }
    }

    /// `Logn(18.4, 1)`.
    pub const fn reference_lognormal() -> Self {
        Self::Lognormal { log_mean: 18.4, log_sd: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Gamma { shape, scale } => {
                if !(shape > 0.0 && shape.is_finite()) {
                    return Err(CatBondError::invalid("shape", format!("must be positive, got {shape}")));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(CatBondError::invalid("scale", format!("must be positive, got {scale}")));
                }
            }
            Self::Lognormal { log_mean, log_sd } => {
                if !log_mean.is_finite() {
                    return Err(CatBondError::invalid("log_mean", "must be finite"));
                }
                if !(log_sd > 0.0 && log_sd.is_finite()) {
                    return Err(CatBondError::invalid("log_sd", format!("must be positive, got {log_sd}")));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> SeverityKind {
        match self {
            Self::Gamma { .. } => SeverityKind::Gamma,
            Self::Lognormal { .. } => SeverityKind::Lognormal,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Gamma { shape, scale } => shape * scale,
            Self::Lognormal { log_mean, log_sd } => (log_mean + 0.5 * log_sd * log_sd).exp(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Gamma { shape, scale } if shape == 1.0 => -(-x / scale).exp_m1(),
            Self::Gamma { shape, scale } => gamma_lr(shape, x / scale),
            Self::Lognormal { log_mean, log_sd } => normal_cdf((x.ln() - log_mean) / log_sd),
        }
    }

    /// One severity draw. Unit shape uses the inverse cdf `-beta ln(1 - U)`;
    /// other shapes use Marsaglia-Tsang rejection.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Gamma { shape, scale } => sample_gamma(shape, scale, rng),
            Self::Lognormal { log_mean, log_sd } => {
                let z: f64 = rng.sample(StandardNormal);
                (log_mean + log_sd * z).exp()
            }
        }
    }
}

fn sample_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    if shape == 1.0 {
        let u: f64 = rng.random();
        -scale * (-u).ln_1p()
    } else {
        Gamma::new(shape, scale).expect("validated gamma parameters").sample(rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SeverityKind {
    Gamma,
    Lognormal,
}

impl SeverityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gamma => "gamma",
            Self::Lognormal => "lognormal",
        }
    }

    pub fn reference(self) -> SeverityDistribution {
        match self {
            Self::Gamma => SeverityDistribution::reference_gamma(),
            Self::Lognormal => SeverityDistribution::reference_lognormal(),
        }
    }
}

impl std::str::FromStr for SeverityKind {
    type Err = CatBondError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(Self::Gamma),
            "lognormal" => Ok(Self::Lognormal),
            other => Err(CatBondError::invalid("severity", format!("unknown kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for SeverityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Constant-intensity compound Poisson loss model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossModel {
    /// Events per year.
    pub intensity: f64,
    pub severity: SeverityDistribution,
}

impl LossModel {
    pub fn new(intensity: f64, severity: SeverityDistribution) -> Result<Self> {
        let m = Self { intensity, severity };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.intensity > 0.0 && self.intensity.is_finite()) {
            return Err(CatBondError::invalid("intensity", format!("must be positive, got {}", self.intensity)));
        }
        self.severity.validate()
    }

    /// Hazard `lambda * horizon`, the expected event count.
    pub fn hazard(&self, horizon: f64) -> f64 {
        self.intensity * horizon
    }
}

/// Trigger threshold and observation horizon.
///
/// A non-positive threshold is accepted and marks the degenerate case where
/// every path has triggered at inception.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriggerSpec {
    pub threshold: f64,
    /// Years.
    pub horizon: f64,
}

impl TriggerSpec {
    pub fn new(threshold: f64, horizon: f64) -> Result<Self> {
        let s = Self { threshold, horizon };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(CatBondError::invalid("threshold", "must be finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CatBondError::invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        self.threshold <= 0.0
    }
}

/// One simulated aggregate-loss outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregateLoss {
    pub event_count: u64,
    pub total_loss: f64,
    /// Sum of the underlying normal draws; Lognormal severities only.
    pub log_severity_sum: Option<f64>,
}

/// Draws `(M, L)` for a fixed expected count and severity law.
///
/// Gamma severities are closed under convolution, so given `M = m` the
/// aggregate is drawn directly as `Gamma(m k, beta)` (inverse cdf when
/// `m k = 1`). Lognormal severities are summed event by event.
#[derive(Clone, Debug)]
pub(crate) struct PathSampler {
    count: Option<Poisson<f64>>,
    severity: SeverityDistribution,
}

impl PathSampler {
    pub(crate) fn new(expected_count: f64, severity: SeverityDistribution) -> Result<Self> {
        if !(expected_count >= 0.0 && expected_count.is_finite()) {
            return Err(CatBondError::invalid(
                "expected event count",
                format!("must be non-negative and finite, got {expected_count}"),
            ));
        }
        severity.validate()?;
        let count = if expected_count > 0.0 {
            Some(Poisson::new(expected_count).map_err(|e| CatBondError::invalid("expected event count", e.to_string()))?)
        } else {
            None
        };
        Ok(Self { count, severity })
    }

    #[inline]
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AggregateLoss {
        let event_count = match &self.count {
            Some(p) => p.sample(rng) as u64,
            None => 0,
        };
        match self.severity {
            SeverityDistribution::Gamma { shape, scale } => {
                let total_loss =
                    if event_count == 0 { 0.0 } else { sample_gamma(shape * event_count as f64, scale, rng) };
                AggregateLoss { event_count, total_loss, log_severity_sum: None }
            }
            SeverityDistribution::Lognormal { log_mean, log_sd } => {
                let mut total = 0.0;
                let mut log_sum = 0.0;
                for _ in 0..event_count {
                    let z: f64 = rng.sample(StandardNormal);
                    let y = log_mean + log_sd * z;
                    log_sum += y;
                    total += y.exp();
                }
                AggregateLoss { event_count, total_loss: total, log_severity_sum: Some(log_sum) }
            }
        }
    }
}

/// Simulates `L(horizon)` once from `rng`.
pub fn simulate_aggregate_loss<R: Rng + ?Sized>(model: &LossModel, horizon: f64, rng: &mut R) -> Result<AggregateLoss> {
    model.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CatBondError::invalid("horizon", format!("must be positive, got {horizon}")));
    }
    Ok(PathSampler::new(model.hazard(horizon), model.severity)?.sample(rng))
}

/// `E[L(t)] = lambda t E[X]` (Wald's identity).
pub fn expected_aggregate_loss(model: &LossModel, horizon: f64) -> f64 {
    model.hazard(horizon) * model.severity.mean()
}

/// Intensity of the trigger process given the loss accumulated so far:
/// `lambda (1 - F_X(D - L)) 1{L < D}`.
pub fn conditional_trigger_intensity(model: &LossModel, threshold: f64, current_loss: f64) -> f64 {
    if current_loss >= threshold {
        return 0.0;
    }
    model.intensity * (1.0 - model.severity.cdf(threshold - current_loss))
}

/// Exact `P(L(t) >= D)` for Gamma severities:
/// `sum_{n>=1} Pois(n; lambda t) Q(n k, D / beta)`, truncated once the
/// remaining Poisson mass is provably below `tol`.
pub fn trigger_prob_series_gamma(model: &LossModel, spec: &TriggerSpec, tol: f64) -> Result<f64> {
    model.validate()?;
    spec.validate()?;
    let SeverityDistribution::Gamma { shape, scale } = model.severity else {
        return Err(CatBondError::UnsupportedSeverity { expected: "gamma" });
    };
    if !(tol > 0.0) {
        return Err(CatBondError::invalid("tol", format!("must be positive, got {tol}")));
    }
    if spec.is_degenerate() {
        return Ok(1.0);
    }
    let mean = model.hazard(spec.horizon);
    let x = spec.threshold / scale;
    let mut sum = 0.0;
    let mut n: u64 = 1;
    loop {
        let p = ln_poisson_pmf(n, mean).exp();
        sum += p * gamma_q(n as f64 * shape, x);
        // Past the mode the pmf ratios p_{j+1}/p_j = mean/(j+1) are < 1 and
        // decreasing, so the tail is bounded by a geometric series.
        let next = n + 1;
        if next as f64 > mean {
            let ratio = mean / (next as f64 + 1.0);
            let tail_bound = ln_poisson_pmf(next, mean).exp() / (1.0 - ratio);
            if tail_bound < tol {
                break;
            }
        }
        n = next;
        if n > 100_000_000 {
            return Err(CatBondError::NonFinite("series did not converge".into()));
        }
    }
    Ok(sum.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;
    use approx::assert_relative_eq;

    fn gamma_model() -> LossModel {
        LossModel::new(35.0, SeverityDistribution::reference_gamma()).unwrap()
    }

    fn lognormal_model() -> LossModel {
        LossModel::new(35.0, SeverityDistribution::reference_lognormal()).unwrap()
    }

    #[test]
    fn expected_loss_closed_forms() {
        assert_relative_eq!(expected_aggregate_loss(&gamma_model(), 1.0), 5.7225e9, max_relative = 1e-14);
        assert_relative_eq!(
            expected_aggregate_loss(&lognormal_model(), 1.0),
            35.0 * 18.9f64.exp(),
            max_relative = 1e-14
        );
        let m = gamma_model();
        assert_relative_eq!(
            expected_aggregate_loss(&m, 2.0),
            2.0 * expected_aggregate_loss(&m, 1.0),
            max_relative = 1e-15
        );
    }

    fn check_sample_mean(model: LossModel, seed: u64) {
        let mut rng = StreamSeed::new(seed).rng();
        let n = 100_000;
        let xs: Vec<f64> =
            (0..n).map(|_| simulate_aggregate_loss(&model, 1.0, &mut rng).unwrap().total_loss).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let expected = expected_aggregate_loss(&model, 1.0);
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} vs {expected} (se {se})");
    }

    #[test]
    fn wald_identity_gamma() {
        check_sample_mean(gamma_model(), 11);
    }

    #[test]
    fn wald_identity_lognormal() {
        check_sample_mean(lognormal_model(), 12);
    }

    #[test]
    fn zero_events_means_zero_loss() {
        let model = LossModel::new(1e-9, SeverityDistribution::reference_lognormal()).unwrap();
        let mut rng = StreamSeed::new(3).rng();
        let out = simulate_aggregate_loss(&model, 1.0, &mut rng).unwrap();
        assert_eq!(out.event_count, 0);
        assert_eq!(out.total_loss, 0.0);
        assert_eq!(out.log_severity_sum, Some(0.0));
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        for model in [gamma_model(), lognormal_model()] {
            let a = simulate_aggregate_loss(&model, 1.0, &mut StreamSeed::new(9).rng()).unwrap();
            let b = simulate_aggregate_loss(&model, 1.0, &mut StreamSeed::new(9).rng()).unwrap();
            assert_eq!(a.event_count, b.event_count);
            assert_eq!(a.total_loss.to_bits(), b.total_loss.to_bits());
        }
    }

    #[test]
    fn gamma_severity_ks_distance() {
        let sev = SeverityDistribution::reference_gamma();
        let mut rng = StreamSeed::new(21).rng();
        let mut xs: Vec<f64> = (0..100_000).map(|_| sev.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = sev.cdf(x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS distance {ks}");
    }

    #[test]
    fn conditional_intensity_cases() {
        let m = gamma_model();
        assert_eq!(conditional_trigger_intensity(&m, 9e9, 9e9), 0.0);
        assert_eq!(conditional_trigger_intensity(&m, 9e9, 1e10), 0.0);
        let near = conditional_trigger_intensity(&m, 9e9, 9e9 - 1e-3);
        assert_relative_eq!(near, 35.0, max_relative = 1e-9);
        let at_scale = conditional_trigger_intensity(&m, 9e9, 9e9 - 1.635e8);
        assert_relative_eq!(at_scale, 35.0 * (-1.0f64).exp(), max_relative = 1e-14);
        let ln = lognormal_model();
        let mut prev = 0.0;
        for i in 0..100 {
            let v = conditional_trigger_intensity(&ln, 9e9, 9e9 * i as f64 / 100.0);
            assert!(v >= prev && v <= 35.0);
            prev = v;
        }
    }

    #[test]
    fn series_limits() {
        let m = gamma_model();
        let tiny = TriggerSpec::new(1e-6, 1.0).unwrap();
        let p = trigger_prob_series_gamma(&m, &tiny, 1e-14).unwrap();
        assert_relative_eq!(p, 1.0 - (-35.0f64).exp(), max_relative = 1e-12);
        let dominated = TriggerSpec::new(1e9, 10.0).unwrap();
        assert!((trigger_prob_series_gamma(&m, &dominated, 1e-12).unwrap() - 1.0).abs() < 1e-10);
        let ln = lognormal_model();
        assert!(matches!(
            trigger_prob_series_gamma(&ln, &tiny, 1e-12),
            Err(CatBondError::UnsupportedSeverity { .. })
        ));
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(LossModel::new(0.0, SeverityDistribution::reference_gamma()).is_err());
        assert!(SeverityDistribution::gamma(0.0, 1.0).is_err());
        assert!(SeverityDistribution::gamma(1.0, -1.0).is_err());
        assert!(SeverityDistribution::lognormal(18.0, 0.0).is_err());
        assert!(TriggerSpec::new(9e9, 0.0).is_err());
    }
}
