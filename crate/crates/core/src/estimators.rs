//! Trigger-probability estimators: plain Monte Carlo and importance sampling
//! by exponential tilting of the event count and the severities.
//!
//! Paths are grouped in fixed blocks of [`BLOCK_LEN`]; block `j` draws from
//! the stream `seed -> j`. Block statistics are merged in block order, so an
//! estimate depends only on `(inputs, n, seed)` and never on how many worker
//! threads evaluated the blocks.

use crate::error::{CatBondError, Result};
use crate::loss_model::{expected_aggregate_loss, AggregateLoss, LossModel, PathSampler, SeverityDistribution, TriggerSpec};
use crate::rng::{SimRng, StreamSeed};
use crate::special::mills_ratio;
use rayon::prelude::*;
use std::fmt;

/// Paths per random stream.
pub const BLOCK_LEN: u64 = 1024;

/// Upper end of the Lognormal tilt search, in units of `sigma^2`.
const LOGNORMAL_BRACKET_LIMIT: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorMethod {
    PlainMc,
    IsGamma,
    IsLognormal,
}

impl EstimatorMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PlainMc => "plain_mc",
            Self::IsGamma => "is_gamma",
            Self::IsLognormal => "is_lognormal",
        }
    }

    pub fn is_importance_sampling(self) -> bool {
        !matches!(self, Self::PlainMc)
    }
}

impl fmt::Display for EstimatorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which estimator a caller wants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodChoice {
    PlainMc,
    ImportanceSampling,
    /// Importance sampling while `E[L(t)] < D`, plain MC otherwise.
    Auto,
}

impl std::str::FromStr for MethodChoice {
    type Err = CatBondError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(Self::PlainMc),
            "is" => Ok(Self::ImportanceSampling),
            "auto" => Ok(Self::Auto),
            other => Err(CatBondError::invalid("method", format!("unknown method {other:?}"))),
        }
    }
}

/// Measure change: Poisson tilt `a`, severity tilt `b`, and the resulting
/// sampling laws. `tilted_count_mean` is the Poisson parameter for the whole
/// horizon, `lambda T e^a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TiltParams {
    pub poisson_tilt: f64,
    pub severity_tilt: f64,
    pub tilted_count_mean: f64,
    pub tilted_severity: SeverityDistribution,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorResult {
    pub estimate: f64,
    pub std_error: f64,
    /// Unbiased sample variance of the per-path contributions.
    pub sample_variance: f64,
    pub n_samples: u64,
    pub method: EstimatorMethod,
    pub tilt: Option<TiltParams>,
    /// Set when `D <= 0`: the trigger has fired at inception and nothing was simulated.
    pub degenerate: bool,
}

impl EstimatorResult {
    fn degenerate(n: u64, method: EstimatorMethod) -> Self {
        Self { estimate: 1.0, std_error: 0.0, sample_variance: 0.0, n_samples: n, method, tilt: None, degenerate: true }
    }

    fn from_summary(s: Summary, method: EstimatorMethod, tilt: Option<TiltParams>) -> Self {
        let sample_variance = s.variance();
        Self {
            estimate: s.mean,
            std_error: (sample_variance / s.count as f64).sqrt(),
            sample_variance,
            n_samples: s.count,
            method,
            tilt,
            degenerate: false,
        }
    }
}

/// Running mean and centred sum of squares (Welford), mergeable.
#[derive(Clone, Copy, Debug, Default)]
struct Summary {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Summary {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.count as f64 * other.count as f64 / count as f64);
        Self { count, mean, m2 }
    }

    fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(CatBondError::invalid("n", "at least one sample is required"));
    }
    Ok(())
}

fn block_ranges(n: u64) -> impl IndexedParallelIterator<Item = (u64, u64)> {
    let blocks = n.div_ceil(BLOCK_LEN) as usize;
    (0..blocks).into_par_iter().map(move |j| {
        let j = j as u64;
        (j, BLOCK_LEN.min(n - j * BLOCK_LEN))
    })
}

/// Mean and variance of `contribution(path)` over `n` paths.
fn summarize<F>(n: u64, seed: StreamSeed, contribution: F) -> Summary
where
    F: Fn(&mut SimRng) -> f64 + Sync,
{
    let per_block: Vec<Summary> = block_ranges(n)
        .map(|(j, len)| {
            let mut rng = seed.child(j).rng();
            let mut s = Summary::default();
            for _ in 0..len {
                s.push(contribution(&mut rng));
            }
            s
        })
        .collect();
    per_block.into_iter().fold(Summary::default(), Summary::merge)
}

/// Per-path contributions in path order; same streams as [`summarize`].
fn contributions<F>(n: u64, seed: StreamSeed, contribution: F) -> Vec<f64>
where
    F: Fn(&mut SimRng) -> f64 + Sync,
{
    let blocks: Vec<Vec<f64>> = block_ranges(n)
        .map(|(j, len)| {
            let mut rng = seed.child(j).rng();
            (0..len).map(|_| contribution(&mut rng)).collect()
        })
        .collect();
    blocks.concat()
}

#[inline]
fn indicator(path: &AggregateLoss, threshold: f64) -> f64 {
    if path.total_loss >= threshold {
        1.0
    } else {
        0.0
    }
}

/// Standard Monte Carlo: the fraction of paths with `L >= D`.
pub fn mc_trigger_probability(model: &LossModel, spec: &TriggerSpec, n: u64, seed: u64) -> Result<EstimatorResult> {
    model.validate()?;
    spec.validate()?;
    check_n(n)?;
    if spec.is_degenerate() {
        return Ok(EstimatorResult::degenerate(n, EstimatorMethod::PlainMc));
    }
    let sampler = PathSampler::new(model.hazard(spec.horizon), model.severity)?;
    let d = spec.threshold;
    let s = summarize(n, StreamSeed::new(seed), |rng| indicator(&sampler.sample(rng), d));
    Ok(EstimatorResult::from_summary(s, EstimatorMethod::PlainMc, None))
}

/// Gamma tilt that moves the tilted expected loss onto the threshold:
/// `a = ln(D / (lambda T k beta)) / 2`, `b = 1/beta - lambda T e^a k / D`.
pub fn gamma_tilt(model: &LossModel, spec: &TriggerSpec) -> Result<TiltParams> {
    model.validate()?;
    spec.validate()?;
    let SeverityDistribution::Gamma { shape, scale } = model.severity else {
        return Err(CatBondError::UnsupportedSeverity { expected: "gamma" });
    };
    if spec.is_degenerate() {
        return Err(CatBondError::invalid("threshold", "the gamma tilt needs D > 0"));
    }
    let d = spec.threshold;
    let hazard = model.hazard(spec.horizon);
    let a = 0.5 * (d / (hazard * shape * scale)).ln();
    let tilted_count_mean = hazard * a.exp();
    let b = 1.0 / scale - tilted_count_mean * shape / d;
    Ok(TiltParams {
        poisson_tilt: a,
        severity_tilt: b,
        tilted_count_mean,
        tilted_severity: SeverityDistribution::Gamma { shape, scale: scale / (1.0 - scale * b) },
    })
}

/// `ln R` for a Gamma path: `lambda T (e^a - 1) - a N - k N ln(1 - beta b) - b L`.
pub fn gamma_log_weight(model: &LossModel, horizon: f64, tilt: &TiltParams, event_count: u64, total_loss: f64) -> f64 {
    let SeverityDistribution::Gamma { shape, scale } = model.severity else {
        return f64::NAN;
    };
    let (a, b) = (tilt.poisson_tilt, tilt.severity_tilt);
    let n = event_count as f64;
    model.hazard(horizon) * a.exp_m1() - a * n - shape * n * (-scale * b).ln_1p() - b * total_loss
}

fn validate_gamma_tilt(model: &LossModel, tilt: &TiltParams) -> Result<()> {
    let SeverityDistribution::Gamma { scale, .. } = model.severity else {
        return Err(CatBondError::UnsupportedSeverity { expected: "gamma" });
    };
    if !(tilt.severity_tilt < 1.0 / scale) {
        return Err(CatBondError::invalid("severity_tilt", "gamma tilt requires b < 1/beta"));
    }
    if !(tilt.tilted_count_mean > 0.0 && tilt.tilted_count_mean.is_finite()) {
        return Err(CatBondError::invalid("tilted_count_mean", "must be positive"));
    }
    tilt.tilted_severity.validate()
}

/// Importance-sampled trigger probability for Gamma severities, using [`gamma_tilt`].
pub fn is_trigger_probability_gamma(model: &LossModel, spec: &TriggerSpec, n: u64, seed: u64) -> Result<EstimatorResult> {
    model.validate()?;
    spec.validate()?;
    check_n(n)?;
    if spec.is_degenerate() {
        return Ok(EstimatorResult::degenerate(n, EstimatorMethod::IsGamma));
    }
    let tilt = gamma_tilt(model, spec)?;
    is_trigger_probability_gamma_with_tilt(model, spec, &tilt, n, seed)
}

/// Gamma importance sampling under a caller-supplied tilt.
pub fn is_trigger_probability_gamma_with_tilt(
    model: &LossModel,
    spec: &TriggerSpec,
    tilt: &TiltParams,
    n: u64,
    seed: u64,
) -> Result<EstimatorResult> {
    model.validate()?;
    spec.validate()?;
    check_n(n)?;
    validate_gamma_tilt(model, tilt)?;
    let contribution = gamma_contribution(model, spec, tilt)?;
    let s = summarize(n, StreamSeed::new(seed), contribution);
    Ok(EstimatorResult::from_summary(s, EstimatorMethod::IsGamma, Some(*tilt)))
}

fn gamma_contribution<'a>(
    model: &'a LossModel,
    spec: &'a TriggerSpec,
    tilt: &'a TiltParams,
) -> Result<impl Fn(&mut SimRng) -> f64 + Sync + 'a> {
    let sampler = PathSampler::new(tilt.tilted_count_mean, tilt.tilted_severity)?;
    Ok(move |rng: &mut SimRng| {
        let path = sampler.sample(rng);
        if path.total_loss >= spec.threshold {
            gamma_log_weight(model, spec.horizon, tilt, path.event_count, path.total_loss).exp()
        } else {
            0.0
        }
    })
}

/// First-order condition of the Lognormal tilt,
/// `h'(b) = (2 lambda t b / s^2) e^{b^2 / (2 s^2)} - M(z) / s` with
/// `z = (ln D - mu + b) / s` and `M` the Mills ratio.
/// Returns `(h'(b), first term, second term)`.
pub fn lognormal_tilt_condition(model: &LossModel, spec: &TriggerSpec, b: f64) -> Result<(f64, f64, f64)> {
    let SeverityDistribution::Lognormal { log_mean, log_sd } = model.severity else {
        return Err(CatBondError::UnsupportedSeverity { expected: "lognormal" });
    };
    let s2 = log_sd * log_sd;
    let growth = 2.0 * model.hazard(spec.horizon) * b / s2 * (b * b / (2.0 * s2)).exp();
    let z = (spec.threshold.ln() - log_mean + b) / log_sd;
    let mills = mills_ratio(z) / log_sd;
    Ok((growth - mills, growth, mills))
}

/// Solves the Lognormal first-order condition for `b >= 0` by bisection on an
/// expanding bracket, then sets `a = b^2 / (2 s^2)`.
pub fn lognormal_tilt(model: &LossModel, spec: &TriggerSpec, tol: f64) -> Result<TiltParams> {
    model.validate()?;
    spec.validate()?;
    let SeverityDistribution::Lognormal { log_mean, log_sd } = model.severity else {
        return Err(CatBondError::UnsupportedSeverity { expected: "lognormal" });
    };
    if spec.is_degenerate() {
        return Err(CatBondError::invalid("threshold", "the lognormal tilt needs D > 0"));
    }
    if !(tol > 0.0) {
        return Err(CatBondError::invalid("tol", format!("must be positive, got {tol}")));
    }
    let s2 = log_sd * log_sd;
    let limit = LOGNORMAL_BRACKET_LIMIT * s2;
    let h = |b: f64| lognormal_tilt_condition(model, spec, b);

    let mut lo = 0.0;
    let mut hi = (0.01 * s2).min(limit);
    loop {
        let (v, ..) = h(hi)?;
        if v > 0.0 {
            break;
        }
        if v.is_nan() || hi >= limit {
            return Err(CatBondError::RootNotBracketed { upper: limit });
        }
        lo = hi;
        hi = (2.0 * hi).min(limit);
    }

    let mut b = 0.5 * (lo + hi);
    for _ in 0..200 {
        b = 0.5 * (lo + hi);
        let (v, growth, mills) = h(b)?;
        if v.abs() <= tol * growth.abs().max(mills.abs()).max(1.0) || b <= lo || b >= hi {
            break;
        }
        if v > 0.0 {
            hi = b;
        } else {
            lo = b;
        }
    }
    let a = b * b / (2.0 * s2);
    Ok(TiltParams {
        poisson_tilt: a,
        severity_tilt: b,
        tilted_count_mean: model.hazard(spec.horizon) * a.exp(),
        tilted_severity: SeverityDistribution::Lognormal { log_mean: log_mean + b, log_sd },
    })
}

/// `ln R` for a Lognormal path, in the sampling form
/// `lambda t (e^a - 1) - a N + N ((mu + b)^2 - mu^2) / (2 s^2) - b sum(Y) / s^2`.
pub fn lognormal_log_weight(model: &LossModel, horizon: f64, tilt: &TiltParams, event_count: u64, log_sum: f64) -> f64 {
    let SeverityDistribution::Lognormal { log_mean, log_sd } = model.severity else {
        return f64::NAN;
    };
    let (a, b) = (tilt.poisson_tilt, tilt.severity_tilt);
    let s2 = log_sd * log_sd;
    let n = event_count as f64;
    let shifted = log_mean + b;
    model.hazard(horizon) * a.exp_m1() - a * n + n * (shifted * shifted - log_mean * log_mean) / (2.0 * s2)
        - b * log_sum / s2
}

fn validate_lognormal_tilt(model: &LossModel, tilt: &TiltParams) -> Result<()> {
    if !matches!(model.severity, SeverityDistribution::Lognormal { .. }) {
        return Err(CatBondError::UnsupportedSeverity { expected: "lognormal" });
    }
    if !(tilt.severity_tilt >= 0.0) {
        return Err(CatBondError::invalid("severity_tilt", "lognormal tilt requires b >= 0"));
    }
    if !(tilt.tilted_count_mean > 0.0 && tilt.tilted_count_mean.is_finite()) {
        return Err(CatBondError::invalid("tilted_count_mean", "must be positive"));
    }
    tilt.tilted_severity.validate()
}

/// Default tolerance for the Lognormal tilt root.
pub const LOGNORMAL_TILT_TOL: f64 = 1e-10;

/// Importance-sampled trigger probability for Lognormal severities, using [`lognormal_tilt`].
pub fn is_trigger_probability_lognormal(model: &LossModel, spec: &TriggerSpec, n: u64, seed: u64) -> Result<EstimatorResult> {
    model.validate()?;
    spec.validate()?;
    check_n(n)?;
    if spec.is_degenerate() {
        return Ok(EstimatorResult::degenerate(n, EstimatorMethod::IsLognormal));
    }
    let tilt = lognormal_tilt(model, spec, LOGNORMAL_TILT_TOL)?;
    is_trigger_probability_lognormal_with_tilt(model, spec, &tilt, n, seed)
}

/// Lognormal importance sampling under a caller-supplied tilt.
pub fn is_trigger_probability_lognormal_with_tilt(
    model: &LossModel,
    spec: &TriggerSpec,
    tilt: &TiltParams,
    n: u64,
    seed: u64,
) -> Result<EstimatorResult> {
    model.validate()?;
    spec.validate()?;
    check_n(n)?;
    validate_lognormal_tilt(model, tilt)?;
    let contribution = lognormal_contribution(model, spec, tilt)?;
    let s = summarize(n, StreamSeed::new(seed), contribution);
    Ok(EstimatorResult::from_summary(s, EstimatorMethod::IsLognormal, Some(*tilt)))
}

fn lognormal_contribution<'a>(
    model: &'a LossModel,
    spec: &'a TriggerSpec,
    tilt: &'a TiltParams,
) -> Result<impl Fn(&mut SimRng) -> f64 + Sync + 'a> {
    let sampler = PathSampler::new(tilt.tilted_count_mean, tilt.tilted_severity)?;
    Ok(move |rng: &mut SimRng| {
        let path = sampler.sample(rng);
        if path.total_loss >= spec.threshold {
            let log_sum = path.log_severity_sum.unwrap_or(0.0);
            lognormal_log_weight(model, spec.horizon, tilt, path.event_count, log_sum).exp()
        } else {
            0.0
        }
    })
}

/// The tilt the importance sampler would use for `model`.
pub fn default_tilt(model: &LossModel, spec: &TriggerSpec) -> Result<TiltParams> {
    match model.severity {
        SeverityDistribution::Gamma { .. } => gamma_tilt(model, spec),
        SeverityDistribution::Lognormal { .. } => lognormal_tilt(model, spec, LOGNORMAL_TILT_TOL),
    }
}

/// The identity measure change (`a = b = 0`).
pub fn identity_tilt(model: &LossModel, horizon: f64) -> TiltParams {
    TiltParams {
        poisson_tilt: 0.0,
        severity_tilt: 0.0,
        tilted_count_mean: model.hazard(horizon),
        tilted_severity: model.severity,
    }
}

/// Importance sampling with the severity-appropriate tilt.
pub fn is_trigger_probability(model: &LossModel, spec: &TriggerSpec, n: u64, seed: u64) -> Result<EstimatorResult> {
    match model.severity {
        SeverityDistribution::Gamma { .. } => is_trigger_probability_gamma(model, spec, n, seed),
        SeverityDistribution::Lognormal { .. } => is_trigger_probability_lognormal(model, spec, n, seed),
    }
}

/// Resolves [`MethodChoice::Auto`]: importance sampling exactly when the
/// untilted expected loss over the horizon is below the threshold.
pub fn resolve_method(model: &LossModel, spec: &TriggerSpec, choice: MethodChoice) -> MethodChoice {
    match choice {
        MethodChoice::Auto => {
            if expected_aggregate_loss(model, spec.horizon) < spec.threshold {
                MethodChoice::ImportanceSampling
            } else {
                MethodChoice::PlainMc
            }
        }
        other => other,
    }
}

/// Dispatches to the requested estimator.
pub fn estimate_trigger_probability(
    model: &LossModel,
    spec: &TriggerSpec,
    n: u64,
    seed: u64,
    choice: MethodChoice,
) -> Result<EstimatorResult> {
    match resolve_method(model, spec, choice) {
        MethodChoice::ImportanceSampling => is_trigger_probability(model, spec, n, seed),
        _ => mc_trigger_probability(model, spec, n, seed),
    }
}

/// Per-path contributions (indicators or weighted indicators) in path
/// order. `tilt = None` gives plain Monte Carlo. The streams are the ones
/// the corresponding estimator uses for the same `seed`.
pub fn path_contributions(
    model: &LossModel,
    spec: &TriggerSpec,
    tilt: Option<&TiltParams>,
    n: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    model.validate()?;
    spec.validate()?;
    check_n(n)?;
    if spec.is_degenerate() {
        return Ok(vec![1.0; n as usize]);
    }
    let seed = StreamSeed::new(seed);
    match (tilt, model.severity) {
        (None, _) => {
            let sampler = PathSampler::new(model.hazard(spec.horizon), model.severity)?;
            Ok(contributions(n, seed, |rng| indicator(&sampler.sample(rng), spec.threshold)))
        }
        (Some(t), SeverityDistribution::Gamma { .. }) => {
            validate_gamma_tilt(model, t)?;
            Ok(contributions(n, seed, gamma_contribution(model, spec, t)?))
        }
        (Some(t), SeverityDistribution::Lognormal { .. }) => {
            validate_lognormal_tilt(model, t)?;
            Ok(contributions(n, seed, lognormal_contribution(model, spec, t)?))
        }
    }
}
