//! Multilayer perceptron surrogate for CAT bond prices.
//!
//! Inputs are `(r0, lambda, D, T in years, N)`; the coupon schedule is
//! implied by `(T, N)` (equal spacing, 5% of face per coupon, face 1).
//! Each hidden layer is `affine -> [batch norm] -> activation -> [dropout]`,
//! followed by a linear output unit.

mod format;
mod network;
mod train;

pub use format::{load_model, read_model, save_model, write_model, FORMAT_VERSION};
pub use train::{
    cross_validate, objective, objective_gradient, parameter, parameter_count, train, train_arrays, train_with_options, ConfigScore,
    CvResult, FoldMetrics, TrainOptions, TrainReport, VALIDATION_FRACTION,
};

use crate::error::{CatBondError, Result};
use crate::loss_model::SeverityKind;
use crate::term_structure::DAYS_PER_YEAR;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use std::fmt;
use std::str::FromStr;

pub use network::{BatchNorm, Dense, Hidden};

pub const N_FEATURES: usize = 5;
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["r0", "lambda", "threshold", "maturity_years", "n_coupons"];

/// Running-statistics momentum for batch normalization.
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = CatBondError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            other => Err(CatBondError::invalid("activation", format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub l2_coeff: f64,
    pub dropout_rate: f64,
    pub use_batch_norm: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Upper bound on training epochs.
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; the best
    /// validation snapshot is returned either way.
    pub patience: usize,
    pub seed: u64,
}

impl MlpConfig {
    /// The published best configuration: four hidden layers, ReLU, L2 1e-4,
    /// dropout 0.1, batch normalization, learning rate 1e-5.
    pub fn reference() -> Self {
        Self {
            hidden_dims: vec![256, 128, 64, 32],
            activation: Activation::Relu,
            l2_coeff: 1e-4,
            dropout_rate: 0.1,
            use_batch_norm: true,
            learning_rate: 1e-5,
            batch_size: 256,
            epochs: 1000,
            patience: 300,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(CatBondError::invalid("hidden_dims", "need at least one layer, all widths positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CatBondError::invalid("learning_rate", format!("must be positive, got {}", self.learning_rate)));
        }
        if !(self.l2_coeff >= 0.0 && self.l2_coeff.is_finite()) {
            return Err(CatBondError::invalid("l2_coeff", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(CatBondError::invalid("dropout_rate", "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(CatBondError::invalid("batch_size", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(CatBondError::invalid("epochs", "must be positive"));
        }
        Ok(())
    }
}

/// One simulated price with the inputs that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingSample {
    pub r0: f64,
    pub lambda: f64,
    pub threshold: f64,
    pub maturity_days: f64,
    pub n_coupons: u32,
    pub severity: SeverityKind,
    pub price: f64,
}

impl TrainingSample {
    pub fn maturity_years(&self) -> f64 {
        self.maturity_days / DAYS_PER_YEAR
    }

    pub fn features(&self) -> [f64; N_FEATURES] {
        [self.r0, self.lambda, self.threshold, self.maturity_years(), self.n_coupons as f64]
    }
}

pub fn feature_matrix(samples: &[TrainingSample]) -> Array2<f64> {
    let mut x = Array2::zeros((samples.len(), N_FEATURES));
    for (mut row, s) in x.rows_mut().into_iter().zip(samples) {
        row.assign(&Array1::from(s.features().to_vec()));
    }
    x
}

pub fn label_vector(samples: &[TrainingSample]) -> Array1<f64> {
    samples.iter().map(|s| s.price).collect()
}

/// Per-feature affine map `x -> (x - shift) / scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScaler {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity(dim: usize) -> Self {
        Self { shift: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Zero mean, unit variance per column. Constant columns keep scale 1.
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut shift = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            shift.push(mean);
            scale.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Self { shift, scale }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.shift.len() != self.scale.len() {
            return Err(CatBondError::DimensionMismatch { expected: self.shift.len(), got: self.scale.len() });
        }
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.shift.iter().any(|s| !s.is_finite()) {
            return Err(CatBondError::invalid("scaler", "scales must be positive and finite"));
        }
        Ok(())
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(CatBondError::DimensionMismatch { expected: self.dim(), got: x.ncols() });
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.shift[j], self.scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub scaler: FeatureScaler,
    pub hidden: Vec<Hidden>,
    pub output: Dense,
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.scaler.dim()
    }

    pub fn n_parameters(&self) -> usize {
        self.hidden
            .iter()
            .map(|h| h.dense.n_parameters() + h.norm.as_ref().map_or(0, |b| 2 * b.gamma.len()))
            .sum::<usize>()
            + self.output.n_parameters()
    }

    /// Checks that the layer dimensions chain from the scaler to one output.
    pub fn validate(&self) -> Result<()> {
        self.scaler.validate()?;
        let mut dim = self.input_dim();
        for h in &self.hidden {
            h.validate(dim)?;
            dim = h.dense.out_dim();
        }
        self.output.validate(dim)?;
        if self.output.out_dim() != 1 {
            return Err(CatBondError::DimensionMismatch { expected: 1, got: self.output.out_dim() });
        }
        Ok(())
    }
}

/// Surrogate price for one feature vector `(r0, lambda, D, T_years, N)`.
pub fn mlp_forward(model: &MlpModel, features: &[f64]) -> Result<f64> {
    if features.len() != model.input_dim() {
        return Err(CatBondError::DimensionMismatch { expected: model.input_dim(), got: features.len() });
    }
    let x = ArrayView2::from_shape((1, features.len()), features).expect("row shape matches length");
    Ok(predict_batch(model, x)?[0])
}

/// Vectorized inference over rows of `features`.
pub fn predict_batch(model: &MlpModel, features: ArrayView2<f64>) -> Result<Array1<f64>> {
    let x = model.scaler.transform(features)?;
    Ok(network::infer(model, x))
}

/// Sets the batch-norm running statistics to the exact population
/// statistics of `samples` (dropout off).
pub fn recalibrate_batch_norm(model: &mut MlpModel, samples: &[TrainingSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(CatBondError::Dataset("cannot recalibrate on an empty set".into()));
    }
    let x = model.scaler.transform(feature_matrix(samples).view())?;
    network::recalibrate(model, x);
    Ok(())
}

/// Shuffles with `seed` and splits off `test_fraction` of the rows.
pub fn train_test_split(
    samples: &[TrainingSample],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<TrainingSample>, Vec<TrainingSample>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(CatBondError::invalid("test_fraction", "must lie in [0, 1)"));
    }
    let order = train::shuffled_indices(samples.len(), crate::rng::StreamSeed::new(seed).child(crate::rng::tags::SHUFFLE));
    let n_test = (samples.len() as f64 * test_fraction).round() as usize;
    let test = order[..n_test].iter().map(|&i| samples[i]).collect();
    let train = order[n_test..].iter().map(|&i| samples[i]).collect();
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMetrics {
    pub mse: f64,
    pub mae: f64,
    pub max_abs: f64,
}

pub fn evaluate(model: &MlpModel, samples: &[TrainingSample]) -> Result<ErrorMetrics> {
    if samples.is_empty() {
        return Err(CatBondError::Dataset("cannot evaluate on an empty set".into()));
    }
    let pred = predict_batch(model, feature_matrix(samples).view())?;
    let n = samples.len() as f64;
    let mut m = ErrorMetrics { mse: 0.0, mae: 0.0, max_abs: 0.0 };
    for (p, s) in pred.iter().zip(samples) {
        let e = p - s.price;
        m.mse += e * e;
        m.mae += e.abs();
        m.max_abs = m.max_abs.max(e.abs());
    }
    m.mse /= n;
    m.mae /= n;
    Ok(m)
}
