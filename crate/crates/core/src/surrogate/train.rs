//! Mini-batch Adam training, early stopping and k-fold model selection.

use super::network::{self, backward, forward_trace, gradient_slices, parameters_mut, PassMode};
use super::{evaluate, feature_matrix, label_vector, FeatureScaler, MlpConfig, MlpModel, TrainingSample, BN_MOMENTUM};
use crate::error::{CatBondError, Result};
use crate::rng::{tags, StreamSeed};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Share of the training rows held back for early stopping.
pub const VALIDATION_FRACTION: f64 = 0.1;

/// Datasets smaller than this train without a validation split.
const MIN_ROWS_FOR_VALIDATION: usize = 10;

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Use this scaler instead of fitting one on the training rows.
    pub scaler: Option<FeatureScaler>,
    /// Also evaluate the full objective on the training rows after every
    /// epoch, with dropout off and batch norm using statistics of the whole
    /// training set. Costs roughly one extra forward pass.
    pub record_train_loss: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_mse: f64,
    /// Validation MSE after each epoch; training MSE when there is no
    /// validation split.
    pub validation_mse: Vec<f64>,
    /// Empty unless requested in [`TrainOptions`].
    pub train_objective: Vec<f64>,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_validation: usize,
}

pub(crate) fn shuffled_indices(n: usize, seed: StreamSeed) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.rng());
    idx
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
    lr: f64,
}

impl Adam {
    fn new(model: &mut MlpModel, lr: f64) -> Self {
        let sizes: Vec<usize> = parameters_mut(model).iter().map(|p| p.len()).collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

fn mse(pred: &Array1<f64>, y: &Array1<f64>) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

/// Trains with a scaler fitted on the training rows.
pub fn train(dataset: &[TrainingSample], config: &MlpConfig) -> Result<MlpModel> {
    Ok(train_with_options(dataset, config, &TrainOptions::default())?.0)
}

/// Trains on `dataset` (already separated from any test set): 10% of the
/// rows are held out for early stopping, the rest feed Adam in shuffled
/// mini-batches. The returned model carries the best validation weights.
pub fn train_with_options(
    dataset: &[TrainingSample],
    config: &MlpConfig,
    options: &TrainOptions,
) -> Result<(MlpModel, TrainReport)> {
    train_arrays(feature_matrix(dataset), label_vector(dataset), config, options)
}

/// [`train_with_options`] on a raw feature matrix and label vector.
pub fn train_arrays(
    x_raw: Array2<f64>,
    y_all: Array1<f64>,
    config: &MlpConfig,
    options: &TrainOptions,
) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    if x_raw.nrows() == 0 {
        return Err(CatBondError::Dataset("training set is empty".into()));
    }
    if x_raw.nrows() != y_all.len() {
        return Err(CatBondError::DimensionMismatch { expected: x_raw.nrows(), got: y_all.len() });
    }
    if let Some(row) = (0..x_raw.nrows()).find(|&i| !y_all[i].is_finite() || x_raw.row(i).iter().any(|v| !v.is_finite())) {
        return Err(CatBondError::Dataset(format!("non-finite values in training row {row}")));
    }
    let root = StreamSeed::new(config.seed).child(tags::TRAINING);
    let n = x_raw.nrows();
    let order = shuffled_indices(n, root.child(0));
    let n_val = if n >= MIN_ROWS_FOR_VALIDATION { (n as f64 * VALIDATION_FRACTION).ceil() as usize } else { 0 };
    let (val_idx, train_idx) = order.split_at(n_val);

    let x_train_raw = x_raw.select(Axis(0), train_idx);
    let scaler = match &options.scaler {
        Some(s) => {
            s.validate()?;
            s.clone()
        }
        None => FeatureScaler::fit(x_train_raw.view()),
    };
    let x_train = scaler.transform(x_train_raw.view())?;
    let y_train = y_all.select(Axis(0), train_idx);
    let x_val = scaler.transform(x_raw.select(Axis(0), val_idx).view())?;
    let y_val = y_all.select(Axis(0), val_idx);

    let mut init_rng = root.child(1).rng();
    let mean_label = y_train.mean().unwrap_or(0.0);
    let (hidden, output) = network::init_layers(config, scaler.dim(), mean_label, &mut init_rng);
    let mut model = MlpModel { config: config.clone(), scaler, hidden, output };
    model.validate()?;

    let mut adam = Adam::new(&mut model, config.learning_rate);
    let mut shuffle_rng = root.child(2).rng();
    let mut dropout_rng = root.child(3).rng();
    let n_train = x_train.nrows();
    let skip_singletons = config.use_batch_norm && n_train > 1;

    let mut report = TrainReport {
        epochs_run: 0,
        best_epoch: 0,
        best_validation_mse: f64::INFINITY,
        validation_mse: Vec::new(),
        train_objective: Vec::new(),
        stopped_early: false,
        n_train,
        n_validation: n_val,
    };
    let mut best = model.clone();
    let mut since_best = 0;
    let mut perm: Vec<usize> = (0..n_train).collect();

    for epoch in 1..=config.epochs {
        perm.shuffle(&mut shuffle_rng);
        for (b, batch) in perm.chunks(config.batch_size).enumerate() {
            if skip_singletons && batch.len() < 2 {
                continue;
            }
            let xb = x_train.select(Axis(0), batch);
            let yb = y_train.select(Axis(0), batch);
            let trace = forward_trace(&model, xb, PassMode::Training(&mut dropout_rng));
            let loss = network::loss(&model, &trace, &yb);
            if !loss.is_finite() {
                return Err(CatBondError::Training(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            let grads = backward(&model, &trace, &yb);
            for (h, t) in model.hidden.iter_mut().zip(&trace.layers) {
                if let (Some(bn), Some(mean), Some(var)) = (&mut h.norm, &t.batch_mean, &t.batch_var) {
                    bn.running_mean.zip_mut_with(mean, |r, &m| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m);
                    bn.running_var.zip_mut_with(var, |r, &v| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v);
                }
            }
            adam.update(parameters_mut(&mut model), gradient_slices(&grads));
        }

        // Scored (and kept) with batch-norm statistics taken over the whole
        // training split; the moving averages stay the optimizer's state.
        let calibrated;
        let scored = if config.use_batch_norm {
            let mut m = model.clone();
            network::recalibrate(&mut m, x_train.clone());
            calibrated = m;
            &calibrated
        } else {
            &model
        };
        let monitor = if n_val > 0 {
            mse(&network::infer(scored, x_val.clone()), &y_val)
        } else {
            mse(&network::infer(scored, x_train.clone()), &y_train)
        };
        if !monitor.is_finite() {
            return Err(CatBondError::Training(format!("non-finite validation loss at epoch {epoch}")));
        }
        report.validation_mse.push(monitor);
        if options.record_train_loss {
            let pred = network::full_batch_output(&model, x_train.clone());
            report.train_objective.push(mse(&pred, &y_train) + config.l2_coeff * network::weight_norm_sq(&model));
        }
        report.epochs_run = epoch;
        if monitor < report.best_validation_mse {
            report.best_validation_mse = monitor;
            report.best_epoch = epoch;
            best.clone_from(scored);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                report.stopped_early = true;
                break;
            }
        }
        log::debug!("epoch {epoch}: monitor mse {monitor:.3e}");
    }
    Ok((best, report))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoldMetrics {
    pub mse: f64,
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigScore {
    pub config: MlpConfig,
    pub folds: Vec<FoldMetrics>,
    /// `None` when any fold failed; the config is then out of the running.
    pub mean_mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    pub best_index: usize,
    pub best_config: MlpConfig,
    pub scores: Vec<ConfigScore>,
}

/// k-fold cross-validation over contiguous folds of `dataset` (shuffle it
/// first). Picks the config with the lowest mean fold MSE.
pub fn cross_validate(dataset: &[TrainingSample], grid: &[MlpConfig], k_folds: usize) -> Result<CvResult> {
    if k_folds < 2 {
        return Err(CatBondError::invalid("k_folds", "need at least 2 folds"));
    }
    if dataset.len() < k_folds {
        return Err(CatBondError::Dataset(format!("{} samples cannot fill {k_folds} folds", dataset.len())));
    }
    if grid.is_empty() {
        return Err(CatBondError::invalid("config_grid", "empty grid"));
    }
    let n = dataset.len();
    let bounds: Vec<usize> = (0..=k_folds).map(|i| i * n / k_folds).collect();
    let mut scores = Vec::with_capacity(grid.len());
    for config in grid {
        let mut folds = Vec::with_capacity(k_folds);
        let mut error = None;
        for f in 0..k_folds {
            let (lo, hi) = (bounds[f], bounds[f + 1]);
            let held_out = &dataset[lo..hi];
            let rest: Vec<TrainingSample> = dataset[..lo].iter().chain(&dataset[hi..]).copied().collect();
            match train(&rest, config).and_then(|m| evaluate(&m, held_out)) {
                Ok(m) => folds.push(FoldMetrics { mse: m.mse, mae: m.mae }),
                Err(e) => {
                    log::warn!("config {config:?} failed on fold {f}: {e}");
                    error = Some(format!("fold {f}: {e}"));
                    break;
                }
            }
        }
        let mean_mse = error.is_none().then(|| folds.iter().map(|f| f.mse).sum::<f64>() / k_folds as f64);
        scores.push(ConfigScore { config: config.clone(), folds, mean_mse, error });
    }
    let best_index = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.mean_mse.filter(|m| m.is_finite()).map(|m| (i, m)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| CatBondError::Training("every configuration failed".into()))?;
    Ok(CvResult { best_index, best_config: scores[best_index].config.clone(), scores })
}

/// Objective and its gradient at the current weights, in inference mode
/// (running batch-norm statistics, no dropout), on raw features.
/// Gradients come back one vector per parameter tensor, in the order of
/// [`parameter_count`]/[`parameter`].
pub fn objective_gradient(model: &MlpModel, features: &Array2<f64>, labels: &Array1<f64>) -> Result<(f64, Vec<Vec<f64>>)> {
    if features.nrows() != labels.len() {
        return Err(CatBondError::DimensionMismatch { expected: features.nrows(), got: labels.len() });
    }
    let x = model.scaler.transform(features.view())?;
    let trace = forward_trace(model, x, PassMode::Inference);
    let loss = network::loss(model, &trace, labels);
    let grads = backward(model, &trace, labels);
    Ok((loss, gradient_slices(&grads).into_iter().map(|g| g.to_vec()).collect()))
}

/// Objective alone, in inference mode.
pub fn objective(model: &MlpModel, features: &Array2<f64>, labels: &Array1<f64>) -> Result<f64> {
    if features.nrows() != labels.len() {
        return Err(CatBondError::DimensionMismatch { expected: features.nrows(), got: labels.len() });
    }
    let x = model.scaler.transform(features.view())?;
    Ok(network::loss(model, &forward_trace(model, x, PassMode::Inference), labels))
}

/// Sizes of the trainable parameter tensors: per hidden layer weights,
/// bias, then batch-norm scale and shift when present; output weights and
/// bias last.
pub fn parameter_count(model: &mut MlpModel) -> Vec<usize> {
    parameters_mut(model).iter().map(|p| p.len()).collect()
}

pub fn parameter(model: &mut MlpModel, tensor: usize, index: usize) -> &mut f64 {
    &mut parameters_mut(model).swap_remove(tensor)[index]
}
