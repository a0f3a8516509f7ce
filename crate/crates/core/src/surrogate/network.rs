//! Layers, forward passes and backpropagation.

use super::{Activation, MlpConfig, MlpModel, BN_EPS};
use crate::error::{CatBondError, Result};
use crate::rng::SimRng;
use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Affine map `x W + b` with `W` stored `(in, out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { weights: Array2::zeros((in_dim, out_dim)), bias: Array1::zeros(out_dim) }
    }

    fn init(in_dim: usize, out_dim: usize, std: f64, rng: &mut SimRng) -> Self {
        let normal = Normal::new(0.0, std).expect("positive std");
        let weights = Array2::from_shape_simple_fn((in_dim, out_dim), || normal.sample(rng));
        Self { weights, bias: Array1::zeros(out_dim) }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn validate(&self, in_dim: usize) -> Result<()> {
        if self.in_dim() != in_dim {
            return Err(CatBondError::DimensionMismatch { expected: in_dim, got: self.in_dim() });
        }
        if self.bias.len() != self.out_dim() {
            return Err(CatBondError::DimensionMismatch { expected: self.out_dim(), got: self.bias.len() });
        }
        Ok(())
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
        }
    }

    fn running_inv_std(&self) -> Array1<f64> {
        self.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hidden {
    pub dense: Dense,
    pub norm: Option<BatchNorm>,
}

impl Hidden {
    pub(crate) fn validate(&self, in_dim: usize) -> Result<()> {
        self.dense.validate(in_dim)?;
        if let Some(bn) = &self.norm {
            let d = self.dense.out_dim();
            for v in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                if v.len() != d {
                    return Err(CatBondError::DimensionMismatch { expected: d, got: v.len() });
                }
            }
            if bn.running_var.iter().any(|v| !(*v >= 0.0)) {
                return Err(CatBondError::ModelFormat("negative running variance".into()));
            }
        }
        Ok(())
    }
}

/// Fresh network: He-normal weights for ReLU, Glorot-normal for tanh, zero
/// biases. The output unit starts at the constant `output_bias`.
pub(crate) fn init_layers(config: &MlpConfig, in_dim: usize, output_bias: f64, rng: &mut SimRng) -> (Vec<Hidden>, Dense) {
    let mut hidden = Vec::with_capacity(config.hidden_dims.len());
    let mut fan_in = in_dim;
    for &width in &config.hidden_dims {
        let std = match config.activation {
            Activation::Relu => (2.0 / fan_in as f64).sqrt(),
            Activation::Tanh => (2.0 / (fan_in + width) as f64).sqrt(),
        };
        hidden.push(Hidden {
            dense: Dense::init(fan_in, width, std, rng),
            norm: config.use_batch_norm.then(|| BatchNorm::new(width)),
        });
        fan_in = width;
    }
    let mut output = Dense::zeros(fan_in, 1);
    output.bias[0] = output_bias;
    (hidden, output)
}

fn activate(kind: Activation, z: &mut Array2<f64>) {
    match kind {
        Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
        Activation::Tanh => z.mapv_inplace(f64::tanh),
    }
}

/// `(z - mean) * inv_std`, then `* gamma + beta`.
fn normalize(z: &Array2<f64>, mean: &Array1<f64>, inv_std: &Array1<f64>) -> Array2<f64> {
    (z - mean) * inv_std
}

fn eval_hidden(h: &Hidden, kind: Activation, x: &Array2<f64>) -> Array2<f64> {
    let z = h.dense.apply(x);
    let mut a = match &h.norm {
        Some(bn) => normalize(&z, &bn.running_mean, &bn.running_inv_std()) * &bn.gamma + &bn.beta,
        None => z,
    };
    activate(kind, &mut a);
    a
}

/// Output with every batch-norm layer normalized by statistics of the
/// whole of `x` and dropout off: the training-mode network as a
/// deterministic function of the weights.
pub(crate) fn full_batch_output(model: &MlpModel, x: Array2<f64>) -> Array1<f64> {
    let mut a = x;
    for h in &model.hidden {
        let z = h.dense.apply(&a);
        let mut y = match &h.norm {
            Some(bn) => {
                let n = z.nrows() as f64;
                let mean = z.sum_axis(Axis(0)) / n;
                let centered = &z - &mean;
                let var = (&centered * &centered).sum_axis(Axis(0)) / n;
                let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                centered * &inv_std * &bn.gamma + &bn.beta
            }
            None => z,
        };
        activate(model.config.activation, &mut y);
        a = y;
    }
    model.output.apply(&a).column(0).to_owned()
}

/// Replaces every running mean/variance with the exact statistics of the
/// pre-normalization activations over `x` (scaled features), dropout off.
pub(crate) fn recalibrate(model: &mut MlpModel, x: Array2<f64>) {
    let kind = model.config.activation;
    let mut a = x;
    for h in &mut model.hidden {
        let z = h.dense.apply(&a);
        if let Some(bn) = &mut h.norm {
            let n = z.nrows() as f64;
            let mean = z.sum_axis(Axis(0)) / n;
            let centered = &z - &mean;
            bn.running_var = (&centered * &centered).sum_axis(Axis(0)) / n;
            bn.running_mean = mean;
        }
        a = eval_hidden(h, kind, &a);
    }
}

const INFER_CHUNK: usize = 4096;

/// Inference-mode output for already-scaled features.
pub(crate) fn infer(model: &MlpModel, x: Array2<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(x.nrows());
    for (chunk, mut dst) in x.axis_chunks_iter(Axis(0), INFER_CHUNK).zip(out.axis_chunks_iter_mut(Axis(0), INFER_CHUNK)) {
        let mut a = chunk.to_owned();
        for h in &model.hidden {
            a = eval_hidden(h, model.config.activation, &a);
        }
        dst.assign(&model.output.apply(&a).column(0));
    }
    out
}

/// What a training step needs from each hidden layer's forward pass.
pub(crate) struct LayerTrace {
    input: Array2<f64>,
    xhat: Option<Array2<f64>>,
    inv_std: Option<Array1<f64>>,
    /// Batch statistics, for the running averages.
    pub(crate) batch_mean: Option<Array1<f64>>,
    pub(crate) batch_var: Option<Array1<f64>>,
    activated: Array2<f64>,
    mask: Option<Array2<f64>>,
}

pub(crate) struct Trace {
    pub(crate) layers: Vec<LayerTrace>,
    last_input: Array2<f64>,
    pub(crate) output: Array1<f64>,
}

/// How a traced forward pass treats batch norm and dropout.
pub(crate) enum PassMode<'a> {
    /// Running statistics, no dropout.
    Inference,
    /// Batch statistics; dropout drawn from the given stream.
    Training(&'a mut SimRng),
}

pub(crate) fn forward_trace(model: &MlpModel, x: Array2<f64>, mut mode: PassMode<'_>) -> Trace {
    let kind = model.config.activation;
    let p = model.config.dropout_rate;
    let mut layers = Vec::with_capacity(model.hidden.len());
    let mut a = x;
    for h in &model.hidden {
        let z = h.dense.apply(&a);
        let (mut y, xhat, inv_std, batch_mean, batch_var) = match (&h.norm, &mode) {
            (None, _) => (z, None, None, None, None),
            (Some(bn), PassMode::Inference) => {
                let inv_std = bn.running_inv_std();
                let xhat = normalize(&z, &bn.running_mean, &inv_std);
                (&xhat * &bn.gamma + &bn.beta, Some(xhat), Some(inv_std), None, None)
            }
            (Some(bn), PassMode::Training(_)) => {
                let n = z.nrows() as f64;
                let mean = z.sum_axis(Axis(0)) / n;
                let centered = &z - &mean;
                let var = (&centered * &centered).sum_axis(Axis(0)) / n;
                let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                let xhat = centered * &inv_std;
                (&xhat * &bn.gamma + &bn.beta, Some(xhat), Some(inv_std), Some(mean), Some(var))
            }
        };
        activate(kind, &mut y);
        let activated = y;
        let (next, mask) = match &mut mode {
            PassMode::Training(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mask = Array2::from_shape_simple_fn(activated.raw_dim(), || if rng.random::<f64>() < p { 0.0 } else { keep });
                (&activated * &mask, Some(mask))
            }
            _ => (activated.clone(), None),
        };
        layers.push(LayerTrace { input: a, xhat, inv_std, batch_mean, batch_var, activated, mask });
        a = next;
    }
    let output = model.output.apply(&a).column(0).to_owned();
    Trace { layers, last_input: a, output }
}

/// Gradients laid out like the model's parameters.
#[derive(Clone, Debug)]
pub(crate) struct Gradients {
    pub(crate) hidden: Vec<(Dense, Option<(Array1<f64>, Array1<f64>)>)>,
    pub(crate) output: Dense,
}

/// `mean((y_hat - y)^2) + l2 * sum(W^2)` over the traced batch.
pub(crate) fn loss(model: &MlpModel, trace: &Trace, labels: &Array1<f64>) -> f64 {
    let n = labels.len() as f64;
    let mse = Zip::from(&trace.output).and(labels).fold(0.0, |acc, p, y| acc + (p - y) * (p - y)) / n;
    mse + model.config.l2_coeff * weight_norm_sq(model)
}

pub(crate) fn weight_norm_sq(model: &MlpModel) -> f64 {
    let sq = |w: &Array2<f64>| w.iter().map(|v| v * v).sum::<f64>();
    model.hidden.iter().map(|h| sq(&h.dense.weights)).sum::<f64>() + sq(&model.output.weights)
}

/// Backpropagates [`loss`] through a trace. Batch-norm layers traced with
/// batch statistics are differentiated through those statistics.
pub(crate) fn backward(model: &MlpModel, trace: &Trace, labels: &Array1<f64>) -> Gradients {
    let n = labels.len() as f64;
    let l2 = 2.0 * model.config.l2_coeff;
    let dout = (&trace.output - labels) * (2.0 / n);
    let mut delta = dout.insert_axis(Axis(1));
    let output = Dense {
        weights: standard(trace.last_input.t().dot(&delta) + &model.output.weights * l2),
        bias: delta.sum_axis(Axis(0)),
    };
    delta = delta.dot(&model.output.weights.t());

    let mut hidden = Vec::with_capacity(model.hidden.len());
    for (i, (h, t)) in model.hidden.iter().zip(&trace.layers).enumerate().rev() {
        if let Some(mask) = &t.mask {
            delta *= mask;
        }
        match model.config.activation {
            Activation::Relu => Zip::from(&mut delta).and(&t.activated).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(&mut delta).and(&t.activated).for_each(|d, &a| *d *= 1.0 - a * a),
        }
        let (dz, norm_grads) = match (&h.norm, &t.xhat, &t.inv_std) {
            (Some(bn), Some(xhat), Some(inv_std)) => {
                let dgamma = (&delta * xhat).sum_axis(Axis(0));
                let dbeta = delta.sum_axis(Axis(0));
                let dxhat = &delta * &bn.gamma;
                let dz = if t.batch_mean.is_some() {
                    let m = xhat.nrows() as f64;
                    let sum_dxhat = dxhat.sum_axis(Axis(0));
                    let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                    ((&dxhat * m - &sum_dxhat) - xhat * &sum_dxhat_xhat) * &(inv_std / m)
                } else {
                    dxhat * inv_std
                };
                (dz, Some((dgamma, dbeta)))
            }
            _ => (delta, None),
        };
        let grads = Dense { weights: standard(t.input.t().dot(&dz) + &h.dense.weights * l2), bias: dz.sum_axis(Axis(0)) };
        delta = if i > 0 { dz.dot(&h.dense.weights.t()) } else { Array2::zeros((0, 0)) };
        hidden.push((grads, norm_grads));
    }
    hidden.reverse();
    Gradients { hidden, output }
}

fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Mutable views of every trainable parameter, in a fixed order.
pub(crate) fn parameters_mut(model: &mut MlpModel) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    for h in &mut model.hidden {
        out.push(h.dense.weights.as_slice_mut().expect("standard layout"));
        out.push(h.dense.bias.as_slice_mut().expect("standard layout"));
        if let Some(bn) = &mut h.norm {
            out.push(bn.gamma.as_slice_mut().expect("standard layout"));
            out.push(bn.beta.as_slice_mut().expect("standard layout"));
        }
    }
    out.push(model.output.weights.as_slice_mut().expect("standard layout"));
    out.push(model.output.bias.as_slice_mut().expect("standard layout"));
    out
}

/// Gradient slices in the order of [`parameters_mut`].
pub(crate) fn gradient_slices(g: &Gradients) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = Vec::new();
    for (d, bn) in &g.hidden {
        out.push(d.weights.as_slice().expect("standard layout"));
        out.push(d.bias.as_slice().expect("standard layout"));
        if let Some((gamma, beta)) = bn {
            out.push(gamma.as_slice().expect("standard layout"));
            out.push(beta.as_slice().expect("standard layout"));
        }
    }
    out.push(g.output.weights.as_slice().expect("standard layout"));
    out.push(g.output.bias.as_slice().expect("standard layout"));
    out
}
