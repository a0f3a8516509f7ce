//! Plain-text model files.
//!
//! ```text
//! catbond-mlp <version>
//! features r0 lambda threshold maturity_years n_coupons
//! <config key value lines>
//! scaler_shift ... / scaler_scale ...
//! dense <in> <out>          (one line per input row, then `bias ...`)
//! batchnorm <dim>           (gamma, beta, running_mean, running_var)
//! ...
//! output <in> 1
//! end
//! ```
//! Reals are written with 17 significant digits so a round trip is exact.

use super::{Activation, BatchNorm, Dense, FeatureScaler, Hidden, MlpConfig, MlpModel, FEATURE_NAMES};
use crate::error::{CatBondError, Result};
use ndarray::{Array1, Array2};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "catbond-mlp";

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(real).collect::<Vec<_>>().join(" ")
}

fn write_dense(out: &mut String, tag: &str, d: &Dense) {
    let _ = writeln!(out, "{tag} {} {}", d.in_dim(), d.out_dim());
    for row in d.weights.rows() {
        let _ = writeln!(out, "{}", join(row.iter().copied()));
    }
    let _ = writeln!(out, "bias {}", join(d.bias.iter().copied()));
}

pub fn write_model(model: &MlpModel) -> String {
    let c = &model.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "features {}", FEATURE_NAMES.join(" "));
    let _ = writeln!(out, "activation {}", c.activation);
    let dims: Vec<String> = c.hidden_dims.iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "hidden_dims {}", dims.join(" "));
    let _ = writeln!(out, "batch_norm {}", c.use_batch_norm);
    let _ = writeln!(out, "l2_coeff {}", real(c.l2_coeff));
    let _ = writeln!(out, "dropout_rate {}", real(c.dropout_rate));
    let _ = writeln!(out, "learning_rate {}", real(c.learning_rate));
    let _ = writeln!(out, "batch_size {}", c.batch_size);
    let _ = writeln!(out, "epochs {}", c.epochs);
    let _ = writeln!(out, "patience {}", c.patience);
    let _ = writeln!(out, "seed {}", c.seed);
    let _ = writeln!(out, "scaler_shift {}", join(model.scaler.shift.iter().copied()));
    let _ = writeln!(out, "scaler_scale {}", join(model.scaler.scale.iter().copied()));
    for h in &model.hidden {
        write_dense(&mut out, "dense", &h.dense);
        if let Some(bn) = &h.norm {
            let _ = writeln!(out, "batchnorm {}", bn.gamma.len());
            let _ = writeln!(out, "gamma {}", join(bn.gamma.iter().copied()));
            let _ = writeln!(out, "beta {}", join(bn.beta.iter().copied()));
            let _ = writeln!(out, "running_mean {}", join(bn.running_mean.iter().copied()));
            let _ = writeln!(out, "running_var {}", join(bn.running_var.iter().copied()));
        }
    }
    write_dense(&mut out, "output", &model.output);
    out.push_str("end\n");
    out
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    read_model(&fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl std::fmt::Display) -> CatBondError {
        CatBondError::ModelFormat(format!("line {}: {msg}", self.line_no))
    }

    fn next_line(&mut self) -> Result<&'a str> {
        loop {
            let (i, line) = self.inner.next().ok_or_else(|| CatBondError::ModelFormat("unexpected end of file".into()))?;
            self.line_no = i + 1;
            if !line.trim().is_empty() {
                return Ok(line.trim());
            }
        }
    }

    /// Next line, which must start with `key`; returns the remaining fields.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut fields = line.split_ascii_whitespace();
        match fields.next() {
            Some(k) if k == key => Ok(fields.collect()),
            other => Err(self.err(format!("expected `{key}`, found `{}`", other.unwrap_or("")))),
        }
    }

    fn single<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let fields = self.keyed(key)?;
        match fields.as_slice() {
            [v] => v.parse().map_err(|_| self.err(format!("bad value for `{key}`: {v}"))),
            _ => Err(self.err(format!("`{key}` takes one value"))),
        }
    }

    fn reals(&self, fields: &[&str], expected: usize) -> Result<Vec<f64>> {
        if fields.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", fields.len())));
        }
        fields.iter().map(|f| f.parse::<f64>().map_err(|_| self.err(format!("bad number {f}")))).collect()
    }

    fn keyed_reals(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let fields = self.keyed(key)?;
        self.reals(&fields, expected)
    }

    fn dense(&mut self, tag: &str) -> Result<Dense> {
        let dims = self.keyed(tag)?;
        let [i, o] = dims.as_slice() else {
            return Err(self.err(format!("`{tag}` needs input and output sizes")));
        };
        let parse = |s: &str| s.parse::<usize>().map_err(|_| self.err(format!("bad size {s}")));
        let (in_dim, out_dim) = (parse(i)?, parse(o)?);
        let mut w = Vec::with_capacity(in_dim * out_dim);
        for _ in 0..in_dim {
            let line = self.next_line()?;
            let fields: Vec<&str> = line.split_ascii_whitespace().collect();
            w.extend(self.reals(&fields, out_dim)?);
        }
        let bias = self.keyed_reals("bias", out_dim)?;
        let weights = Array2::from_shape_vec((in_dim, out_dim), w).expect("row count times width");
        Ok(Dense { weights, bias: Array1::from(bias) })
    }
}

pub fn read_model(text: &str) -> Result<MlpModel> {
    let mut lines = Lines { inner: text.lines().enumerate(), line_no: 0 };
    let version: u32 = lines.single(MAGIC)?;
    if version != FORMAT_VERSION {
        return Err(CatBondError::ModelFormat(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let names = lines.keyed("features")?;
    if names != FEATURE_NAMES {
        return Err(lines.err(format!("unexpected feature list {names:?}")));
    }
    let activation: Activation = lines.keyed("activation")?.first().copied().unwrap_or("").parse()?;
    let dims = lines.keyed("hidden_dims")?;
    let hidden_dims = dims
        .iter()
        .map(|d| d.parse::<usize>().map_err(|_| lines.err(format!("bad width {d}"))))
        .collect::<Result<Vec<_>>>()?;
    let config = MlpConfig {
        hidden_dims,
        activation,
        use_batch_norm: lines.single("batch_norm")?,
        l2_coeff: lines.single("l2_coeff")?,
        dropout_rate: lines.single("dropout_rate")?,
        learning_rate: lines.single("learning_rate")?,
        batch_size: lines.single("batch_size")?,
        epochs: lines.single("epochs")?,
        patience: lines.single("patience")?,
        seed: lines.single("seed")?,
    };
    config.validate()?;
    let shift = lines.keyed_reals("scaler_shift", FEATURE_NAMES.len())?;
    let scale = lines.keyed_reals("scaler_scale", FEATURE_NAMES.len())?;
    let scaler = FeatureScaler { shift, scale };

    let mut hidden = Vec::with_capacity(config.hidden_dims.len());
    for &width in &config.hidden_dims {
        let dense = lines.dense("dense")?;
        if dense.out_dim() != width {
            return Err(lines.err(format!("layer width {} does not match hidden_dims entry {width}", dense.out_dim())));
        }
        let norm = if config.use_batch_norm {
            let dim: usize = lines.single("batchnorm")?;
            if dim != width {
                return Err(lines.err("batch-norm size does not match layer width"));
            }
            Some(BatchNorm {
                gamma: Array1::from(lines.keyed_reals("gamma", width)?),
                beta: Array1::from(lines.keyed_reals("beta", width)?),
                running_mean: Array1::from(lines.keyed_reals("running_mean", width)?),
                running_var: Array1::from(lines.keyed_reals("running_var", width)?),
            })
        } else {
            None
        };
        hidden.push(Hidden { dense, norm });
    }
    let output = lines.dense("output")?;
    lines.keyed("end")?;
    let model = MlpModel { config, scaler, hidden, output };
    model.validate()?;
    Ok(model)
}
