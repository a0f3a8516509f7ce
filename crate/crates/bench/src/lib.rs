//! Shared inputs for the benchmarks.

use catbond::surrogate::{train_with_options, TrainOptions, N_FEATURES};
use catbond::{LossModel, MlpConfig, MlpModel, SeverityKind, TrainingSample, TriggerSpec};
use ndarray::Array2;

pub const LAMBDA: f64 = 35.0;
pub const THRESHOLD: f64 = 9e9;

pub fn reference_loss(kind: SeverityKind) -> LossModel {
    LossModel::new(LAMBDA, kind.reference()).expect("reference parameters are valid")
}

pub fn one_year_trigger() -> TriggerSpec {
    TriggerSpec::new(THRESHOLD, 1.0).expect("reference trigger is valid")
}

/// Deterministic rows spread over the training ranges.
pub fn feature_grid(rows: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, N_FEATURES), |(i, j)| {
        let u = ((i * (2 * j + 3)) % rows) as f64 / rows as f64;
        match j {
            0 => 0.08 * u,
            1 => 30.0 + 10.0 * u,
            2 => 7e9 + 6e9 * u,
            3 => 0.25 + 1.75 * u,
            _ => [0.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0][i % 8],
        }
    })
}

pub fn synthetic_samples(rows: usize) -> Vec<TrainingSample> {
    let x = feature_grid(rows);
    x.rows()
        .into_iter()
        .map(|r| TrainingSample {
            r0: r[0],
            lambda: r[1],
            threshold: r[2],
            maturity_days: r[3] * 360.0,
            n_coupons: r[4] as u32,
            severity: SeverityKind::Gamma,
            price: 1.0 - 0.5 * r[0] + 0.05 * r[4] - 0.01 * (r[1] - 35.0),
        })
        .collect()
}

/// The reference architecture after one epoch on synthetic rows.
pub fn reference_network() -> MlpModel {
    let config = MlpConfig { epochs: 1, ..MlpConfig::reference() };
    train_with_options(&synthetic_samples(512), &config, &TrainOptions::default()).expect("training runs").0
}
