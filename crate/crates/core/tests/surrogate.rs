use catbond::experiments::{generate_dataset, DatasetConfig};
use catbond::rng::StreamSeed;
use catbond::surrogate::*;
use catbond::SeverityKind;
use ndarray::{Array1, Array2};
use rand::Rng;

fn small_config() -> MlpConfig {
    MlpConfig {
        hidden_dims: vec![16, 8],
        activation: Activation::Relu,
        l2_coeff: 0.0,
        dropout_rate: 0.0,
        use_batch_norm: false,
        learning_rate: 1e-2,
        batch_size: 32,
        epochs: 300,
        patience: 30,
        seed: 3,
    }
}

fn sample(x: f64, price: f64) -> TrainingSample {
    TrainingSample {
        r0: x,
        lambda: 35.0,
        threshold: 9e9,
        maturity_days: 360.0,
        n_coupons: 4,
        severity: SeverityKind::Gamma,
        price,
    }
}

fn gamma_samples(n: usize, seed: u64) -> Vec<TrainingSample> {
    generate_dataset(&DatasetConfig { mc_budget: 1000, ..DatasetConfig::reference(SeverityKind::Gamma, n, seed) }).unwrap()
}

fn random_inputs(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = StreamSeed::new(seed).rng();
    Array2::from_shape_fn((n, N_FEATURES), |(_, j)| {
        let u: f64 = rng.random();
        match j {
            0 => 0.08 * u,
            1 => 30.0 + 10.0 * u,
            2 => 7e9 + 6e9 * u,
            3 => 0.25 + 1.75 * u,
            _ => (12.0 * u).floor(),
        }
    })
}

/// A trained-looking model: random weights, non-trivial batch-norm state.
fn perturbed_model(dims: &[usize], batch_norm: bool, seed: u64) -> MlpModel {
    let config = MlpConfig {
        hidden_dims: dims.to_vec(),
        use_batch_norm: batch_norm,
        epochs: 1,
        seed,
        ..MlpConfig::reference()
    };
    let data = gamma_samples(64, seed);
    let (mut model, _) = train_with_options(&data, &config, &TrainOptions::default()).unwrap();
    let mut rng = StreamSeed::new(seed).child(99).rng();
    for h in &mut model.hidden {
        if let Some(bn) = &mut h.norm {
            bn.gamma.mapv_inplace(|_| 0.5 + rng.random::<f64>());
            bn.beta.mapv_inplace(|_| rng.random::<f64>() - 0.5);
            bn.running_mean.mapv_inplace(|_| rng.random::<f64>() - 0.5);
            bn.running_var.mapv_inplace(|_| 0.5 + rng.random::<f64>());
        }
    }
    model
}

#[test]
fn zero_network_outputs_zero() {
    let dims = [4usize, 3];
    let mut hidden = Vec::new();
    let mut fan_in = N_FEATURES;
    for &d in &dims {
        hidden.push(Hidden { dense: Dense::zeros(fan_in, d), norm: None });
        fan_in = d;
    }
    let model = MlpModel {
        config: MlpConfig { hidden_dims: dims.to_vec(), use_batch_norm: false, dropout_rate: 0.0, ..MlpConfig::reference() },
        scaler: FeatureScaler::identity(N_FEATURES),
        hidden,
        output: Dense::zeros(fan_in, 1),
    };
    model.validate().unwrap();
    for row in random_inputs(20, 1).rows() {
        assert_eq!(mlp_forward(&model, row.as_slice().unwrap()).unwrap(), 0.0);
    }
}

#[test]
fn relu_pass_through() {
    let mut first = Dense::zeros(N_FEATURES, 1);
    first.weights[[0, 0]] = 1.0;
    let mut output = Dense::zeros(1, 1);
    output.weights[[0, 0]] = 1.0;
    let model = MlpModel {
        config: MlpConfig { hidden_dims: vec![1], use_batch_norm: false, dropout_rate: 0.0, ..MlpConfig::reference() },
        scaler: FeatureScaler::identity(N_FEATURES),
        hidden: vec![Hidden { dense: first, norm: None }],
        output,
    };
    for x in [0.0, 0.013, 0.5, 7.25] {
        assert_eq!(mlp_forward(&model, &[x, 35.0, 9e9, 1.0, 4.0]).unwrap(), x);
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    let model = perturbed_model(&[4], false, 2);
    assert!(mlp_forward(&model, &[0.1, 2.0]).is_err());
    assert!(predict_batch(&model, Array2::zeros((3, 4)).view()).is_err());
}

#[test]
fn constant_labels_are_learned() {
    let mut rng = StreamSeed::new(5).rng();
    let data: Vec<_> = (0..400).map(|_| sample(rng.random::<f64>() * 0.08, 0.7321)).collect();
    let model = train(&data, &MlpConfig { learning_rate: 1e-3, ..small_config() }).unwrap();
    let pred = predict_batch(&model, feature_matrix(&data).view()).unwrap();
    assert!(pred.iter().all(|p| (p - 0.7321).abs() < 1e-3), "{:?}", pred.iter().take(5).collect::<Vec<_>>());
}

#[test]
fn linear_target_is_learned() {
    let mut rng = StreamSeed::new(6).rng();
    let make = |rng: &mut catbond::rng::SimRng| {
        let x: f64 = rng.random();
        sample(x, 2.0 * x)
    };
    let train_set: Vec<_> = (0..2000).map(|_| make(&mut rng)).collect();
    let test_set: Vec<_> = (0..500).map(|_| make(&mut rng)).collect();
    let config = MlpConfig { learning_rate: 3e-3, epochs: 400, ..small_config() };
    let model = train(&train_set, &config).unwrap();
    let m = evaluate(&model, &test_set).unwrap();
    assert!(m.mse < 1e-4, "{m:?}");
}

#[test]
fn gradient_matches_finite_differences() {
    for (dims, bn, act) in [
        (vec![8, 6], true, Activation::Relu),
        (vec![7], false, Activation::Tanh),
        (vec![12, 8, 5], true, Activation::Tanh),
    ] {
        let mut model = perturbed_model(&dims, bn, 11);
        model.config.activation = act;
        model.config.l2_coeff = 1e-3;
        let x = random_inputs(32, 4);
        let y: Array1<f64> = (0..32).map(|i| 0.5 + 0.01 * i as f64).collect();
        let (_, grads) = objective_gradient(&model, &x, &y).unwrap();
        let sizes = parameter_count(&mut model);
        let mut rng = StreamSeed::new(8).rng();
        for (t, &len) in sizes.iter().enumerate() {
            for _ in 0..20 {
                let i = rng.random_range(0..len);
                let h = 1e-5;
                let orig = *parameter(&mut model, t, i);
                *parameter(&mut model, t, i) = orig + h;
                let up = objective(&model, &x, &y).unwrap();
                *parameter(&mut model, t, i) = orig - h;
                let down = objective(&model, &x, &y).unwrap();
                *parameter(&mut model, t, i) = orig;
                let fd = (up - down) / (2.0 * h);
                let g = grads[t][i];
                // Central differences carry ~1e-11 absolute roundoff on an O(1) objective.
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-5, "dims {dims:?} tensor {t} index {i}: analytic {g} vs fd {fd}");
            }
        }
    }
}

#[test]
fn batch_prediction_matches_rows() {
    let model = perturbed_model(&[16, 8], true, 21);
    let x = random_inputs(1000, 9);
    let batch = predict_batch(&model, x.view()).unwrap();
    for (row, b) in x.rows().into_iter().zip(batch.iter()) {
        let single = mlp_forward(&model, row.as_slice().unwrap()).unwrap();
        assert!((single - b).abs() <= 1e-12);
    }
    let one = predict_batch(&model, x.slice(ndarray::s![0..1, ..])).unwrap();
    assert_eq!(one[0], mlp_forward(&model, x.row(0).as_slice().unwrap()).unwrap());
}

#[test]
fn model_file_round_trip_is_exact() {
    let model = perturbed_model(&[16, 8], true, 31);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);
    let x = random_inputs(1000, 10);
    let a = predict_batch(&model, x.view()).unwrap();
    let b = predict_batch(&loaded, x.view()).unwrap();
    assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert_eq!(write_model(&loaded), write_model(&model));
}

#[test]
fn damaged_model_files_are_rejected() {
    let text = write_model(&perturbed_model(&[6], true, 41));
    let cut = &text[..text.len() / 2];
    assert!(read_model(cut).is_err());
    assert!(read_model("").is_err());
    let wrong_version = text.replacen("catbond-mlp 1", "catbond-mlp 99", 1);
    assert!(matches!(read_model(&wrong_version), Err(catbond::CatBondError::ModelFormat(_))));
    let garbled = text.replacen("bias ", "bias x", 1);
    assert!(read_model(&garbled).is_err());
}

#[test]
fn scaling_is_a_pure_preprocessing_step() {
    let data = gamma_samples(300, 12);
    let config = MlpConfig { hidden_dims: vec![16, 8], epochs: 5, seed: 4, ..MlpConfig::reference() };
    let x = feature_matrix(&data);
    let y = label_vector(&data);
    let (raw, _) = train_arrays(x.clone(), y.clone(), &config, &TrainOptions::default()).unwrap();
    let prescaled = raw.scaler.transform(x.view()).unwrap();
    let identity = TrainOptions { scaler: Some(FeatureScaler::identity(N_FEATURES)), ..Default::default() };
    let (scaled, _) = train_arrays(prescaled, y, &config, &identity).unwrap();
    for (a, b) in raw.hidden.iter().zip(&scaled.hidden) {
        let diff = (&a.dense.weights - &b.dense.weights).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
        assert!(diff <= 1e-10, "{diff}");
    }
    let diff = (&raw.output.weights - &scaled.output.weights).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
    assert!(diff <= 1e-10);
}

#[test]
fn training_objective_does_not_creep_up() {
    let data = gamma_samples(2000, 13);
    let config = MlpConfig { epochs: 25, patience: 100, seed: 5, ..MlpConfig::reference() };
    let opts = TrainOptions { record_train_loss: true, ..Default::default() };
    let (_, report) = train_with_options(&data, &config, &opts).unwrap();
    assert_eq!(report.train_objective.len(), 25);
    for w in report.train_objective.windows(2) {
        assert!(w[1] <= w[0] + 1e-7, "{:?}", report.train_objective);
    }
}

#[test]
fn training_is_deterministic() {
    let data = gamma_samples(200, 14);
    let config = MlpConfig { hidden_dims: vec![16, 8], epochs: 4, seed: 6, ..MlpConfig::reference() };
    let a = train(&data, &config).unwrap();
    let b = train(&data, &config).unwrap();
    assert_eq!(write_model(&a), write_model(&b));
    let c = train(&data, &MlpConfig { seed: 7, ..config }).unwrap();
    assert_ne!(write_model(&a), write_model(&c));
}

#[test]
fn invalid_inputs_are_rejected() {
    let data = gamma_samples(50, 15);
    assert!(train(&[], &small_config()).is_err());
    assert!(train(&data, &MlpConfig { learning_rate: 0.0, ..small_config() }).is_err());
    assert!(train(&data, &MlpConfig { hidden_dims: vec![], ..small_config() }).is_err());
    assert!(train(&data, &MlpConfig { dropout_rate: 1.0, ..small_config() }).is_err());
    let mut bad = data.clone();
    bad[3].price = f64::NAN;
    assert!(train(&bad, &small_config()).is_err());
}

#[test]
fn diverging_training_reports_the_failure() {
    let mut rng = StreamSeed::new(16).rng();
    let data: Vec<_> = (0..200).map(|_| sample(rng.random::<f64>(), 1e300 * rng.random::<f64>())).collect();
    let err = train(&data, &MlpConfig { learning_rate: 1e3, ..small_config() }).unwrap_err();
    assert!(matches!(err, catbond::CatBondError::Training(_)), "{err}");
}

#[test]
fn cross_validation_picks_a_learning_config() {
    let data = gamma_samples(300, 17);
    let learning = MlpConfig { hidden_dims: vec![8], epochs: 20, ..small_config() };
    let frozen = MlpConfig { learning_rate: 0.0, ..learning.clone() };
    let single = cross_validate(&data, std::slice::from_ref(&learning), 3).unwrap();
    assert_eq!(single.best_config, learning);
    assert_eq!(single.scores[0].folds.len(), 3);
    let pair = cross_validate(&data, &[frozen.clone(), learning.clone()], 3).unwrap();
    assert_eq!(pair.best_index, 1);
    assert!(pair.scores[0].mean_mse.is_none() && pair.scores[0].error.is_some());
    assert!(cross_validate(&data, &[frozen], 3).is_err());
    assert!(cross_validate(&data, &[learning], 1).is_err());
}

#[test]
fn split_is_a_permutation() {
    let data = gamma_samples(101, 18);
    let (train_set, test_set) = train_test_split(&data, 0.2, 1).unwrap();
    assert_eq!(test_set.len(), 20);
    assert_eq!(train_set.len() + test_set.len(), data.len());
    let mut prices: Vec<u64> = train_set.iter().chain(&test_set).map(|s| s.price.to_bits()).collect();
    let mut orig: Vec<u64> = data.iter().map(|s| s.price.to_bits()).collect();
    prices.sort();
    orig.sort();
    assert_eq!(prices, orig);
}
