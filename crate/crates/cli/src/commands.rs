use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use catbond::estimators::estimate_trigger_probability;
use catbond::experiments::{
    convergence_trace, generate_dataset, method_comparison, panel_presets, read_dataset_csv, sensitivity_sweep,
    worst_violation, write_comparison_csv, write_dataset_csv, write_sweep_csv, write_trace_csv, ComparisonConfig,
    DatasetConfig, Direction, TABLE_ROWS,
};
use catbond::pricer::price_recovery_cat;
use catbond::surrogate::{
    evaluate, load_model, predict_batch, save_model, train_test_split, train_with_options, TrainOptions, N_FEATURES,
};
use catbond::{
    Activation, BondSpec, EstimatorResult, LossModel, MethodChoice, MlpConfig, MlpModel, SeverityDistribution,
    SeverityKind, TriggerSpec, VasicekParams, DAYS_PER_YEAR,
};
use ndarray::Array2;

use crate::params::{manifest_path, usage, Params};
use crate::Failure;

fn severity(p: &Params) -> Result<SeverityDistribution, Failure> {
    let kind: SeverityKind = p.parse("severity")?;
    Ok(match kind {
        SeverityKind::Gamma => SeverityDistribution::gamma(p.parse("shape")?, p.parse("scale")?)?,
        SeverityKind::Lognormal => SeverityDistribution::lognormal(p.parse("log-mean")?, p.parse("log-sd")?)?,
    })
}

fn vasicek(p: &Params) -> Result<VasicekParams, Failure> {
    Ok(VasicekParams::new(p.parse("kappa")?, p.parse("mu")?, p.parse("sigma")?)?)
}

fn create(path: &Path) -> Result<File, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(File::create(path).with_context(|| format!("creating {}", path.display()))?)
}

fn write_rows<W: Write>(writer: W, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(header).map_err(anyhow::Error::from)?;
    for r in rows {
        w.write_record(r).map_err(anyhow::Error::from)?;
    }
    w.flush().map_err(anyhow::Error::from)?;
    Ok(())
}

fn real(v: f64) -> String {
    format!("{v:.10e}")
}

fn estimate_fields(r: &EstimatorResult) -> Vec<(&'static str, String)> {
    let tilt = |f: fn(&catbond::TiltParams) -> f64| r.tilt.as_ref().map(|t| real(f(t))).unwrap_or_default();
    vec![
        ("method", r.method.to_string()),
        ("estimate", real(r.estimate)),
        ("std_error", real(r.std_error)),
        ("sample_variance", real(r.sample_variance)),
        ("n", r.n_samples.to_string()),
        ("degenerate", r.degenerate.to_string()),
        ("poisson_tilt", tilt(|t| t.poisson_tilt)),
        ("severity_tilt", tilt(|t| t.severity_tilt)),
    ]
}

pub fn trigger(mut p: Params) -> Result<(), Failure> {
    let model = LossModel::new(p.parse("lambda")?, severity(&p)?)?;
    let spec = TriggerSpec::new(p.parse("threshold")?, p.parse("horizon")?)?;
    let n: u64 = p.parse("n")?;
    let method: MethodChoice = p.parse("method")?;
    let seed = p.seed()?;
    let result = estimate_trigger_probability(&model, &spec, n, seed, method)?;
    let fields = estimate_fields(&result);
    for (k, v) in &fields {
        if !v.is_empty() {
            println!("{k:<16}{v}");
        }
    }
    if let Some(out) = p.get("out").map(PathBuf::from) {
        let header: Vec<&str> = fields.iter().map(|f| f.0).collect();
        write_rows(create(&out)?, &header, &[fields.into_iter().map(|f| f.1).collect()])?;
        p.write_manifest(&manifest_path(&out), std::slice::from_ref(&out))?;
    }
    Ok(())
}

pub fn price(mut p: Params) -> Result<(), Failure> {
    let model = LossModel::new(p.parse("lambda")?, severity(&p)?)?;
    let rates = vasicek(&p)?;
    let days: f64 = p.parse("maturity-days")?;
    let bond = BondSpec::equally_spaced(
        p.parse("face")?,
        days / DAYS_PER_YEAR,
        p.parse("n-coupons")?,
        p.parse("coupon-rate")?,
        p.parse("threshold")?,
    )?
    .with_recovery(p.parse("recovery")?)?;
    let n: u64 = p.parse("n")?;
    let seed = p.seed()?;
    let result = price_recovery_cat(&rates, p.parse("r0")?, &model, &bond, n, seed)?;

    println!("price {:.10}", result.price);
    let header = ["payment", "time_years", "discount_factor", "trigger_probability", "std_error", "method"];
    let n_legs = result.per_date_trigger_probs.len();
    let rows: Vec<Vec<String>> = result
        .per_date_trigger_probs
        .iter()
        .zip(&result.discount_factors)
        .zip(&result.estimator_details)
        .enumerate()
        .map(|(i, ((d, (_, df)), e))| {
            let payment = if i + 1 == n_legs { "principal" } else { "coupon" };
            vec![payment.to_string(), real(d.time), real(*df), real(d.probability), real(e.std_error), d.method.to_string()]
        })
        .collect();
    println!("{:<10} {:>16} {:>16} {:>20} {:>16}  method", header[0], header[1], header[2], header[3], header[4]);
    for r in &rows {
        println!("{:<10} {:>16} {:>16} {:>20} {:>16}  {}", r[0], r[1], r[2], r[3], r[4], r[5]);
    }
    if let Some(out) = p.get("out").map(PathBuf::from) {
        write_rows(create(&out)?, &header, &rows)?;
        p.write_manifest(&manifest_path(&out), std::slice::from_ref(&out))?;
    }
    Ok(())
}

pub fn gen_dataset(mut p: Params) -> Result<(), Failure> {
    let out = p.path("out")?;
    let severity = severity(&p)?;
    let seed = p.seed()?;
    let config = DatasetConfig {
        severity,
        rates: vasicek(&p)?,
        mc_budget: p.parse("mc-budget")?,
        ..DatasetConfig::reference(severity.kind(), p.parse("n-samples")?, seed)
    };
    let data = generate_dataset(&config)?;
    write_dataset_csv(create(&out)?, &data)?;
    p.write_manifest(&manifest_path(&out), std::slice::from_ref(&out))?;
    let skipped = config.n_samples - data.len();
    println!("wrote {} rows to {} ({skipped} skipped)", data.len(), out.display());
    Ok(())
}

fn hidden_dims(raw: &str) -> Result<Vec<usize>, Failure> {
    raw.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| usage(format!("invalid --hidden {raw:?}: {e}"))))
        .collect()
}

pub fn train(mut p: Params) -> Result<(), Failure> {
    let data_path = p.input("data")?;
    let out = p.path("out")?;
    let seed = p.seed()?;
    let config = MlpConfig {
        hidden_dims: hidden_dims(p.required("hidden")?)?,
        activation: p.parse::<Activation>("activation")?,
        l2_coeff: p.parse("l2")?,
        dropout_rate: p.parse("dropout")?,
        use_batch_norm: p.parse("batch-norm")?,
        learning_rate: p.parse("lr")?,
        batch_size: p.parse("batch-size")?,
        epochs: p.parse("epochs")?,
        patience: p.parse("patience")?,
        seed,
    };
    config.validate()?;
    let file = File::open(&data_path).with_context(|| format!("opening {}", data_path.display()))?;
    let data = read_dataset_csv(file)?;
    let (train_set, test_set) = train_test_split(&data, p.parse("test-fraction")?, seed)?;
    let (model, report) = train_with_options(&train_set, &config, &TrainOptions::default())?;
    save_model(&model, &out)?;
    p.write_manifest(&manifest_path(&out), std::slice::from_ref(&out))?;

    println!("epochs_run          {}", report.epochs_run);
    println!("best_epoch          {}", report.best_epoch);
    println!("validation_mse      {}", real(report.best_validation_mse));
    println!("train_rows          {}", report.n_train);
    println!("validation_rows     {}", report.n_validation);
    if !test_set.is_empty() {
        let m = evaluate(&model, &test_set)?;
        println!("test_rows           {}", test_set.len());
        println!("test_mse            {}", real(m.mse));
        println!("test_mae            {}", real(m.mae));
        println!("test_max_abs_error  {}", real(m.max_abs));
    }
    Ok(())
}

struct PredictRows {
    features: Vec<[f64; N_FEATURES]>,
    prices: Option<Vec<f64>>,
}

fn comparison_grid() -> PredictRows {
    PredictRows { features: TABLE_ROWS.iter().map(|&(n, t)| [0.03, 35.0, 9e9, t, n as f64]).collect(), prices: None }
}

fn read_predict_input(path: &Path) -> Result<PredictRows, Failure> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers().map_err(anyhow::Error::from)?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| column(name).ok_or_else(|| usage(format!("{}: no {name} column", path.display())));
    let (r0, lambda, threshold, n) = (need("r0")?, need("lambda")?, need("threshold")?, need("n_coupons")?);
    let maturity = match (column("maturity_years"), column("maturity_days")) {
        (Some(i), _) => (i, 1.0),
        (None, Some(i)) => (i, 1.0 / DAYS_PER_YEAR),
        _ => return Err(usage(format!("{}: no maturity_years or maturity_days column", path.display()))),
    };
    let price = column("price");
    let mut rows = PredictRows { features: Vec::new(), prices: price.map(|_| Vec::new()) };
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(anyhow::Error::from)?;
        let field = |j: usize| -> Result<f64, Failure> {
            record[j].trim().parse().map_err(|e| usage(format!("{} row {}: {e}", path.display(), i + 2)))
        };
        rows.features.push([field(r0)?, field(lambda)?, field(threshold)?, field(maturity.0)? * maturity.1, field(n)?]);
        if let (Some(j), Some(prices)) = (price, rows.prices.as_mut()) {
            prices.push(field(j)?);
        }
    }
    Ok(rows)
}

pub fn predict(p: Params) -> Result<(), Failure> {
    let model_path = p.input("model")?;
    let model = load_model(&model_path)?;
    let rows = match p.get("input") {
        Some(_) => read_predict_input(&p.input("input")?)?,
        None => comparison_grid(),
    };
    let mut x = Array2::zeros((rows.features.len(), N_FEATURES));
    for (mut row, f) in x.rows_mut().into_iter().zip(&rows.features) {
        row.assign(&ndarray::ArrayView1::from(f));
    }
    let pred = predict_batch(&model, x.view())?;

    let mut header = vec!["r0", "lambda", "threshold", "maturity_years", "n_coupons", "prediction"];
    if rows.prices.is_some() {
        header.extend(["price", "error"]);
    }
    let table: Vec<Vec<String>> = rows
        .features
        .iter()
        .zip(pred.iter())
        .enumerate()
        .map(|(i, (f, &y))| {
            let mut r: Vec<String> = f.iter().map(|&v| real(v)).collect();
            r[4] = format!("{}", f[4]);
            r.push(real(y));
            if let Some(prices) = &rows.prices {
                r.push(real(prices[i]));
                r.push(real(y - prices[i]));
            }
            r
        })
        .collect();
    match p.get("out").map(PathBuf::from) {
        Some(out) => {
            write_rows(create(&out)?, &header, &table)?;
            p.write_manifest(&manifest_path(&out), std::slice::from_ref(&out))?;
        }
        None => write_rows(io::stdout().lock(), &header, &table)?,
    }
    Ok(())
}

fn optional_model(p: &Params, name: &str) -> Result<Option<MlpModel>, Failure> {
    match p.get(name) {
        Some(_) => Ok(Some(load_model(p.input(name)?)?)),
        None => Ok(None),
    }
}

fn fig1(p: &mut Params, dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let n_max: u64 = p.parse("n-max")?;
    let seed = p.seed()?;
    let spec = TriggerSpec::new(9e9, 1.0)?;
    let mut outputs = Vec::new();
    for kind in [SeverityKind::Gamma, SeverityKind::Lognormal] {
        let model = LossModel::new(35.0, kind.reference())?;
        let rows = convergence_trace(&model, &spec, n_max, seed)?;
        let path = dir.join(format!("fig1_{kind}.csv"));
        write_trace_csv(create(&path)?, &rows)?;
        outputs.push(path);
    }
    Ok(outputs)
}

fn table4(p: &mut Params, dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let seed = p.seed()?;
    let config = ComparisonConfig { n_paths: p.parse("n")?, repetitions: p.parse("repetitions")?, ..ComparisonConfig::reference(seed) };
    let gamma = optional_model(p, "model-gamma")?;
    let lognormal = optional_model(p, "model-lognormal")?;
    let rows = method_comparison(&config, &[(SeverityKind::Gamma, gamma.as_ref()), (SeverityKind::Lognormal, lognormal.as_ref())])?;
    let path = dir.join("table4.csv");
    write_comparison_csv(create(&path)?, &rows)?;
    Ok(vec![path])
}

fn sensitivity(p: &Params, dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let model = load_model(p.input("model")?)?;
    let panels = panel_presets();
    let sweeps = panels.iter().map(|panel| sensitivity_sweep(&model, &panel.spec)).collect::<Result<Vec<_>, _>>()?;
    let listing: Vec<_> = panels.iter().zip(&sweeps).map(|(panel, rows)| (panel.name.as_str(), panel.spec.varying, rows.as_slice())).collect();
    let path = dir.join("sensitivity.csv");
    write_sweep_csv(create(&path)?, &listing)?;

    let summary: Vec<Vec<String>> = panels
        .iter()
        .zip(&sweeps)
        .map(|(panel, rows)| {
            let values: Vec<f64> = rows.iter().map(|r| r.prediction).collect();
            let direction = match panel.expected {
                Direction::NonDecreasing => "non_decreasing",
                Direction::NonIncreasing => "non_increasing",
            };
            vec![panel.name.clone(), direction.to_string(), real(worst_violation(&values, panel.expected))]
        })
        .collect();
    let summary_path = dir.join("sensitivity_summary.csv");
    write_rows(create(&summary_path)?, &["panel", "expected", "worst_violation"], &summary)?;
    Ok(vec![path, summary_path])
}

pub fn experiment(mut p: Params) -> Result<(), Failure> {
    let target = p.required("target")?.to_string();
    let dir = p.path("out-dir")?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let outputs = match target.as_str() {
        "fig1" => fig1(&mut p, &dir)?,
        "table4" => table4(&mut p, &dir)?,
        "sensitivity" => sensitivity(&p, &dir)?,
        other => return Err(usage(format!("unknown --target {other:?}; expected fig1, table4 or sensitivity"))),
    };
    p.write_manifest(&dir.join(format!("{target}.manifest")), &outputs)?;
    for o in &outputs {
        println!("wrote {}", o.display());
    }
    Ok(())
}
