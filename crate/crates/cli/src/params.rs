//! Flag tables, `key=value` config files and run manifests.
//!
//! Every option can be given on the command line or as a config-file key of
//! the same name; flags win over the file, the file over built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::hash::BuildHasher;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{Arg, ArgMatches};

use crate::Failure;

pub struct Param {
    pub name: &'static str,
    pub value_name: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn p(name: &'static str, value_name: &'static str, default: Option<&'static str>, help: &'static str) -> Param {
    Param { name, value_name, default, help }
}

pub const CONFIG: Param = p("config", "FILE", None, "key=value file supplying any option below; flags take precedence");

pub const SEED: Param = p("seed", "U64", None, "master seed; drawn at random and recorded when omitted");

pub const SEVERITY: &[Param] = &[
    p("severity", "KIND", Some("gamma"), "loss-size law: gamma or lognormal"),
    p("shape", "K", Some("1"), "Gamma shape k (dimensionless)"),
    p("scale", "BETA", Some("1.635e8"), "Gamma scale beta (currency units)"),
    p("log-mean", "MU", Some("18.4"), "Lognormal mean of ln(loss) (ln currency units)"),
    p("log-sd", "S", Some("1"), "Lognormal standard deviation of ln(loss)"),
];

pub const EVENT: &[Param] = &[
    p("lambda", "RATE", Some("35"), "loss arrival intensity (events per year)"),
    p("threshold", "D", Some("9e9"), "trigger threshold on aggregate loss (currency units)"),
];

pub const R0: &[Param] = &[p("r0", "RATE", Some("0.03"), "initial short rate (per year)")];

pub const VASICEK: &[Param] = &[
    p("kappa", "A", Some("0.2"), "Vasicek mean-reversion speed (per year)"),
    p("mu", "RATE", Some("0.03"), "Vasicek long-run mean rate (per year)"),
    p("sigma", "VOL", Some("0.02"), "Vasicek rate volatility (per sqrt(year))"),
];

pub const TRIGGER: &[Param] = &[
    p("horizon", "YEARS", Some("1"), "time horizon of the trigger event (years)"),
    p("n", "PATHS", Some("100000"), "simulated paths"),
    p("method", "METHOD", Some("auto"), "estimator: mc, is, or auto (importance sampling while E[L] < D)"),
    SEED,
    p("out", "CSV", None, "also write the result as a one-row CSV"),
];

pub const BOND: &[Param] = &[
    p("face", "F", Some("1"), "face value (currency units)"),
    p("maturity-days", "DAYS", Some("360"), "maturity (days, 360 per year)"),
    p("n-coupons", "N", Some("0"), "number of equally spaced coupons, the last paid at maturity"),
    p("coupon-rate", "FRAC", Some("0.05"), "each coupon as a fraction of face"),
    p("recovery", "FRAC", Some("0"), "expected recovery of principal on trigger (fraction of face)"),
    p("n", "PATHS", Some("100000"), "simulated paths per payment date"),
    SEED,
    p("out", "CSV", None, "also write the per-date breakdown as CSV"),
];

pub const DATASET: &[Param] = &[
    p("n-samples", "ROWS", Some("50000"), "bonds to draw and price"),
    p("mc-budget", "PATHS", Some("20000"), "simulated paths per payment date for each label"),
    SEED,
    p("out", "CSV", None, "dataset file to write (required)"),
];

pub const TRAIN: &[Param] = &[
    p("data", "CSV", None, "training dataset (required)"),
    p("out", "FILE", None, "model file to write (required)"),
    p("hidden", "LIST", Some("256,128,64,32"), "hidden layer widths, comma separated"),
    p("activation", "NAME", Some("relu"), "hidden activation: relu or tanh"),
    p("l2", "COEFF", Some("1e-4"), "L2 penalty on weights"),
    p("dropout", "RATE", Some("0.1"), "dropout rate in [0, 1)"),
    p("batch-norm", "BOOL", Some("true"), "batch normalization after each hidden linear map"),
    p("lr", "RATE", Some("1e-5"), "Adam learning rate"),
    p("batch-size", "ROWS", Some("256"), "mini-batch size"),
    p("epochs", "COUNT", Some("1000"), "maximum epochs"),
    p("patience", "EPOCHS", Some("300"), "early-stopping patience on the validation split"),
    p("test-fraction", "FRAC", Some("0.2"), "share of rows held out for the reported test metrics"),
    SEED,
];

pub const PREDICT: &[Param] = &[
    p("model", "FILE", None, "trained model file (required)"),
    p(
        "input",
        "CSV",
        None,
        "rows with r0, lambda, threshold, n_coupons and maturity_days or maturity_years; \
         defaults to the five-bond comparison grid",
    ),
    p("out", "CSV", None, "predictions file; standard output when omitted"),
];

pub const EXPERIMENT: &[Param] = &[
    p(
        "target",
        "NAME",
        None,
        "fig1 (estimator convergence), table4 (method comparison; its time columns are wall-clock) \
         or sensitivity (required)",
    ),
    p("out-dir", "DIR", Some("."), "directory for the CSV files"),
    p("n-max", "PATHS", Some("100000"), "fig1: iterations of each running mean"),
    p("n", "PATHS", Some("100000"), "table4: simulated paths per payment date"),
    p("repetitions", "COUNT", Some("1000"), "table4: prices per cell; times are totals over all of them"),
    p("model-gamma", "FILE", None, "table4: Gamma surrogate for the NN columns"),
    p("model-lognormal", "FILE", None, "table4: Lognormal surrogate for the NN columns"),
    p("model", "FILE", None, "sensitivity: surrogate to sweep (required for that target)"),
    SEED,
];

pub fn arg(param: &Param) -> Arg {
    let help = match param.default {
        Some(d) => format!("{} [default: {d}]", param.help),
        None => param.help.to_string(),
    };
    Arg::new(param.name).long(param.name).value_name(param.value_name).allow_negative_numbers(true).help(help)
}

/// Resolved option values for one invocation.
pub struct Params {
    pub subcommand: &'static str,
    values: BTreeMap<String, String>,
}

pub fn usage(msg: impl Display) -> Failure {
    Failure::Usage(msg.to_string())
}

fn read_config(path: &Path, subcommand: &str, known: &[&Param]) -> Result<BTreeMap<String, String>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "subcommand" if value != subcommand => {
                return Err(usage(format!("{}: written for `{value}`, not `{subcommand}`", path.display())));
            }
            "subcommand" | "version" | "output" => {}
            _ if key != CONFIG.name && known.iter().any(|p| p.name == key) => {
                out.insert(key.to_string(), value.to_string());
            }
            _ => return Err(usage(format!("{}:{}: unknown key {key:?}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

impl Params {
    pub fn resolve(subcommand: &'static str, matches: &ArgMatches, table: &[&Param]) -> Result<Self, Failure> {
        let mut values = match matches.get_one::<String>(CONFIG.name) {
            Some(path) => read_config(Path::new(path), subcommand, table)?,
            None => BTreeMap::new(),
        };
        for param in table {
            if param.name == CONFIG.name {
                continue;
            }
            if matches.value_source(param.name) == Some(ValueSource::CommandLine) {
                let v = matches.get_one::<String>(param.name).expect("flag value present");
                values.insert(param.name.to_string(), v.clone());
            } else if let Some(d) = param.default {
                values.entry(param.name.to_string()).or_insert_with(|| d.to_string());
            }
        }
        Ok(Self { subcommand, values })
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }

    pub fn required(&self, name: &str) -> Result<&str, Failure> {
        self.get(name).ok_or_else(|| usage(format!("missing --{name}")))
    }

    pub fn parse<T: FromStr>(&self, name: &str) -> Result<T, Failure>
    where
        T::Err: Display,
    {
        let raw = self.required(name)?;
        raw.parse().map_err(|e| usage(format!("invalid --{name} {raw:?}: {e}")))
    }

    pub fn path(&self, name: &str) -> Result<PathBuf, Failure> {
        self.required(name).map(PathBuf::from)
    }

    /// An input file that must exist.
    pub fn input(&self, name: &str) -> Result<PathBuf, Failure> {
        let path = self.path(name)?;
        if !path.is_file() {
            return Err(usage(format!("--{name}: no such file {}", path.display())));
        }
        Ok(path)
    }

    /// The master seed; a random one is drawn and recorded when none was given.
    pub fn seed(&mut self) -> Result<u64, Failure> {
        if self.get(SEED.name).is_none() {
            let drawn = std::collections::hash_map::RandomState::new().hash_one(std::time::SystemTime::now());
            log::warn!("no --seed given; using {drawn}");
            self.values.insert(SEED.name.to_string(), drawn.to_string());
        }
        self.parse(SEED.name)
    }

    /// Manifest text: readable back as a config file for the same subcommand.
    pub fn manifest(&self, outputs: &[PathBuf]) -> String {
        let mut s = String::from("# catbond run manifest\n");
        s.push_str(&format!("subcommand={}\n", self.subcommand));
        s.push_str(&format!("version={}\n", env!("CARGO_PKG_VERSION")));
        for (k, v) in &self.values {
            s.push_str(&format!("{k}={v}\n"));
        }
        for o in outputs {
            s.push_str(&format!("output={}\n", o.display()));
        }
        s
    }

    pub fn write_manifest(&self, path: &Path, outputs: &[PathBuf]) -> Result<(), Failure> {
        fs::write(path, self.manifest(outputs))
            .map_err(|e| Failure::Runtime(anyhow::anyhow!("cannot write manifest {}: {e}", path.display())))
    }
}

/// `<file>.manifest` next to a single-file artifact.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}
