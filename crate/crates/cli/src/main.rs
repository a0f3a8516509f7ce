mod commands;
mod params;

use std::process::ExitCode;

use catbond::CatBondError;
use clap::{ArgMatches, Command};

use params::{Param, Params, CONFIG};

/// How a run failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config keys or missing inputs (exit 2).
    Usage(String),
    /// Numerical or I/O failure while running (exit 1).
    Runtime(anyhow::Error),
}

impl From<CatBondError> for Failure {
    fn from(e: CatBondError) -> Self {
        match e {
            CatBondError::InvalidParameter { .. } | CatBondError::TimeOrder { .. } | CatBondError::UnsupportedSeverity { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Spec = (&'static str, &'static str, Vec<&'static Param>);

fn table(groups: &[&'static [Param]]) -> Vec<&'static Param> {
    let mut out = vec![&CONFIG];
    for g in groups {
        out.extend(g.iter());
    }
    out
}

fn subcommands() -> Vec<Spec> {
    vec![
        ("trigger", "Estimate the probability that aggregate losses reach the threshold within the horizon", table(&[params::SEVERITY, params::EVENT, params::TRIGGER])),
        ("price", "Price a coupon CAT bond by simulation with Vasicek discounting", table(&[params::SEVERITY, params::EVENT, params::R0, params::VASICEK, params::BOND])),
        ("gen-dataset", "Draw random bonds and label them with simulated prices", table(&[params::SEVERITY, params::VASICEK, params::DATASET])),
        ("train", "Fit the pricing network to a dataset", table(&[params::TRAIN])),
        ("predict", "Price bonds with a trained network", table(&[params::PREDICT])),
        ("experiment", "Reproduce the convergence, method-comparison or sensitivity tables as CSV", table(&[params::EXPERIMENT])),
    ]
}

fn command() -> Command {
    let mut cmd = Command::new("catbond")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Catastrophe bond pricing: trigger simulation, bond prices and a neural pricing surrogate")
        .after_help("Exit status: 0 on success, 1 on a numerical or I/O failure, 2 on a usage error.")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about, params) in subcommands() {
        let sub = Command::new(name).about(about).args(params.iter().map(|p| params::arg(p)));
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn run(name: &str, matches: &ArgMatches) -> Result<(), Failure> {
    let spec = subcommands().into_iter().find(|s| s.0 == name).expect("registered subcommand");
    let params = Params::resolve(spec.0, matches, &spec.2)?;
    match name {
        "trigger" => commands::trigger(params),
        "price" => commands::price(params),
        "gen-dataset" => commands::gen_dataset(params),
        "train" => commands::train(params),
        "predict" => commands::predict(params),
        "experiment" => commands::experiment(params),
        _ => unreachable!("clap rejects unknown subcommands"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match run(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
