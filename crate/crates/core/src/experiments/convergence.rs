//! Running-mean traces of the plain and importance-sampled estimators.

use crate::error::{CatBondError, Result};
use crate::estimators::{default_tilt, path_contributions, TiltParams};
use crate::loss_model::{LossModel, TriggerSpec};
use crate::rng::{tags, StreamSeed};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    pub running_mc: f64,
    pub running_is: f64,
}

/// Traces on independent streams derived from `seed`, with the default tilt.
pub fn convergence_trace(model: &LossModel, spec: &TriggerSpec, n_max: u64, seed: u64) -> Result<Vec<TraceRow>> {
    let tilt = default_tilt(model, spec)?;
    let root = StreamSeed::new(seed);
    convergence_trace_with(
        model,
        spec,
        n_max,
        root.child(tags::PLAIN_MC).value(),
        root.child(tags::IMPORTANCE).value(),
        &tilt,
    )
}

/// Traces with explicit streams and tilt.
pub fn convergence_trace_with(
    model: &LossModel,
    spec: &TriggerSpec,
    n_max: u64,
    mc_seed: u64,
    is_seed: u64,
    tilt: &TiltParams,
) -> Result<Vec<TraceRow>> {
    if n_max == 0 {
        return Err(CatBondError::invalid("n_max", "need at least one iteration"));
    }
    let mc = path_contributions(model, spec, None, n_max, mc_seed)?;
    let is = path_contributions(model, spec, Some(tilt), n_max, is_seed)?;
    let (mut sum_mc, mut sum_is) = (0.0, 0.0);
    Ok(mc
        .iter()
        .zip(&is)
        .enumerate()
        .map(|(i, (m, w))| {
            sum_mc += m;
            sum_is += w;
            let k = (i + 1) as f64;
            TraceRow { iteration: i as u64 + 1, running_mc: sum_mc / k, running_is: sum_is / k }
        })
        .collect())
}

pub fn write_trace_csv<W: Write>(writer: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["iteration", "running_mc_estimate", "running_is_estimate"])?;
    for r in rows {
        w.write_record([r.iteration.to_string(), format!("{:.16e}", r.running_mc), format!("{:.16e}", r.running_is)])?;
    }
    w.flush()?;
    Ok(())
}

/// Sample variance of the last `fraction` of a running trace.
pub fn tail_variance(values: impl Iterator<Item = f64> + Clone, fraction: f64) -> f64 {
    let all: Vec<f64> = values.collect();
    let start = ((1.0 - fraction) * all.len() as f64).floor() as usize;
    let tail = &all[start.min(all.len())..];
    if tail.len() < 2 {
        return 0.0;
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (tail.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::identity_tilt;
    use crate::loss_model::SeverityDistribution;

    fn setup() -> (LossModel, TriggerSpec) {
        (
            LossModel::new(35.0, SeverityDistribution::reference_gamma()).unwrap(),
            TriggerSpec::new(9e9, 1.0).unwrap(),
        )
    }

    #[test]
    fn single_row_is_first_contribution() {
        let (m, s) = setup();
        let rows = convergence_trace(&m, &s, 1, 4).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].running_mc == 0.0 || rows[0].running_mc == 1.0);
        assert!(rows[0].running_is >= 0.0);
    }

    #[test]
    fn identity_tilt_on_shared_stream_gives_identical_traces() {
        let (m, s) = setup();
        let rows = convergence_trace_with(&m, &s, 3000, 77, 77, &identity_tilt(&m, 1.0)).unwrap();
        assert!(rows.iter().all(|r| r.running_mc == r.running_is));
    }

    #[test]
    fn zero_iterations_rejected() {
        let (m, s) = setup();
        assert!(convergence_trace(&m, &s, 0, 1).is_err());
    }

    #[test]
    fn tail_variance_of_constant_is_zero() {
        assert_eq!(tail_variance([2.0; 50].into_iter(), 0.1), 0.0);
    }
}
