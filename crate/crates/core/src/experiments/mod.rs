//! Reproduction harness: simulated datasets, estimator convergence traces,
//! method comparison tables and surrogate sensitivity sweeps. Everything
//! writes CSV.

pub mod comparison;
pub mod convergence;
pub mod dataset;
pub mod sensitivity;

pub use comparison::{
    method_comparison, published_pide, time_simulation, time_surrogate, write_comparison_csv, ComparisonConfig,
    ComparisonRow, PublishedValue, TABLE_ROWS,
};
pub use convergence::{convergence_trace, convergence_trace_with, write_trace_csv, TraceRow};
pub use dataset::{generate_dataset, read_dataset_csv, write_dataset_csv, DatasetConfig, ParamRange};
pub use sensitivity::{
    linear_grid, panel_presets, sensitivity_sweep, worst_violation, write_sweep_csv, BondPoint, Direction, Panel,
    SweepParameter, SweepRow, SweepSpec,
};
