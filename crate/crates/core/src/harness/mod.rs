//! Seeded Monte Carlo sweeps: every trial draws one channel realization and
//! one observation set, runs each requested method on the same data and
//! records NMSE, grouping accuracy and iteration counts.

mod config;
mod metrics;
mod output;
mod runner;

pub use config::{preset, ExperimentConfig, GeometrySpec, Method, SweepVar};
pub use metrics::{grouping_accuracy, nmse};
pub use output::{aggregate, emit_csv, mean_and_se, read_aggregate, read_raw, summary_table, AggregateRow, OutputFiles};
pub use runner::{default_omp_budgets, generate_trial, run_monte_carlo, trial_seed, ExperimentRecord, TrialData};
