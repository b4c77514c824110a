//! Instance generation, experiment batches, CSV output, scaling summaries and the CLI.

pub mod cli;
pub mod experiment;
pub mod instance;
pub mod scaling;
pub mod selftest;

pub use experiment::{
    read_csv, run_experiment, write_csv, BudgetRule, Capacity, ExperimentRow, ExperimentSpec,
    TargetKind, CSV_HEADER,
};
pub use instance::{
    closed_form_target, generate_instance, random_instance, InstanceSpec, ProfitKind,
    RandomInstanceConfig, RandomProfits,
};
pub use scaling::{scaling_summary, GrowthModel, Metric, ScalingReport};
