//! Experiment harness: run configuration, training runs, evaluation, sweeps,
//! reports and plots.

pub mod config;
pub mod eval;
pub mod gradcheck;
pub mod metrics;
pub mod plot;
pub mod run;
pub mod sweep;

pub use config::RunConfig;
pub use eval::{evaluate, AgentPolicy, EvalPolicy, EvalRecord, RandomPolicy, SweepSearchPolicy};
pub use run::{load_agent, train_run, RunSummary};
pub use sweep::{collect_report, curve_shape, run_sweep, SweepOptions, SweepReport, Variant};
