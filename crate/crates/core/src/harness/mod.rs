//! Experiment runner: configs, single runs, grids and reports.

pub mod config;
pub mod experiments;
pub mod gradcheck;
pub mod grid;
pub mod report;
pub mod run;
pub mod schedule;

pub use config::{parse_kv, Task, TrainConfig};
pub use experiments::{
    run_mnist_experiment, run_programmer_grid, NoiseArms, ProgrammerArm, DEFAULT_PROGRAMMER_GRID,
};
pub use gradcheck::{run_gradient_checks, GradCheckSummary};
pub use grid::{run_grid, ArmSummary, GridReport, GridSpec, RunSpec};
pub use report::{emit_report, ReportFiles};
pub use run::{train_mnist, EpochMetrics, RunResult, StepSummary};
pub use schedule::schedule_dump;
