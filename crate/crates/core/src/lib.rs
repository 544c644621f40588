//! Deep-network training with annealed Gaussian gradient noise.
//!
//! Each step computes a gradient, clips it by global norm, adds
//! `N(0, eta / (1 + t)^gamma)` noise and hands it to SGD or Adam:
//!
//! ```
//! use gradnoise::optim::NoiseSchedule;
//!
//! let schedule = NoiseSchedule::annealed(0.01, 0.55).unwrap();
//! assert!((schedule.stddev(0) - 0.1).abs() < 1e-15);
//! ```
//!
//! The [`harness`] module runs the MNIST depth experiments and the
//! program-induction restart grids on top of [`nn`], [`programmer`] and
//! [`optim`].

pub mod error;
pub mod harness;
pub mod init;
pub mod nn;
pub mod optim;
pub mod params;
pub mod programmer;
pub mod rng;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
pub use harness::{GridReport, RunResult, Task, TrainConfig};
pub use init::InitScheme;
pub use nn::{AffineLayer, MlpModel};
pub use optim::{
    apply_step, ClipConfig, NoiseSchedule, OptimizerKind, OptimizerState, PipelineOrder, StepDiagnostics,
    StepPipeline,
};
pub use params::{GradientSet, Parameterized};
pub use programmer::SelectorModel;
pub use rng::Rng;
pub use tensor::Tensor;
