use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{Task, TrainConfig};
use crate::init::{initialize, mlp_dims};
use crate::nn::{argmax, batch_cross_entropy, mlp_backward, mlp_forward, accuracy, MlpModel};
use crate::optim::{apply_step, OptimizerState, StepDiagnostics};
use crate::params::Parameterized;
use crate::rng::Rng;
use crate::tasks::mnist::{subset, Dataset, NUM_CLASSES};
use crate::tensor::Tensor;

// Per-run random streams derived from the run seed.
pub const STREAM_INIT: u64 = 0;
pub const STREAM_SHUFFLE: u64 = 1;
pub const STREAM_DROPOUT: u64 = 2;
pub const STREAM_NOISE: u64 = 3;
pub const STREAM_DATA: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Running summary of [`StepDiagnostics`] over a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepSummary {
    pub steps: u64,
    pub mean_pre_norm: f64,
    pub max_pre_norm: f64,
    /// Steps where the clipper rescaled the gradient.
    pub clipped_steps: u64,
    pub first_sigma: f64,
    pub last_sigma: f64,
}

impl StepSummary {
    pub fn record(&mut self, d: &StepDiagnostics) {
        if self.steps == 0 {
            self.first_sigma = d.sigma;
        }
        self.steps += 1;
        self.mean_pre_norm += (d.pre_norm - self.mean_pre_norm) / self.steps as f64;
        self.max_pre_norm = self.max_pre_norm.max(d.pre_norm);
        if d.post_norm < d.pre_norm {
            self.clipped_steps += 1;
        }
        self.last_sigma = d.sigma;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub arm: String,
    pub config: TrainConfig,
    pub epochs: Vec<EpochMetrics>,
    pub best_test_acc: f64,
    pub final_test_acc: f64,
    /// Programmer runs: whether hard-selection test accuracy reached 100%.
    pub success: Option<bool>,
    pub diverged: bool,
    pub wall_clock_secs: f64,
    pub step_summary: StepSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub step_log: Vec<StepDiagnostics>,
    /// Free-form detail, e.g. an induced program.
    #[serde(default)]
    pub note: String,
}

impl RunResult {
    pub fn from_epochs(
        config: TrainConfig,
        epochs: Vec<EpochMetrics>,
        step_summary: StepSummary,
        step_log: Vec<StepDiagnostics>,
        diverged: bool,
    ) -> Self {
        let best = epochs.iter().map(|e| e.test_acc).fold(0.0, f64::max);
        let last = epochs.last().map_or(0.0, |e| e.test_acc);
        Self {
            run_id: String::new(),
            arm: String::new(),
            config,
            epochs,
            best_test_acc: best,
            final_test_acc: last,
            success: None,
            diverged,
            wall_clock_secs: 0.0,
            step_summary,
            step_log,
            note: String::new(),
        }
    }

    /// The result with wall-clock time zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> RunResult {
        RunResult {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }
}

/// Builds the training split the config asks for from the full train set.
pub fn prepare_mnist_train(config: &TrainConfig, full: &Dataset) -> Result<Dataset> {
    match config.train_subset {
        Some(n) if n < full.len() => subset(full, n, &mut Rng::stream(config.data_seed, STREAM_DATA)),
        Some(n) if n > full.len() => Err(Error::Argument(format!(
            "train_subset {n} exceeds {} available examples",
            full.len()
        ))),
        _ => Ok(full.clone()),
    }
}

pub fn build_mlp(config: &TrainConfig, input_dim: usize, rng: &mut Rng) -> Result<MlpModel> {
    let dims = mlp_dims(input_dim, config.hidden_units, config.hidden_layers, NUM_CLASSES);
    MlpModel::new(initialize(config.init, &dims, rng)?, config.dropout_rate)
}

fn gather(data: &Dataset, idx: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let d = data.dim();
    let mut rows = Vec::with_capacity(idx.len() * d);
    let mut labels = Vec::with_capacity(idx.len());
    for &i in idx {
        rows.extend_from_slice(data.inputs.row(i));
        labels.push(data.labels[i]);
    }
    Ok((Tensor::matrix(idx.len(), d, rows)?, labels))
}

/// One MNIST run on an already-prepared training split (see
/// [`prepare_mnist_train`]).
///
/// A run whose parameters or loss become non-finite stops updating; its
/// remaining epochs are recorded with a NaN loss and the accuracy of the
/// broken model (rows with non-finite logits count as wrong).
pub fn train_mnist(config: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<RunResult> {
    if config.task != Task::Mnist {
        return Err(Error::Config("train_mnist needs task = mnist".into()));
    }
    config.validate()?;
    let started = std::time::Instant::now();
    let mut init_rng = Rng::stream(config.seed, STREAM_INIT);
    let mut shuffle_rng = Rng::stream(config.seed, STREAM_SHUFFLE);
    let mut dropout_rng = Rng::stream(config.seed, STREAM_DROPOUT);
    let mut noise_rng = Rng::stream(config.seed, STREAM_NOISE);

    let mut model = build_mlp(config, train.dim(), &mut init_rng)?;
    let mut state = OptimizerState::new(config.optimizer, config.learning_rate);
    let pipeline = config.pipeline();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut summary = StepSummary::default();
    let mut step_log = Vec::new();
    let mut diverged = false;
    for epoch in 1..=config.epochs {
        if diverged {
            let test_acc = accuracy(&model, &test.inputs, &test.labels)?;
            epochs.push(EpochMetrics {
                epoch,
                train_loss: f64::NAN,
                train_acc: 0.0,
                test_acc,
            });
            continue;
        }
        shuffle_rng.shuffle(&mut order);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = gather(train, chunk)?;
            let (logits, cache) = mlp_forward(&model, &x, &mut dropout_rng, true)?;
            let (loss, grad_logits) = batch_cross_entropy(&logits, &y)?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            correct += (0..chunk.len())
                .filter(|&r| argmax(logits.row(r)) == Some(y[r]))
                .count();
            let grads = mlp_backward(&model, &cache, &grad_logits)?;
            let diag = apply_step(&mut model, grads, &mut state, &pipeline, &mut noise_rng)?;
            summary.record(&diag);
            if config.record_steps {
                step_log.push(diag);
            }
            if !loss.is_finite() || !model.params().iter().all(|p| p.is_finite()) {
                diverged = true;
                break;
            }
        }
        let test_acc = accuracy(&model, &test.inputs, &test.labels)?;
        epochs.push(EpochMetrics {
            epoch,
            train_loss: if diverged { f64::NAN } else { loss_sum / seen as f64 },
            train_acc: correct as f64 / seen.max(1) as f64,
            test_acc,
        });
    }
    let mut result = RunResult::from_epochs(config.clone(), epochs, summary, step_log, diverged);
    result.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(result)
}
