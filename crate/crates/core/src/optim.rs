//! The per-step update pipeline: gradient clipping, annealed Gaussian
//! gradient noise, then an SGD or Adam parameter update.
//!
//! At optimizer step `t` (counted from 0, one per minibatch update) the
//! annealed schedule adds `N(0, sigma_t^2)` to every gradient element with
//!
//! ```text
//! sigma_t^2 = eta / (1 + t)^gamma
//! ```
//!
//! By default noise is added after clipping, so the clipped norm bounds the
//! signal but not the noise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{GradientSet, Parameterized};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const DEFAULT_GAMMA: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum NoiseSchedule {
    #[default]
    Off,
    /// `sigma_t^2 = eta / (1 + t)^gamma`.
    Annealed { eta: f64, gamma: f64 },
    /// Constant `sigma_t = stddev`.
    Fixed { stddev: f64 },
}

impl NoiseSchedule {
    pub fn annealed(eta: f64, gamma: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) || !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Argument(format!(
                "annealed noise needs eta > 0 and gamma >= 0, got eta={eta}, gamma={gamma}"
            )));
        }
        Ok(NoiseSchedule::Annealed { eta, gamma })
    }

    pub fn fixed(stddev: f64) -> Result<Self> {
        if !(stddev >= 0.0 && stddev.is_finite()) {
            return Err(Error::Argument(format!("negative noise stddev {stddev}")));
        }
        Ok(NoiseSchedule::Fixed { stddev })
    }

    pub fn is_off(&self) -> bool {
        matches!(self, NoiseSchedule::Off)
    }

    pub fn variance(&self, t: u64) -> f64 {
        match *self {
            NoiseSchedule::Off => 0.0,
            NoiseSchedule::Annealed { eta, gamma } => eta / (1.0 + t as f64).powf(gamma),
            NoiseSchedule::Fixed { stddev } => stddev * stddev,
        }
    }

    pub fn stddev(&self, t: u64) -> f64 {
        match *self {
            NoiseSchedule::Fixed { stddev } => stddev,
            _ => self.variance(t).sqrt(),
        }
    }
}

impl fmt::Display for NoiseSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSchedule::Off => write!(f, "off"),
            NoiseSchedule::Annealed { eta, gamma } => write!(f, "annealed(eta={eta},gamma={gamma})"),
            NoiseSchedule::Fixed { stddev } => write!(f, "fixed(stddev={stddev})"),
        }
    }
}

pub fn noise_stddev(schedule: &NoiseSchedule, t: u64) -> f64 {
    schedule.stddev(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClipConfig {
    pub threshold: Option<f64>,
}

impl ClipConfig {
    pub fn none() -> Self {
        Self { threshold: None }
    }

    pub fn at(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(Error::Argument(format!(
                "clip threshold must be positive, got {threshold}"
            )));
        }
        Ok(Self {
            threshold: Some(threshold),
        })
    }
}

/// Rescales all gradients jointly so their global L2 norm is at most the
/// threshold. Returns the clipped set and the norm before clipping.
pub fn clip_global_norm(mut grads: GradientSet, config: &ClipConfig) -> (GradientSet, f64) {
    let norm = grads.global_norm();
    if let Some(threshold) = config.threshold {
        if norm > threshold {
            grads.scale(threshold / norm);
        }
    }
    (grads, norm)
}

/// Adds independent `N(0, stddev^2)` to every gradient element.
pub fn inject_noise(mut grads: GradientSet, stddev: f64, rng: &mut Rng) -> Result<GradientSet> {
    if !(stddev >= 0.0) {
        return Err(Error::Argument(format!("negative noise stddev {stddev}")));
    }
    if stddev > 0.0 {
        for t in grads.tensors_mut() {
            for g in t.data_mut() {
                *g += stddev * rng.standard_normal();
            }
        }
    }
    Ok(grads)
}

fn check_params(params: &[&mut Tensor], grads: &GradientSet) -> Result<()> {
    let views: Vec<&Tensor> = params.iter().map(|p| &**p).collect();
    grads.check_matches(&views)
}

/// Plain SGD without momentum: `p <- p - lr * g`.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &GradientSet, lr: f64) -> Result<()> {
    check_params(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads.tensors()) {
        p.axpy(-lr, g)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam { .. } => "adam",
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::adam()),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Completed optimizer steps; the noise schedule's `t`.
    pub step: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::adam(), learning_rate)
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first_moment, &self.second_moment)
    }

    /// One update with the configured rule; advances `step` by one.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &GradientSet) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => sgd_step(params, grads, self.learning_rate)?,
            OptimizerKind::Adam { .. } => return adam_step(params, grads, self),
        }
        self.step += 1;
        Ok(())
    }
}

/// Bias-corrected Adam update; advances `state.step` by one.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &GradientSet,
    state: &mut OptimizerState,
) -> Result<()> {
    let OptimizerKind::Adam {
        beta1,
        beta2,
        epsilon,
    } = state.kind
    else {
        return Err(Error::Argument("adam_step on a non-Adam optimizer state".into()));
    };
    check_params(params, grads)?;
    if state.first_moment.is_empty() {
        state.first_moment = grads.tensors().iter().map(Tensor::zeros_like).collect();
        state.second_moment = state.first_moment.clone();
    }
    let t = (state.step + 1) as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let lr = state.learning_rate;
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads.tensors())
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        g.check_same_shape(m, "adam moments")?;
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    state.step += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PipelineOrder {
    #[default]
    ClipThenNoise,
    NoiseThenClip,
}

impl fmt::Display for PipelineOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineOrder::ClipThenNoise => "clip_then_noise",
            PipelineOrder::NoiseThenClip => "noise_then_clip",
        })
    }
}

impl FromStr for PipelineOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clip_then_noise" => Ok(PipelineOrder::ClipThenNoise),
            "noise_then_clip" => Ok(PipelineOrder::NoiseThenClip),
            other => Err(Error::Config(format!("unknown pipeline order {other:?}"))),
        }
    }
}

/// What happened during one [`apply_step`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: u64,
    /// Global norm entering the clipper.
    pub pre_norm: f64,
    /// Global norm leaving the clipper.
    pub post_norm: f64,
    pub sigma: f64,
}

impl StepDiagnostics {
    pub const CSV_HEADER: &'static str = "step,pre_norm,post_norm,sigma";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.step, self.pre_norm, self.post_norm, self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepPipeline {
    pub clip: ClipConfig,
    pub noise: NoiseSchedule,
    pub order: PipelineOrder,
}

/// Clip, perturb and apply `grads` to `model`, advancing the step counter.
pub fn apply_step<M: Parameterized + ?Sized>(
    model: &mut M,
    grads: GradientSet,
    state: &mut OptimizerState,
    pipeline: &StepPipeline,
    rng: &mut Rng,
) -> Result<StepDiagnostics> {
    let t = state.step;
    let sigma = pipeline.noise.stddev(t);
    let (grads, pre_norm, post_norm) = match pipeline.order {
        PipelineOrder::ClipThenNoise => {
            let (clipped, pre) = clip_global_norm(grads, &pipeline.clip);
            let post = clipped.global_norm();
            (inject_noise(clipped, sigma, rng)?, pre, post)
        }
        PipelineOrder::NoiseThenClip => {
            let noisy = inject_noise(grads, sigma, rng)?;
            let (clipped, pre) = clip_global_norm(noisy, &pipeline.clip);
            let post = clipped.global_norm();
            (clipped, pre, post)
        }
    };
    let mut params = model.params_mut();
    state.update(&mut params, &grads)?;
    Ok(StepDiagnostics {
        step: t,
        pre_norm,
        post_norm,
        sigma,
    })
}
