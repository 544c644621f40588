//! Soft-selection program induction over a single numeric column.
//!
//! A question vector is encoded to a hidden state `h = tanh(q W + b)`. Each of
//! `T` step heads maps `h` to a softmax over the operations
//! `{Greater, Lesser, Count, Sum, NoOp}`. During training every operation is
//! executed and the results are mixed by their probabilities:
//!
//! ```text
//! s'   = p_G (s * [x > a]) + p_L (s * [x < b]) + (p_C + p_S + p_N) s
//! acc' = acc + p_C sum(s) + p_S sum(s * x)
//! ```
//!
//! starting from `s = 1`, `acc = 0`; the prediction is `acc` after step `T`.
//! At test time each step takes the argmax operation instead.

use crate::error::{Error, Result};
use crate::harness::config::TrainConfig;
use crate::harness::run::{EpochMetrics, RunResult, StepSummary};
use crate::init::InitScheme;
use crate::nn::{dropout_forward, AffineLayer};
use crate::optim::{apply_step, OptimizerState, StepDiagnostics};
use crate::params::{GradientSet, Parameterized};
use crate::rng::Rng;
use crate::tasks::table::{run_ops, Op, Pivots, TableDataset, TableQuestion, ENCODING_DIM};
use crate::tensor::{gaussian_tensor, Tensor};

pub const DEFAULT_HIDDEN: usize = 32;
pub const DEFAULT_STEPS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorModel {
    pub encoder: AffineLayer,
    pub heads: Vec<AffineLayer>,
    pub dropout_rate: f64,
}

impl SelectorModel {
    pub fn new(input_dim: usize, hidden: usize, steps: usize, init: InitScheme, rng: &mut Rng) -> Result<Self> {
        if steps == 0 || hidden == 0 {
            return Err(Error::Argument("selector needs hidden > 0 and steps > 0".into()));
        }
        let layer = |rng: &mut Rng, fan_in: usize, fan_out: usize, depth: usize| -> Result<AffineLayer> {
            let sd = init.weight_stddev(fan_in, depth);
            AffineLayer::new(
                gaussian_tensor(rng, &[fan_in, fan_out], 0.0, sd)?,
                Tensor::zeros(&[fan_out]),
            )
        };
        let encoder = layer(rng, input_dim, hidden, 2)?;
        let heads = (0..steps)
            .map(|_| layer(rng, hidden, Op::COUNT, 2))
            .collect::<Result<_>>()?;
        Ok(Self {
            encoder,
            heads,
            dropout_rate: 0.0,
        })
    }

    pub fn zeros(input_dim: usize, hidden: usize, steps: usize) -> Self {
        Self {
            encoder: AffineLayer::zeros(input_dim, hidden),
            heads: (0..steps).map(|_| AffineLayer::zeros(hidden, Op::COUNT)).collect(),
            dropout_rate: 0.0,
        }
    }

    /// A model whose heads ignore the question and pick `ops[k]` at step `k`
    /// with probability exactly 1.
    pub fn forced(input_dim: usize, hidden: usize, ops: &[Op]) -> Self {
        let mut model = Self::zeros(input_dim, hidden, ops.len());
        for (head, op) in model.heads.iter_mut().zip(ops) {
            // exp(-1000) underflows to 0, so the softmax is exactly one-hot.
            for (i, b) in head.bias.data_mut().iter_mut().enumerate() {
                *b = if i == op.index() { 0.0 } else { -1000.0 };
            }
        }
        model
    }

    pub fn steps(&self) -> usize {
        self.heads.len()
    }

    pub fn hidden(&self) -> usize {
        self.encoder.fan_out()
    }
}

impl Parameterized for SelectorModel {
    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["encoder.weight".to_string(), "encoder.bias".to_string()];
        for k in 0..self.heads.len() {
            names.push(format!("head{k}.weight"));
            names.push(format!("head{k}.bias"));
        }
        names
    }

    fn params(&self) -> Vec<&Tensor> {
        std::iter::once(&self.encoder)
            .chain(&self.heads)
            .flat_map(|l| [&l.weights, &l.bias])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        std::iter::once(&mut self.encoder)
            .chain(self.heads.iter_mut())
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftExecState {
    pub selection: Vec<f64>,
    pub answer: f64,
}

impl SoftExecState {
    pub fn start(rows: usize) -> Self {
        Self {
            selection: vec![1.0; rows],
            answer: 0.0,
        }
    }
}

fn indicator(column: &[f64], pred: impl Fn(f64) -> bool) -> Vec<f64> {
    column.iter().map(|&x| if pred(x) { 1.0 } else { 0.0 }).collect()
}

/// `1 - pG - pL + pG g + pL l`, written so that rounding keeps it in [0, 1].
fn keep_factor(pg: f64, pl: f64, g: f64, l: f64) -> f64 {
    (1.0 - pg * (1.0 - g) - pl * (1.0 - l)).max(0.0)
}

fn soft_step_unchecked(
    state: &SoftExecState,
    probs: &[f64],
    column: &[f64],
    greater: &[f64],
    lesser: &[f64],
) -> SoftExecState {
    let (pg, pl, pc, ps) = (
        probs[Op::Greater.index()],
        probs[Op::Lesser.index()],
        probs[Op::Count.index()],
        probs[Op::Sum.index()],
    );
    let mut count = 0.0;
    let mut total = 0.0;
    let selection = state
        .selection
        .iter()
        .zip(column)
        .zip(greater.iter().zip(lesser))
        .map(|((&s, &x), (&g, &l))| {
            count += s;
            total += s * x;
            s * keep_factor(pg, pl, g, l)
        })
        .collect();
    SoftExecState {
        selection,
        answer: state.answer + pc * count + ps * total,
    }
}

/// One soft execution step under the operation distribution `op_probs`
/// (indexed as [`Op::ALL`]).
pub fn soft_step(
    state: &SoftExecState,
    op_probs: &[f64],
    column: &[f64],
    pivots: Pivots,
) -> Result<SoftExecState> {
    if op_probs.len() != Op::COUNT {
        return Err(Error::Argument(format!(
            "expected {} op probabilities, got {}",
            Op::COUNT,
            op_probs.len()
        )));
    }
    let total: f64 = op_probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 || op_probs.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::Argument(format!(
            "op probabilities must be a distribution, sum = {total}"
        )));
    }
    if state.selection.len() != column.len() {
        return Err(Error::Consistency("selection and column lengths differ".into()));
    }
    let greater = indicator(column, |x| x > pivots.greater);
    let lesser = indicator(column, |x| x < pivots.lesser);
    Ok(soft_step_unchecked(state, op_probs, column, &greater, &lesser))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn encode(model: &SelectorModel, question: &TableQuestion) -> Result<Vec<f64>> {
    if question.encoding.len() != model.encoder.fan_in() {
        return Err(Error::Shape {
            op: "selector encoder",
            left: vec![question.encoding.len()],
            right: model.encoder.weights.shape().to_vec(),
        });
    }
    let q = Tensor::matrix(1, question.encoding.len(), question.encoding.clone())?;
    Ok(model.encoder.forward(&q)?.into_data())
}

fn head_logits(head: &AffineLayer, hidden: &[f64]) -> Vec<f64> {
    let mut out = head.bias.data().to_vec();
    for (i, &h) in hidden.iter().enumerate() {
        if h != 0.0 {
            for (o, w) in out.iter_mut().zip(head.weights.row(i)) {
                *o += h * w;
            }
        }
    }
    out
}

/// Everything [`soft_backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct SoftCache {
    pub encoding: Vec<f64>,
    /// `tanh` output before dropout.
    pub hidden: Vec<f64>,
    /// Dropout multipliers (`0` or `1 / (1 - rate)`), if dropout was applied.
    pub dropout: Option<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
    /// Selection entering each step; `states[T]` is the final selection.
    pub states: Vec<SoftExecState>,
    pub greater: Vec<f64>,
    pub lesser: Vec<f64>,
    pub column: Vec<f64>,
}

impl SoftCache {
    fn head_input(&self) -> Vec<f64> {
        match &self.dropout {
            Some(m) => self.hidden.iter().zip(m).map(|(h, m)| h * m).collect(),
            None => self.hidden.clone(),
        }
    }
}

pub fn soft_forward(model: &SelectorModel, question: &TableQuestion) -> Result<(f64, SoftCache)> {
    soft_forward_with(model, question, None)
}

/// Soft forward pass; `dropout_rng` enables dropout on the hidden state.
pub fn soft_forward_with(
    model: &SelectorModel,
    question: &TableQuestion,
    dropout_rng: Option<&mut Rng>,
) -> Result<(f64, SoftCache)> {
    let pre = encode(model, question)?;
    let hidden: Vec<f64> = pre.iter().map(|z| z.tanh()).collect();
    let dropout = match dropout_rng {
        Some(rng) if model.dropout_rate > 0.0 => {
            let (_, mask) = dropout_forward(&Tensor::vector(hidden.clone()), model.dropout_rate, rng, true)?;
            let scale = 1.0 / (1.0 - model.dropout_rate);
            Some(mask.data().iter().map(|m| m * scale).collect())
        }
        _ => None,
    };
    let column = question.column.clone();
    let greater = indicator(&column, |x| x > question.pivots.greater);
    let lesser = indicator(&column, |x| x < question.pivots.lesser);
    let mut cache = SoftCache {
        encoding: question.encoding.clone(),
        hidden,
        dropout,
        probs: Vec::with_capacity(model.steps()),
        states: vec![SoftExecState::start(column.len())],
        greater,
        lesser,
        column,
    };
    let head_in = cache.head_input();
    for head in &model.heads {
        let probs = softmax(&head_logits(head, &head_in));
        let next = soft_step_unchecked(
            cache.states.last().unwrap(),
            &probs,
            &cache.column,
            &cache.greater,
            &cache.lesser,
        );
        debug_assert!(next.selection.iter().all(|&s| (0.0..=1.0).contains(&s)));
        cache.probs.push(probs);
        cache.states.push(next);
    }
    Ok((cache.states.last().unwrap().answer, cache))
}

/// Parameter gradients given `d loss / d prediction`.
pub fn soft_backward(model: &SelectorModel, cache: &SoftCache, d_prediction: f64) -> Result<GradientSet> {
    let steps = model.steps();
    if cache.probs.len() != steps || cache.hidden.len() != model.hidden() {
        return Err(Error::Consistency("soft cache does not match model".into()));
    }
    let n = cache.column.len();
    let hidden_dim = model.hidden();
    let head_in = cache.head_input();
    let mut d_head_in = vec![0.0; hidden_dim];
    // The answer accumulates additively, so its adjoint is the same at every step.
    let d_answer = d_prediction;
    let mut d_sel = vec![0.0; n];
    let mut head_grads = Vec::with_capacity(steps);
    for k in (0..steps).rev() {
        let s = &cache.states[k].selection;
        let p = &cache.probs[k];
        let (pg, pl, pc, ps) = (
            p[Op::Greater.index()],
            p[Op::Lesser.index()],
            p[Op::Count.index()],
            p[Op::Sum.index()],
        );
        let mut dp = [0.0; Op::COUNT];
        let mut next_d_sel = vec![0.0; n];
        for i in 0..n {
            let (g, l, x) = (cache.greater[i], cache.lesser[i], cache.column[i]);
            let factor = keep_factor(pg, pl, g, l);
            dp[Op::Greater.index()] -= d_sel[i] * s[i] * (1.0 - g);
            dp[Op::Lesser.index()] -= d_sel[i] * s[i] * (1.0 - l);
            dp[Op::Count.index()] += d_answer * s[i];
            dp[Op::Sum.index()] += d_answer * s[i] * x;
            next_d_sel[i] = d_sel[i] * factor + d_answer * (pc + ps * x);
        }
        d_sel = next_d_sel;

        let dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
        let d_logits: Vec<f64> = p.iter().zip(&dp).map(|(pi, di)| pi * (di - dot)).collect();
        let head = &model.heads[k];
        let mut dw = vec![0.0; hidden_dim * Op::COUNT];
        for (i, &h) in head_in.iter().enumerate() {
            for (j, &dl) in d_logits.iter().enumerate() {
                dw[i * Op::COUNT + j] = h * dl;
            }
            d_head_in[i] += head.weights.row(i).iter().zip(&d_logits).map(|(w, d)| w * d).sum::<f64>();
        }
        head_grads.push((
            Tensor::matrix(hidden_dim, Op::COUNT, dw)?,
            Tensor::vector(d_logits),
        ));
    }
    head_grads.reverse();

    let d_pre: Vec<f64> = (0..hidden_dim)
        .map(|i| {
            let m = cache.dropout.as_ref().map_or(1.0, |m| m[i]);
            let h = cache.hidden[i];
            d_head_in[i] * m * (1.0 - h * h)
        })
        .collect();
    let d_in = cache.encoding.len();
    let mut dw_enc = vec![0.0; d_in * hidden_dim];
    for (r, &q) in cache.encoding.iter().enumerate() {
        if q != 0.0 {
            for (c, &d) in d_pre.iter().enumerate() {
                dw_enc[r * hidden_dim + c] = q * d;
            }
        }
    }
    let mut tensors = vec![Tensor::matrix(d_in, hidden_dim, dw_enc)?, Tensor::vector(d_pre)];
    for (w, b) in head_grads {
        tensors.push(w);
        tensors.push(b);
    }
    Ok(GradientSet::new(model.param_names(), tensors))
}

/// Squared error `(prediction - answer)^2` of the soft prediction.
pub fn soft_loss(model: &SelectorModel, question: &TableQuestion) -> Result<f64> {
    let (pred, _) = soft_forward(model, question)?;
    Ok((pred - question.answer).powi(2))
}

/// Initial step of the extrapolated differences in [`selector_gradient_check`].
pub const SELECTOR_FD_STEP: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SelectorGradCheck {
    /// Largest [`relative_error`](crate::nn::relative_error).
    pub max_relative_error: f64,
    /// Largest relative error without the floor.
    pub max_raw_relative_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

/// Compares [`soft_backward`] with extrapolated central differences of
/// [`soft_loss`] for every parameter.
pub fn selector_gradient_check(model: &SelectorModel, question: &TableQuestion, h0: f64) -> Result<SelectorGradCheck> {
    let (pred, cache) = soft_forward(model, question)?;
    let grads = soft_backward(model, &cache, 2.0 * (pred - question.answer))?;
    let mut probe = model.clone();
    let mut report = SelectorGradCheck::default();
    for p in 0..grads.len() {
        for j in 0..grads.tensors()[p].len() {
            let orig = probe.params()[p].data()[j];
            let mut failed = None;
            let (numeric, _) = crate::nn::extrapolated_derivative(
                |h| {
                    probe.params_mut()[p].data_mut()[j] = orig + h;
                    let loss = soft_loss(&probe, question);
                    probe.params_mut()[p].data_mut()[j] = orig;
                    loss.unwrap_or_else(|e| {
                        failed = Some(e);
                        f64::NAN
                    })
                },
                h0,
            );
            if let Some(e) = failed {
                return Err(e);
            }
            let analytic = grads.tensors()[p].data()[j];
            report.max_relative_error = report.max_relative_error.max(crate::nn::relative_error(analytic, numeric));
            report.max_raw_relative_error = report
                .max_raw_relative_error
                .max(crate::nn::raw_relative_error(analytic, numeric));
            report.max_abs_error = report.max_abs_error.max((analytic - numeric).abs());
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Argmax program and its hard execution.
pub fn hard_forward(model: &SelectorModel, question: &TableQuestion) -> Result<(f64, Vec<Op>)> {
    let hidden: Vec<f64> = encode(model, question)?.iter().map(|z| z.tanh()).collect();
    let program: Vec<Op> = model
        .heads
        .iter()
        .map(|head| {
            let logits = head_logits(head, &hidden);
            let mut best = 0;
            for (i, &v) in logits.iter().enumerate() {
                if v > logits[best] {
                    best = i;
                }
            }
            Op::ALL[best]
        })
        .collect();
    Ok((run_ops(&question.column, &program, question.pivots), program))
}

/// One row per step, `t  Op`, in the layout of an induced-program table.
pub fn format_program(program: &[Op]) -> String {
    let mut out = String::from("t  Selected Op\n");
    for (t, op) in program.iter().enumerate() {
        out.push_str(&format!("{}  {op}\n", t + 1));
    }
    out
}

pub fn program_text(program: &[Op]) -> String {
    program.iter().map(|op| op.name()).collect::<Vec<_>>().join(" ")
}

pub fn hard_accuracy(model: &SelectorModel, data: &TableDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Argument("accuracy of an empty set".into()));
    }
    let mut correct = 0usize;
    for q in &data.questions {
        let (pred, _) = hard_forward(model, q)?;
        if q.is_correct(pred) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Trains a selector with Adam through the clip/noise pipeline and evaluates
/// hard-selection accuracy after every epoch.
pub fn train_programmer(config: &TrainConfig, train: &TableDataset, test: &TableDataset) -> Result<RunResult> {
    let started = std::time::Instant::now();
    if train.is_empty() {
        return Err(Error::Argument("empty training set".into()));
    }
    let mut init_rng = Rng::stream(config.seed, crate::harness::run::STREAM_INIT);
    let mut shuffle_rng = Rng::stream(config.seed, crate::harness::run::STREAM_SHUFFLE);
    let mut dropout_rng = Rng::stream(config.seed, crate::harness::run::STREAM_DROPOUT);
    let mut noise_rng = Rng::stream(config.seed, crate::harness::run::STREAM_NOISE);

    let mut model = SelectorModel::new(ENCODING_DIM, config.hidden_units, config.steps, config.init, &mut init_rng)?;
    model.dropout_rate = config.dropout_rate;
    let mut state = OptimizerState::new(config.optimizer, config.learning_rate);
    let pipeline = config.pipeline();
    let batch = config.batch_size.max(1);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut steps = StepSummary::default();
    let mut step_log: Vec<StepDiagnostics> = Vec::new();
    let mut diverged = false;
    for epoch in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        if !diverged {
            for chunk in order.chunks(batch) {
                let mut grads = model.zero_grads();
                let scale = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let q = &train.questions[i];
                    let rng = (model.dropout_rate > 0.0).then_some(&mut dropout_rng);
                    let (pred, cache) = soft_forward_with(&model, q, rng)?;
                    let err = pred - q.answer;
                    loss_sum += err * err;
                    let g = soft_backward(&model, &cache, 2.0 * err * scale)?;
                    for (acc, gi) in grads.tensors_mut().iter_mut().zip(g.tensors()) {
                        acc.axpy(1.0, gi)?;
                    }
                }
                let diag = apply_step(&mut model, grads, &mut state, &pipeline, &mut noise_rng)?;
                steps.record(&diag);
                if config.record_steps {
                    step_log.push(diag);
                }
                if !model.params().iter().all(|p| p.is_finite()) {
                    diverged = true;
                    break;
                }
            }
        }
        let train_loss = if diverged { f64::NAN } else { loss_sum / train.len() as f64 };
        let train_acc = hard_accuracy(&model, train)?;
        let test_acc = hard_accuracy(&model, test)?;
        epochs.push(EpochMetrics {
            epoch: epoch + 1,
            train_loss,
            train_acc,
            test_acc,
        });
    }
    let (final_test, probe) = (epochs.last().map_or(0.0, |e| e.test_acc), test.questions.first());
    let induced = match probe {
        Some(q) => program_text(&hard_forward(&model, q)?.1),
        None => String::new(),
    };
    let mut result = RunResult::from_epochs(config.clone(), epochs, steps, step_log, diverged);
    result.success = Some(result.best_test_acc == 1.0);
    result.final_test_acc = final_test;
    result.note = induced;
    result.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::table::{execute_program, Instr};

    fn question(column: &[f64], program: Vec<Instr>) -> TableQuestion {
        TableQuestion::new(column.to_vec(), program).unwrap()
    }

    fn one_hot(op: Op) -> Vec<f64> {
        let mut p = vec![0.0; Op::COUNT];
        p[op.index()] = 1.0;
        p
    }

    #[test]
    fn soft_step_noop_and_count() {
        let column: Vec<f64> = (0..10).map(f64::from).collect();
        let start = SoftExecState::start(10);
        let piv = Pivots::default();
        assert_eq!(soft_step(&start, &one_hot(Op::NoOp), &column, piv).unwrap(), start);
        let counted = soft_step(&start, &one_hot(Op::Count), &column, piv).unwrap();
        assert_eq!(counted.answer, 10.0);
        assert_eq!(counted.selection, start.selection);
        let mut half = vec![0.0; Op::COUNT];
        half[Op::Count.index()] = 0.5;
        half[Op::NoOp.index()] = 0.5;
        let mixed = soft_step(&start, &half, &column, piv).unwrap();
        assert_eq!(mixed.answer, 5.0);
        assert_eq!(mixed.selection, start.selection);
    }

    #[test]
    fn soft_step_rejects_unnormalized() {
        let start = SoftExecState::start(2);
        let bad = vec![0.5, 0.5, 0.5, 0.0, 0.0];
        assert!(soft_step(&start, &bad, &[1.0, 2.0], Pivots::default()).is_err());
    }

    #[test]
    fn zero_model_closed_form() {
        // Uniform 1/5 per op: factor_i = 1 - 0.2 (1 - g_i) - 0.2 (1 - l_i).
        let column = [1.0, 5.0, 9.0];
        let q = question(&column, vec![Instr::Greater(4.0), Instr::Lesser(8.0), Instr::Count]);
        let model = SelectorModel::zeros(ENCODING_DIM, 6, 3);
        let (pred, cache) = soft_forward(&model, &q).unwrap();
        assert!(cache.probs.iter().flatten().all(|&p| (p - 0.2).abs() < 1e-15));
        let factors = [1.0 - 0.2, 1.0, 1.0 - 0.2];
        let mut s = [1.0; 3];
        let mut acc = 0.0;
        for _ in 0..3 {
            acc += 0.2 * s.iter().sum::<f64>() + 0.2 * s.iter().zip(&column).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..3 {
                s[i] *= factors[i];
            }
        }
        assert!((pred - acc).abs() < 1e-12, "{pred} vs {acc}");
    }

    #[test]
    fn forced_heads_match_hard_execution() {
        let column = [1.0, 5.0, 9.0];
        let q = question(&column, vec![Instr::Greater(4.0), Instr::Lesser(8.0), Instr::Count]);
        let ops = [Op::Greater, Op::Lesser, Op::NoOp, Op::Count];
        let model = SelectorModel::forced(ENCODING_DIM, 4, &ops);
        let (hard, program) = hard_forward(&model, &q).unwrap();
        assert_eq!(hard, 1.0);
        assert_eq!(program_text(&program), "Greater Lesser NoOp Count");
        let (soft, _) = soft_forward(&model, &q).unwrap();
        assert_eq!(soft, hard);
        assert_eq!(hard, execute_program(&column, &q.program).unwrap());
        assert!(format_program(&program).contains("3  NoOp"));
    }

    #[test]
    fn argmax_ignores_constant_shift() {
        let mut rng = Rng::new(3);
        let mut model = SelectorModel::new(ENCODING_DIM, 8, 4, InitScheme::default(), &mut rng).unwrap();
        let q = question(&[1.0, -2.0, 3.0, 7.5], vec![Instr::Lesser(2.0), Instr::Sum]);
        let (_, before) = hard_forward(&model, &q).unwrap();
        model.heads[2].bias.data_mut().iter_mut().for_each(|b| *b += 3.7);
        let (_, after) = hard_forward(&model, &q).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn selection_stays_in_unit_interval() {
        let mut rng = Rng::new(8);
        for _ in 0..20 {
            let model = SelectorModel::new(ENCODING_DIM, 5, 4, InitScheme::Simple { stddev: 2.0 }, &mut rng).unwrap();
            let column: Vec<f64> = (0..10).map(|_| rng.uniform_range(-10.0, 10.0)).collect();
            let q = question(&column, vec![Instr::Greater(-1.0), Instr::Lesser(3.0), Instr::Sum]);
            let (_, cache) = soft_forward(&model, &q).unwrap();
            for st in &cache.states {
                assert!(st.selection.iter().all(|&s| (0.0..=1.0).contains(&s)));
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(21);
        let model = SelectorModel::new(ENCODING_DIM, 4, 2, InitScheme::Simple { stddev: 0.5 }, &mut rng).unwrap();
        let q = question(&[-3.0, 0.5, 6.0], vec![Instr::Greater(-1.0), Instr::Sum]);
        let report = selector_gradient_check(&model, &q, SELECTOR_FD_STEP).unwrap();
        assert_eq!(report.checked, model.num_params());
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn dropout_backward_matches_masked_forward() {
        let mut rng = Rng::new(2);
        let mut model = SelectorModel::new(ENCODING_DIM, 6, 2, InitScheme::Simple { stddev: 0.5 }, &mut rng).unwrap();
        model.dropout_rate = 0.5;
        let q = question(&[-3.0, 0.5, 6.0, 2.0], vec![Instr::Count]);
        let (_, cache) = soft_forward_with(&model, &q, Some(&mut Rng::new(5))).unwrap();
        assert!(cache.dropout.is_some());
        let grads = soft_backward(&model, &cache, 1.0).unwrap();
        let mask = cache.dropout.as_ref().unwrap();
        // Dropped hidden units receive no encoder gradient.
        for (i, &m) in mask.iter().enumerate() {
            if m == 0.0 {
                assert_eq!(grads.get("encoder.bias").unwrap().data()[i], 0.0);
            }
        }
    }
}
