//! Feedforward ReLU networks with hand-written backward passes.
//!
//! Weights are stored `fan_in x fan_out`, so a batch `X` (rows are examples)
//! maps to `X W + b`. Hidden layers use ReLU and optional inverted dropout;
//! the last affine layer emits raw logits.

use crate::error::{Error, Result};
use crate::params::{GradientSet, Parameterized};
use crate::rng::Rng;
use crate::tensor::{gemm, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl AffineLayer {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        if weights.shape().len() != 2 || bias.shape() != [weights.cols()] {
            return Err(Error::Shape {
                op: "affine layer",
                left: weights.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    /// `x W + b` for a batch `x` of shape `(n, fan_in)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.cols() != self.fan_in() {
            return Err(Error::Shape {
                op: "affine forward",
                left: x.shape().to_vec(),
                right: self.weights.shape().to_vec(),
            });
        }
        let (n, k, m) = (x.rows(), self.fan_in(), self.fan_out());
        let mut out = Vec::with_capacity(n * m);
        for _ in 0..n {
            out.extend_from_slice(self.bias.data());
        }
        gemm(n, k, m, x.data(), false, self.weights.data(), false, 1.0, &mut out);
        Tensor::matrix(n, m, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<AffineLayer>,
    /// Inverted-dropout rate on hidden activations; 0 disables dropout.
    pub dropout_rate: f64,
}

impl MlpModel {
    pub fn new(layers: Vec<AffineLayer>, dropout_rate: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("model needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Shape {
                    op: "layer chain",
                    left: pair[0].weights.shape().to_vec(),
                    right: pair[1].weights.shape().to_vec(),
                });
            }
        }
        check_dropout_rate(dropout_rate)?;
        Ok(Self {
            layers,
            dropout_rate,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.fan_in(), l.fan_out()))
            .collect()
    }
}

impl Parameterized for MlpModel {
    fn param_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}.weight"), format!("layer{i}.bias")])
            .collect()
    }

    fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weights, &l.bias])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Tensor,
    /// Pre-activation of each hidden layer.
    pub pre: Vec<Tensor>,
    /// Hidden output after ReLU and dropout (the next layer's input).
    pub post: Vec<Tensor>,
    /// 0/1 keep-masks per hidden layer when dropout was applied.
    pub masks: Vec<Option<Tensor>>,
    pub logits: Tensor,
    pub dropout_scale: f64,
}

fn check_dropout_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )))
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Masks `upstream` by `preactivation > 0`; the derivative at exactly 0 is 0.
pub fn relu_backward(upstream: &Tensor, preactivation: &Tensor) -> Result<Tensor> {
    upstream.check_same_shape(preactivation, "relu_backward")?;
    let data = upstream
        .data()
        .iter()
        .zip(preactivation.data())
        .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(upstream.shape().to_vec(), data)
}

/// Loss and logit gradient for a single example.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Argument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Mean cross-entropy over a batch and the gradient of that mean.
pub fn batch_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 || logits.rows() != labels.len() {
        return Err(Error::Consistency(format!(
            "logits {:?} vs {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = Vec::with_capacity(logits.len());
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(logits.row(i), label)?;
        loss += l;
        grad.extend(g.into_iter().map(|v| v * inv_n));
    }
    Ok((loss * inv_n, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Inverted dropout. Returns the output and the 0/1 keep-mask.
pub fn dropout_forward(
    x: &Tensor,
    rate: f64,
    rng: &mut Rng,
    training: bool,
) -> Result<(Tensor, Tensor)> {
    check_dropout_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((x.clone(), Tensor::full(x.shape(), 1.0)));
    }
    let scale = 1.0 / (1.0 - rate);
    let keep = x
        .data()
        .iter()
        .map(|_| if rng.uniform() < rate { 0.0 } else { 1.0 })
        .collect();
    let mask = Tensor::new(x.shape().to_vec(), keep)?;
    let data = x
        .data()
        .iter()
        .zip(mask.data())
        .map(|(v, m)| v * m * scale)
        .collect();
    Ok((Tensor::new(x.shape().to_vec(), data)?, mask))
}

pub fn mlp_forward(
    model: &MlpModel,
    batch: &Tensor,
    rng: &mut Rng,
    training: bool,
) -> Result<(Tensor, ForwardCache)> {
    if batch.shape().len() != 2 || batch.cols() != model.input_dim() {
        return Err(Error::Shape {
            op: "mlp_forward",
            left: batch.shape().to_vec(),
            right: model.layers[0].weights.shape().to_vec(),
        });
    }
    let last = model.layers.len() - 1;
    let use_dropout = training && model.dropout_rate > 0.0;
    let mut pre = Vec::with_capacity(last);
    let mut post: Vec<Tensor> = Vec::with_capacity(last);
    let mut masks = Vec::with_capacity(last);
    for (i, layer) in model.layers[..last].iter().enumerate() {
        let input = if i == 0 { batch } else { &post[i - 1] };
        let z = layer.forward(input)?;
        let h = relu(&z);
        let (h, mask) = if use_dropout {
            let (h, m) = dropout_forward(&h, model.dropout_rate, rng, true)?;
            (h, Some(m))
        } else {
            (h, None)
        };
        pre.push(z);
        post.push(h);
        masks.push(mask);
    }
    let logits = model.layers[last].forward(post.last().unwrap_or(batch))?;
    let cache = ForwardCache {
        input: batch.clone(),
        pre,
        post,
        masks,
        logits: logits.clone(),
        dropout_scale: 1.0 / (1.0 - model.dropout_rate),
    };
    Ok((logits, cache))
}

/// Gradients of the loss whose logit gradient is `grad_logits`.
///
/// Pass the gradient of the batch-mean loss (as returned by
/// [`batch_cross_entropy`]) to get mean-loss parameter gradients.
pub fn mlp_backward(
    model: &MlpModel,
    cache: &ForwardCache,
    grad_logits: &Tensor,
) -> Result<GradientSet> {
    let n_layers = model.layers.len();
    if cache.pre.len() != n_layers - 1 || !grad_logits.same_shape(&cache.logits) {
        return Err(Error::Consistency(format!(
            "cache from a {}-layer model with logits {:?}, model has {} layers, grad {:?}",
            cache.pre.len() + 1,
            cache.logits.shape(),
            n_layers,
            grad_logits.shape()
        )));
    }
    let batch = cache.input.rows();
    let mut grads: Vec<Tensor> = Vec::with_capacity(2 * n_layers);
    let mut delta = grad_logits.clone();
    for i in (0..n_layers).rev() {
        let layer = &model.layers[i];
        let input = if i == 0 { &cache.input } else { &cache.post[i - 1] };
        let (fan_in, fan_out) = (layer.fan_in(), layer.fan_out());
        if input.cols() != fan_in || delta.cols() != fan_out {
            return Err(Error::Consistency("cache does not match model".into()));
        }

        let mut dw = vec![0.0; fan_in * fan_out];
        gemm(fan_in, batch, fan_out, input.data(), true, delta.data(), false, 0.0, &mut dw);
        let mut db = vec![0.0; fan_out];
        for r in 0..batch {
            for (acc, v) in db.iter_mut().zip(delta.row(r)) {
                *acc += v;
            }
        }
        grads.push(Tensor::vector(db));
        grads.push(Tensor::matrix(fan_in, fan_out, dw)?);

        if i > 0 {
            let mut upstream = vec![0.0; batch * fan_in];
            gemm(
                batch,
                fan_out,
                fan_in,
                delta.data(),
                false,
                layer.weights.data(),
                true,
                0.0,
                &mut upstream,
            );
            if let Some(mask) = &cache.masks[i - 1] {
                for (u, m) in upstream.iter_mut().zip(mask.data()) {
                    *u *= m * cache.dropout_scale;
                }
            }
            for (u, &z) in upstream.iter_mut().zip(cache.pre[i - 1].data()) {
                if z <= 0.0 {
                    *u = 0.0;
                }
            }
            delta = Tensor::matrix(batch, fan_in, upstream)?;
        }
    }
    grads.reverse();
    Ok(GradientSet::new(model.param_names(), grads))
}

/// Mean cross-entropy of the model on a batch, dropout off.
pub fn mlp_loss(model: &MlpModel, batch: &Tensor, labels: &[usize]) -> Result<f64> {
    let (logits, _) = mlp_forward(model, batch, &mut Rng::new(0), false)?;
    Ok(batch_cross_entropy(&logits, labels)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Largest relative error without the floor.
    pub max_raw_relative_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// Parameters skipped because a `±h` perturbation flipped a ReLU.
    pub skipped_at_kinks: usize,
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Components smaller than this are compared in absolute terms: the
/// denominator of [`relative_error`] never drops below it.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// `|a - n| / max(|a|, |n|)` without a floor; 0 when both are 0.
pub fn raw_relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Derivative of `f` at 0 by Ridders' method: central differences at steps
/// `h0, h0/1.4, ...`, Richardson-extrapolated, stopping when the error
/// estimate grows. Returns the estimate and its error bound.
pub fn extrapolated_derivative(mut f: impl FnMut(f64) -> f64, h0: f64) -> (f64, f64) {
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    const NTAB: usize = 10;
    const SAFE: f64 = 2.0;
    let mut table = [[0.0f64; NTAB]; NTAB];
    let mut h = h0;
    table[0][0] = (f(h) - f(-h)) / (2.0 * h);
    let (mut best, mut err) = (table[0][0], f64::MAX);
    for i in 1..NTAB {
        h /= CON;
        table[0][i] = (f(h) - f(-h)) / (2.0 * h);
        let mut fac = CON2;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= CON2;
            let e = (table[j][i] - table[j - 1][i])
                .abs()
                .max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= SAFE * err {
            break;
        }
    }
    (best, err)
}

fn relu_pattern(model: &MlpModel, batch: &Tensor) -> Result<Vec<bool>> {
    let (_, cache) = mlp_forward(model, batch, &mut Rng::new(0), false)?;
    Ok(cache
        .pre
        .iter()
        .flat_map(|z| z.data().iter().map(|&v| v > 0.0))
        .collect())
}

/// Central-difference check of [`mlp_backward`] on the mean cross-entropy.
pub fn gradient_check(
    model: &MlpModel,
    batch: &Tensor,
    labels: &[usize],
    h: f64,
) -> Result<GradCheckReport> {
    let (logits, cache) = mlp_forward(model, batch, &mut Rng::new(0), false)?;
    let (_, grad_logits) = batch_cross_entropy(&logits, labels)?;
    let analytic = mlp_backward(model, &cache, &grad_logits)?;
    let base_pattern = relu_pattern(model, batch)?;

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_raw_relative_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
        skipped_at_kinks: 0,
    };
    let n_params = probe.params().len();
    for p in 0..n_params {
        for j in 0..analytic.tensors()[p].len() {
            let original = probe.params()[p].data()[j];
            probe.params_mut()[p].data_mut()[j] = original + h;
            let plus = mlp_loss(&probe, batch, labels)?;
            let plus_pattern = relu_pattern(&probe, batch)?;
            probe.params_mut()[p].data_mut()[j] = original - h;
            let minus = mlp_loss(&probe, batch, labels)?;
            let minus_pattern = relu_pattern(&probe, batch)?;
            probe.params_mut()[p].data_mut()[j] = original;

            if plus_pattern != base_pattern || minus_pattern != base_pattern {
                report.skipped_at_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.tensors()[p].data()[j];
            report.max_relative_error = report.max_relative_error.max(relative_error(a, numeric));
            report.max_raw_relative_error = report.max_raw_relative_error.max(raw_relative_error(a, numeric));
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            report.checked += 1;
        }
    }
    Ok(report)
}

pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return None;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

const EVAL_CHUNK: usize = 1000;

/// Fraction of rows whose argmax logit equals the label, dropout off.
///
/// Rows with non-finite logits count as wrong.
pub fn accuracy(model: &MlpModel, inputs: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Argument("accuracy of an empty set".into()));
    }
    if inputs.shape().len() != 2 || inputs.rows() != labels.len() {
        return Err(Error::Consistency(format!(
            "inputs {:?} vs {} labels",
            inputs.shape(),
            labels.len()
        )));
    }
    let d = inputs.cols();
    let mut rng = Rng::new(0);
    let mut correct = 0usize;
    for start in (0..labels.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(labels.len());
        let chunk = Tensor::matrix(end - start, d, inputs.data()[start * d..end * d].to_vec())?;
        let (logits, _) = mlp_forward(model, &chunk, &mut rng, false)?;
        correct += (0..end - start)
            .filter(|&r| argmax(logits.row(r)) == Some(labels[start + r]))
            .count();
    }
    Ok(correct as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gaussian_tensor;

    fn random_model(rng: &mut Rng, dims: &[usize], scale: f64) -> MlpModel {
        let layers = dims
            .windows(2)
            .map(|w| {
                AffineLayer::new(
                    gaussian_tensor(rng, &[w[0], w[1]], 0.0, scale).unwrap(),
                    gaussian_tensor(rng, &[w[1]], 0.0, scale).unwrap(),
                )
                .unwrap()
            })
            .collect();
        MlpModel::new(layers, 0.0).unwrap()
    }

    #[test]
    fn relu_cases() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(relu(&relu(&x)), relu(&x));
        let neg = Tensor::vector(vec![-3.0, -0.5]);
        assert_eq!(relu(&neg).data(), &[0.0, 0.0]);
    }

    #[test]
    fn relu_backward_cases() {
        let up = Tensor::vector(vec![1.0, 1.0, 1.0]);
        let z = Tensor::vector(vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu_backward(&up, &z).unwrap().data(), &[0.0, 0.0, 1.0]);
        let pos = Tensor::vector(vec![0.1, 2.0, 3.0]);
        let up2 = Tensor::vector(vec![0.3, -0.2, 5.0]);
        assert_eq!(relu_backward(&up2, &pos).unwrap(), up2);
        let zeros = Tensor::zeros(&[3]);
        assert_eq!(relu_backward(&zeros, &z).unwrap(), zeros);
        assert!(relu_backward(&up, &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn cross_entropy_uniform() {
        let (loss, grad) = softmax_cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(grad, vec![-0.5, 0.5]);
        let (loss10, _) = softmax_cross_entropy(&[1.5; 10], 3).unwrap();
        assert!((loss10 - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_stable_and_sums_to_zero() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
        let (loss, grad) = softmax_cross_entropy(&[0.3, -2.0, 7.1, 0.0], 1).unwrap();
        assert!(loss >= 0.0);
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        assert!(softmax_cross_entropy(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn dropout_identity_cases() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let mut rng = Rng::new(1);
        let (y, m) = dropout_forward(&x, 0.0, &mut rng, true).unwrap();
        assert_eq!(y, x);
        assert!(m.data().iter().all(|&v| v == 1.0));
        let (y, _) = dropout_forward(&x, 0.7, &mut rng, false).unwrap();
        assert_eq!(y, x);
        assert!(dropout_forward(&x, 1.0, &mut rng, true).is_err());
        assert!(dropout_forward(&x, -0.1, &mut rng, true).is_err());
    }

    #[test]
    fn dropout_survival_fraction() {
        // Binomial(1e5, 0.5): 3 sigma = 3 * sqrt(0.25 / 1e5) ~ 0.0047.
        let n = 100_000;
        let x = Tensor::full(&[n], 1.0);
        let (y, mask) = dropout_forward(&x, 0.5, &mut Rng::new(8), true).unwrap();
        let kept = mask.data().iter().sum::<f64>() / n as f64;
        assert!((0.494..=0.506).contains(&kept), "{kept}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn dropout_preserves_expectation() {
        // E[dropout(x)] = x; per element the sample mean over 1e5 trials has
        // sd = x * sqrt(rate / (1 - rate) / 1e5).
        let x = Tensor::vector(vec![0.5, -1.5, 2.0]);
        let rate = 0.3;
        let trials = 100_000;
        let mut rng = Rng::new(19);
        let mut sums = [0.0; 3];
        for _ in 0..trials {
            let (y, _) = dropout_forward(&x, rate, &mut rng, true).unwrap();
            for (s, v) in sums.iter_mut().zip(y.data()) {
                *s += v;
            }
        }
        for (s, &xi) in sums.iter().zip(x.data()) {
            let mean = s / trials as f64;
            let sd = xi.abs() * (rate / (1.0 - rate) / trials as f64).sqrt();
            assert!((mean - xi).abs() < 3.0 * sd, "{mean} vs {xi}");
        }
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let model = MlpModel::new(
            vec![AffineLayer::zeros(3, 4), AffineLayer::zeros(4, 10)],
            0.0,
        )
        .unwrap();
        let x = Tensor::from_rows(&[&[1.0, -2.0, 3.0], &[0.5, 0.5, 9.0]]);
        let (logits, _) = mlp_forward(&model, &x, &mut Rng::new(0), false).unwrap();
        assert_eq!(logits.shape(), &[2, 10]);
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_chain_forward() {
        let eye = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let model = MlpModel::new(
            vec![
                AffineLayer::new(eye.clone(), Tensor::vector(vec![1.0, 1.0])).unwrap(),
                AffineLayer::new(eye, Tensor::zeros(&[2])).unwrap(),
            ],
            0.0,
        )
        .unwrap();
        let x = Tensor::from_rows(&[&[1.0, 2.0]]);
        let (logits, _) = mlp_forward(&model, &x, &mut Rng::new(0), false).unwrap();
        assert_eq!(logits.data(), &[2.0, 3.0]);
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut rng = Rng::new(4);
        let mut model = random_model(&mut rng, &[5, 6, 3], 0.5);
        model.dropout_rate = 0.5;
        let x = gaussian_tensor(&mut rng, &[4, 5], 0.0, 1.0).unwrap();
        let (a, _) = mlp_forward(&model, &x, &mut Rng::new(1), false).unwrap();
        let (b, _) = mlp_forward(&model, &x, &mut Rng::new(2), false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let model = MlpModel::new(vec![AffineLayer::zeros(3, 2)], 0.0).unwrap();
        let x = Tensor::zeros(&[1, 4]);
        assert!(mlp_forward(&model, &x, &mut Rng::new(0), false).is_err());
        assert!(MlpModel::new(
            vec![AffineLayer::zeros(3, 2), AffineLayer::zeros(3, 2)],
            0.0
        )
        .is_err());
    }

    #[test]
    fn backward_zero_upstream() {
        let mut rng = Rng::new(5);
        let model = random_model(&mut rng, &[3, 4, 2], 0.5);
        let x = gaussian_tensor(&mut rng, &[2, 3], 0.0, 1.0).unwrap();
        let (logits, cache) = mlp_forward(&model, &x, &mut rng, false).unwrap();
        let g = mlp_backward(&model, &cache, &Tensor::zeros_like(&logits)).unwrap();
        assert!(g.tensors().iter().all(|t| t.max_abs() == 0.0));
    }

    #[test]
    fn backward_single_layer_outer_product() {
        let mut rng = Rng::new(6);
        let model = random_model(&mut rng, &[2, 2], 1.0);
        let x = Tensor::from_rows(&[&[1.0, 0.0]]);
        let (_, cache) = mlp_forward(&model, &x, &mut rng, false).unwrap();
        let (g1, g2) = (0.7, -1.3);
        let grads = mlp_backward(&model, &cache, &Tensor::from_rows(&[&[g1, g2]])).unwrap();
        let dw = grads.get("layer0.weight").unwrap();
        assert_eq!(dw.row(0), &[g1, g2]);
        assert_eq!(dw.row(1), &[0.0, 0.0]);
        assert_eq!(grads.get("layer0.bias").unwrap().data(), &[g1, g2]);
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let mut rng = Rng::new(7);
        let a = random_model(&mut rng, &[3, 4, 2], 0.5);
        let b = random_model(&mut rng, &[3, 2], 0.5);
        let x = gaussian_tensor(&mut rng, &[2, 3], 0.0, 1.0).unwrap();
        let (logits, cache) = mlp_forward(&a, &x, &mut rng, false).unwrap();
        assert!(mlp_backward(&b, &cache, &logits).is_err());
    }

    #[test]
    fn extrapolated_derivative_of_smooth_functions() {
        let (d, _) = extrapolated_derivative(|h| (1.3 + h).exp(), 0.1);
        assert!((d - 1.3f64.exp()).abs() < 1e-11);
        let (d, _) = extrapolated_derivative(|h| (10.0 * (0.2 + h)).tanh(), 0.01);
        let t = 2.0f64.tanh();
        assert!((d - 10.0 * (1.0 - t * t)).abs() < 1e-10);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert_eq!(relative_error(2e-9, 1e-9), 1e-9 / RELATIVE_ERROR_FLOOR);
        assert_eq!(raw_relative_error(2e-9, 1e-9), 0.5);
        assert_eq!(raw_relative_error(0.0, 0.0), 0.0);
    }

    #[test]
    fn gradient_check_linear_model() {
        let mut rng = Rng::new(12);
        let model = random_model(&mut rng, &[4, 3], 0.7);
        let x = gaussian_tensor(&mut rng, &[5, 4], 0.0, 1.0).unwrap();
        let labels = [0, 2, 1, 1, 0];
        let report = gradient_check(&model, &x, &labels, DEFAULT_FD_STEP).unwrap();
        assert_eq!(report.checked, 15);
        assert!(report.max_relative_error < 1e-8, "{report:?}");
    }

    #[test]
    fn gradient_check_relu_net() {
        let mut rng = Rng::new(13);
        let model = random_model(&mut rng, &[4, 5, 5, 3], 0.8);
        let x = gaussian_tensor(&mut rng, &[6, 4], 0.0, 1.0).unwrap();
        let labels = [0, 1, 2, 0, 1, 2];
        let report = gradient_check(&model, &x, &labels, DEFAULT_FD_STEP).unwrap();
        assert!(report.checked > 0);
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn accuracy_cases() {
        // Constant predictor: output bias favors class 0.
        let mut layer = AffineLayer::zeros(2, 10);
        layer.bias.data_mut()[0] = 1.0;
        let model = MlpModel::new(vec![layer], 0.0).unwrap();
        let inputs = Tensor::zeros(&[100, 2]);
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        assert!((accuracy(&model, &inputs, &labels).unwrap() - 0.1).abs() < 1e-12);

        let eye = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let model = MlpModel::new(
            vec![AffineLayer::new(eye, Tensor::zeros(&[2])).unwrap()],
            0.0,
        )
        .unwrap();
        let inputs = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 3.0], &[5.0, 1.0]]);
        assert_eq!(accuracy(&model, &inputs, &[0, 1, 0]).unwrap(), 1.0);
        assert!(accuracy(&model, &Tensor::zeros(&[0, 2]), &[]).is_err());
    }

    #[test]
    fn argmax_ties_and_nan() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[1.0, f64::NAN]), None);
        assert_eq!(argmax(&[]), None);
    }
}
