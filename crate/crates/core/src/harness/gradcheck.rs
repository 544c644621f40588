//! Finite-difference checks over randomly drawn small models.

use crate::error::Result;
use crate::init::{initialize, InitScheme};
use crate::nn::{gradient_check, MlpModel, DEFAULT_FD_STEP};
use crate::programmer::{selector_gradient_check, SelectorModel, SELECTOR_FD_STEP};
use crate::rng::Rng;
use crate::tasks::table::{generate_table_task, ENCODING_DIM};
use crate::tensor::gaussian_tensor;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheckSummary {
    pub mlps: usize,
    pub mlp_max_error: f64,
    pub mlp_max_raw_error: f64,
    pub mlp_checked: usize,
    pub mlp_skipped_at_kinks: usize,
    pub selectors: usize,
    pub selector_checked: usize,
    pub selector_max_error: f64,
    pub selector_max_raw_error: f64,
    /// Largest absolute difference over both model families.
    pub max_abs_error: f64,
}

impl GradCheckSummary {
    pub fn max_error(&self) -> f64 {
        self.mlp_max_error.max(self.selector_max_error)
    }
}

/// A random MLP with 1 to 4 affine layers of width 2 to 8.
pub fn random_mlp(rng: &mut Rng) -> Result<MlpModel> {
    let layers = 1 + rng.below(4);
    let widths: Vec<usize> = (0..=layers).map(|_| 2 + rng.below(7)).collect();
    let dims: Vec<(usize, usize)> = widths.windows(2).map(|w| (w[0], w[1])).collect();
    let mut model = MlpModel::new(initialize(InitScheme::Simple { stddev: 0.5 }, &dims, rng)?, 0.0)?;
    // Nonzero biases so that no unit sits exactly at a kink.
    for layer in &mut model.layers {
        layer.bias = gaussian_tensor(rng, layer.bias.shape(), 0.0, 0.1)?;
    }
    Ok(model)
}

/// Checks `mlps` random MLPs (central differences, kink-crossing parameters
/// skipped) and `selectors` random selectors (3-row columns, `H = 4`,
/// `T = 2`; extrapolated central differences).
pub fn run_gradient_checks(seed: u64, mlps: usize, selectors: usize) -> Result<GradCheckSummary> {
    let mut rng = Rng::new(seed);
    let mut summary = GradCheckSummary {
        mlps,
        selectors,
        ..Default::default()
    };
    for _ in 0..mlps {
        let model = random_mlp(&mut rng)?;
        let batch = 1 + rng.below(4);
        let x = gaussian_tensor(&mut rng, &[batch, model.input_dim()], 0.0, 1.0)?;
        let labels: Vec<usize> = (0..batch).map(|_| rng.below(model.output_dim())).collect();
        let report = gradient_check(&model, &x, &labels, DEFAULT_FD_STEP)?;
        summary.mlp_max_error = summary.mlp_max_error.max(report.max_relative_error);
        summary.mlp_max_raw_error = summary.mlp_max_raw_error.max(report.max_raw_relative_error);
        summary.max_abs_error = summary.max_abs_error.max(report.max_abs_error);
        summary.mlp_checked += report.checked;
        summary.mlp_skipped_at_kinks += report.skipped_at_kinks;
    }
    for _ in 0..selectors {
        let model = SelectorModel::new(ENCODING_DIM, 4, 2, InitScheme::Simple { stddev: 0.5 }, &mut rng)?;
        let question = generate_table_task(&mut rng, 1, 3, 1..=2)?.questions.remove(0);
        let report = selector_gradient_check(&model, &question, SELECTOR_FD_STEP)?;
        summary.selector_max_error = summary.selector_max_error.max(report.max_relative_error);
        summary.selector_max_raw_error = summary.selector_max_raw_error.max(report.max_raw_relative_error);
        summary.max_abs_error = summary.max_abs_error.max(report.max_abs_error);
        summary.selector_checked += report.checked;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_models_are_small() {
        let mut rng = Rng::new(1);
        for _ in 0..30 {
            let m = random_mlp(&mut rng).unwrap();
            assert!((1..=4).contains(&m.layers.len()));
            assert!(m.dims().iter().all(|&(a, b)| (2..=8).contains(&a) && (2..=8).contains(&b)));
        }
    }

    #[test]
    fn a_few_checks_pass() {
        let s = run_gradient_checks(5, 5, 3).unwrap();
        assert!(s.mlp_checked > 0);
        assert!(s.max_error() < 1e-6, "{s:?}");
    }
}
