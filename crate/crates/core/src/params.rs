//! Named parameter lists and their gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A model whose trainable tensors can be enumerated in a fixed order.
pub trait Parameterized {
    fn param_names(&self) -> Vec<String>;
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn zero_grads(&self) -> GradientSet {
        GradientSet::new(
            self.param_names(),
            self.params().into_iter().map(Tensor::zeros_like).collect(),
        )
    }
}

/// Gradients for one training step, one tensor per model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl GradientSet {
    pub fn new(names: Vec<String>, tensors: Vec<Tensor>) -> Self {
        assert_eq!(names.len(), tensors.len());
        Self { names, tensors }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn global_norm(&self) -> f64 {
        crate::tensor::global_norm(&self.tensors)
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(factor));
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Errors unless `params` lines up one-to-one with these gradients.
    pub fn check_matches(&self, params: &[&Tensor]) -> Result<()> {
        if params.len() != self.tensors.len() {
            return Err(Error::Consistency(format!(
                "{} gradients for {} parameters",
                self.tensors.len(),
                params.len()
            )));
        }
        for (p, g) in params.iter().zip(&self.tensors) {
            p.check_same_shape(g, "gradient")?;
        }
        Ok(())
    }
}
