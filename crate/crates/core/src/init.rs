//! Weight initialization schemes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::AffineLayer;
use crate::rng::Rng;
use crate::tensor::{gaussian_tensor, Tensor};

pub const SIMPLE_INIT_STDDEV: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitScheme {
    /// `N(0, stddev^2)` weights.
    Simple { stddev: f64 },
    Zero,
    /// `N(0, 2 / fan_in)`.
    He,
    /// `N(0, (g / sqrt(fan_in))^2)` with a depth-dependent ReLU gain.
    Sussillo,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Simple {
            stddev: SIMPLE_INIT_STDDEV,
        }
    }
}

impl InitScheme {
    pub fn name(&self) -> &'static str {
        match self {
            InitScheme::Simple { .. } => "simple",
            InitScheme::Zero => "zero",
            InitScheme::He => "he",
            InitScheme::Sussillo => "sussillo",
        }
    }

    /// Weight stddev for one layer of a `depth`-layer network.
    pub fn weight_stddev(&self, fan_in: usize, depth: usize) -> f64 {
        match *self {
            InitScheme::Simple { stddev } => stddev,
            InitScheme::Zero => 0.0,
            InitScheme::He => (2.0 / fan_in as f64).sqrt(),
            InitScheme::Sussillo => sussillo_gain(depth) / (fan_in as f64).sqrt(),
        }
    }
}

/// Random-walk ReLU gain `sqrt(2) * exp(1.2 / (max(depth, 6) - 2.4))`.
pub fn sussillo_gain(depth: usize) -> f64 {
    let d = depth.max(6) as f64;
    std::f64::consts::SQRT_2 * (1.2 / (d - 2.4)).exp()
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simple" => Ok(InitScheme::default()),
            "zero" => Ok(InitScheme::Zero),
            "he" => Ok(InitScheme::He),
            "sussillo" => Ok(InitScheme::Sussillo),
            other => Err(Error::Config(format!(
                "unknown init scheme {other:?} (expected simple|zero|he|sussillo)"
            ))),
        }
    }
}

/// Builds layers for `dims = [(fan_in, fan_out), ...]`; biases start at zero.
pub fn initialize(
    scheme: InitScheme,
    dims: &[(usize, usize)],
    rng: &mut Rng,
) -> Result<Vec<AffineLayer>> {
    if dims.is_empty() {
        return Err(Error::Argument("no layer dimensions given".into()));
    }
    if let Some(w) = dims.windows(2).find(|w| w[0].1 != w[1].0) {
        return Err(Error::Argument(format!(
            "layer dims do not chain: {:?} then {:?}",
            w[0], w[1]
        )));
    }
    if let InitScheme::Simple { stddev } = scheme {
        if !(stddev >= 0.0) {
            return Err(Error::Argument(format!("negative init stddev {stddev}")));
        }
    }
    let depth = dims.len();
    dims.iter()
        .map(|&(fan_in, fan_out)| {
            let sd = scheme.weight_stddev(fan_in, depth);
            let weights = gaussian_tensor(rng, &[fan_in, fan_out], 0.0, sd)?;
            AffineLayer::new(weights, Tensor::zeros(&[fan_out]))
        })
        .collect()
}

/// `input -> hidden x depth -> output` layer dimensions.
pub fn mlp_dims(input: usize, hidden: usize, hidden_layers: usize, output: usize) -> Vec<(usize, usize)> {
    let mut widths = vec![input];
    widths.extend(std::iter::repeat_n(hidden, hidden_layers));
    widths.push(output);
    widths.windows(2).map(|w| (w[0], w[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(layers: &[AffineLayer]) -> Vec<f64> {
        layers
            .iter()
            .flat_map(|l| l.weights.data().iter().copied())
            .collect()
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn zero_init_is_exactly_zero() {
        let layers = initialize(InitScheme::Zero, &mlp_dims(5, 4, 3, 2), &mut Rng::new(1)).unwrap();
        for l in &layers {
            assert!(l.weights.data().iter().all(|&v| v == 0.0));
            assert!(l.bias.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn simple_init_moments() {
        // sd(s) ~ 0.1 / sqrt(2e5) = 2.2e-4, so 3 sigma ~ 6.7e-4 => [0.0993, 0.1007].
        let layers = initialize(InitScheme::default(), &[(100, 1000)], &mut Rng::new(2)).unwrap();
        let w = weights(&layers);
        assert_eq!(w.len(), 100_000);
        let (mean, sd) = moments(&w);
        assert!((0.0993..=0.1007).contains(&sd), "{sd}");
        assert!(mean.abs() < 4.0 * 0.1 / (w.len() as f64).sqrt());
        assert!(layers[0].bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn he_stddev_closed_form() {
        assert!((InitScheme::He.weight_stddev(50, 3) - 0.2).abs() < 1e-15);
        let layers = initialize(InitScheme::He, &[(50, 2000)], &mut Rng::new(3)).unwrap();
        let (mean, sd) = moments(&weights(&layers));
        assert!((sd - 0.2).abs() < 3.0 * 0.2 / (2.0 * 100_000f64).sqrt());
        assert!(mean.abs() < 4.0 * 0.2 / (100_000f64).sqrt());
    }

    #[test]
    fn sussillo_gain_values() {
        // Depth clamps at 6.
        assert_eq!(sussillo_gain(2), sussillo_gain(6));
        let g21 = sussillo_gain(21);
        assert!((g21 - std::f64::consts::SQRT_2 * (1.2f64 / 18.6).exp()).abs() < 1e-15);
        assert!(g21 > std::f64::consts::SQRT_2);
        let sd = InitScheme::Sussillo.weight_stddev(50, 21);
        assert!((sd - g21 / 50f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_params() {
        let dims = mlp_dims(6, 5, 2, 3);
        for scheme in [InitScheme::default(), InitScheme::He, InitScheme::Sussillo] {
            let a = initialize(scheme, &dims, &mut Rng::new(9)).unwrap();
            let b = initialize(scheme, &dims, &mut Rng::new(9)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(initialize(InitScheme::He, &[], &mut Rng::new(0)).is_err());
        assert!(initialize(InitScheme::He, &[(3, 4), (5, 2)], &mut Rng::new(0)).is_err());
    }

    #[test]
    fn parse_names() {
        for name in ["simple", "zero", "he", "sussillo"] {
            let s: InitScheme = name.parse().unwrap();
            assert_eq!(s.name(), name);
        }
        assert!("xavier".parse::<InitScheme>().is_err());
    }

    #[test]
    fn mlp_dims_chain() {
        assert_eq!(mlp_dims(784, 50, 2, 10), vec![(784, 50), (50, 50), (50, 10)]);
        assert_eq!(mlp_dims(4, 9, 0, 2), vec![(4, 2)]);
    }
}
