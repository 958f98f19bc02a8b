//! Rowdy sinusoidal activation `sin(w0 x) + sum_w n_w sin(alpha_w x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowdyActivationParams {
    pub omega0: f64,
    /// Scaling factors `n_w`.
    pub n: Vec<f64>,
    /// Frequency factors `alpha_w`.
    pub alpha: Vec<f64>,
}

impl RowdyActivationParams {
    pub fn new(omega0: f64, n: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return Err(Error::InvalidConfig(format!("omega0 must be positive, got {omega0}")));
        }
        if n.len() != alpha.len() {
            return Err(Error::ShapeMismatch(format!(
                "rowdy n has {} terms but alpha has {}",
                n.len(),
                alpha.len()
            )));
        }
        Ok(RowdyActivationParams { omega0, n, alpha })
    }

    /// `terms` extra sinusoids with `n_w = n_init` and `alpha_w = w`.
    pub fn initial(omega0: f64, terms: usize, n_init: f64) -> Result<Self> {
        Self::new(omega0, vec![n_init; terms], (1..=terms).map(|w| w as f64).collect())
    }

    /// Plain `sin(omega0 x)`.
    pub fn sinusoidal(omega0: f64) -> Result<Self> {
        Self::new(omega0, Vec::new(), Vec::new())
    }

    pub fn terms(&self) -> usize {
        self.n.len()
    }

    /// `[sigma, sigma', sigma'', sigma''']` at `x`.
    pub fn derivatives(&self, x: f64) -> [f64; 4] {
        let w0 = self.omega0;
        let (s, c) = (w0 * x).sin_cos();
        let mut d = [s, w0 * c, -w0 * w0 * s, -w0 * w0 * w0 * c];
        for (&n, &a) in self.n.iter().zip(&self.alpha) {
            let (s, c) = (a * x).sin_cos();
            d[0] += n * s;
            d[1] += n * a * c;
            d[2] -= n * a * a * s;
            d[3] -= n * a * a * a * c;
        }
        d
    }
}

/// `order`-th derivative of the activation at `x`, for `order` in `0..=3`.
///
/// # Panics
/// If `order > 3`.
pub fn rowdy_eval(x: f64, params: &RowdyActivationParams, order: usize) -> f64 {
    assert!(order <= 3, "rowdy_eval supports derivative orders 0 to 3");
    params.derivatives(x)[order]
}
