use std::f64::consts::PI;

use log::{debug, info};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{init_params, objective, points_matrix, LossTerms, ObservationSet, PdePass, PinnModel, Problem};
use crate::error::{Error, Result};
use crate::sma::fibonacci_directions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CollocationMode {
    #[default]
    FixedFibonacci,
    /// Fresh uniform directions every iteration.
    ResampledUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub lambda_pde: f64,
    pub collocation_count: usize,
    pub collocation_mode: CollocationMode,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub omega0_first: f64,
    pub omega0_hidden: f64,
    pub rowdy_w: usize,
    /// Initial value of every `n_w`.
    pub rowdy_n_init: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 10_000,
            lr0: 1e-4,
            lr_min: 0.0,
            lambda_pde: 1e-12,
            collocation_count: 512,
            collocation_mode: CollocationMode::FixedFibonacci,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            hidden_layers: 4,
            hidden_width: 512,
            omega0_first: 1.0,
            omega0_hidden: 5.0,
            rowdy_w: 6,
            rowdy_n_init: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.lr0 > 0.0) || !(self.lr_min >= 0.0) || self.lr_min > self.lr0 {
            return bad("learning rates need lr0 > 0 and 0 <= lr_min <= lr0");
        }
        if !(self.lambda_pde >= 0.0) || !self.lambda_pde.is_finite() {
            return bad("lambda_pde must be finite and non-negative");
        }
        if self.collocation_count == 0 {
            return bad("collocation_count must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("Adam needs betas in [0, 1) and eps > 0");
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return bad("network needs at least one hidden layer of nonzero width");
        }
        if !(self.omega0_first > 0.0) || !(self.omega0_hidden > 0.0) {
            return bad("omega0 values must be positive");
        }
        if !self.rowdy_n_init.is_finite() {
            return bad("rowdy_n_init must be finite");
        }
        Ok(())
    }
}

/// `lr_min + (lr0 - lr_min) (1 + cos(pi t / T)) / 2`.
pub fn cosine_lr(t: usize, config: &TrainConfig) -> f64 {
    let frac = t.min(config.iterations) as f64 / config.iterations as f64;
    config.lr_min + 0.5 * (config.lr0 - config.lr_min) * (1.0 + (PI * frac).cos())
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { beta1, beta2, eps, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

fn uniform_directions(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| loop {
            let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if r > 1e-12 {
                break [v[0] / r, v[1] / r, v[2] / r];
            }
        })
        .collect()
}

/// Full-batch Adam training.
///
/// Observations are divided by `max |p~|` before fitting; the returned model
/// carries that factor as `pressure_scale`. The trace holds the loss before
/// each update, in those normalised units. With `lambda_pde = 0` the
/// Helmholtz pass is skipped and its trace entry is 0.
pub fn train(obs: &ObservationSet, config: &TrainConfig) -> Result<(PinnModel, Vec<LossTerms>)> {
    config.validate()?;
    if obs.positions().is_empty() || obs.frequencies().is_empty() {
        return Err(Error::InvalidConfig("training needs at least one capsule and one wavenumber".into()));
    }
    let mut model = init_params(config, obs.frequencies(), obs.radius(), config.seed)?;
    let scale = match obs.max_abs() {
        m if m > 0.0 => m,
        _ => 1.0,
    };
    model.pressure_scale = scale;
    let problem = Problem::new(&model, obs, scale)?;
    let pde = if config.lambda_pde > 0.0 { PdePass::Evaluate } else { PdePass::Skip };

    let mut colloc_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xC011_0C47);
    let fixed: Array2<f64> = match config.collocation_mode {
        CollocationMode::FixedFibonacci => {
            let dirs: Vec<[f64; 3]> =
                fibonacci_directions(config.collocation_count).iter().map(|d| d.unit_vector()).collect();
            points_matrix(&dirs)
        }
        CollocationMode::ResampledUniform => Array2::zeros((3, 0)),
    };

    let mut theta = model.to_flat();
    let mut adam = Adam::new(theta.len(), config.adam_beta1, config.adam_beta2, config.adam_eps);
    let mut trace = Vec::with_capacity(config.iterations);
    info!(
        "training {} parameters on Q={} K={} for {} iterations",
        theta.len(),
        obs.positions().len(),
        obs.frequencies().len(),
        config.iterations
    );
    for t in 0..config.iterations {
        let resampled;
        let colloc = match config.collocation_mode {
            CollocationMode::FixedFibonacci => &fixed,
            CollocationMode::ResampledUniform => {
                resampled = points_matrix(&uniform_directions(&mut colloc_rng, config.collocation_count));
                &resampled
            }
        };
        let (terms, grad) = objective(&model, &problem, colloc, config.lambda_pde, pde, true);
        if !terms.total.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: t });
        }
        trace.push(terms);
        if t % 500 == 0 {
            debug!("iter {t}: total {:.6e} data {:.6e} pde {:.6e}", terms.total, terms.data, terms.pde);
        }
        let grad = grad.expect("gradient requested").to_flat();
        adam.step(&mut theta, &grad, cosine_lr(t, config));
        model.set_flat(&theta)?;
    }
    Ok((model, trace))
}
