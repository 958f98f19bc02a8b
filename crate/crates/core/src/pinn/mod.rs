//! Physics-informed sound field upsampling.
//!
//! Two parallel sinusoidal MLPs map a unit-sphere direction to the real and
//! imaginary parts of the pressure at all `K` wavenumbers. Training minimises
//! a data-fidelity term at the capsules plus a Helmholtz residual at
//! collocation points. Input derivatives and parameter gradients come from
//! the batched engine in [`net`].
//!
//! Inputs are positions divided by `coord_scale` (the sphere radius), so the
//! residual uses the scaled wavenumber `k * coord_scale`. Network outputs are
//! multiplied by `pressure_scale`.

mod net;
mod rowdy;
mod train;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sma::{ArrayGeometry, ComplexPressureField, Direction};

pub use net::{Activation, Layer, MlpParams};
pub use rowdy::{rowdy_eval, RowdyActivationParams};
pub use train::{cosine_lr, train, Adam, CollocationMode, TrainConfig};

use net::{backward_batch, forward_batch, value_and_laplacian, Channels};

#[derive(Debug, Clone, PartialEq)]
pub struct PinnModel {
    pub real_net: MlpParams,
    pub imag_net: MlpParams,
    /// Wavenumbers, rad/m.
    pub frequencies: Vec<f64>,
    pub radius: f64,
    pub coord_scale: f64,
    pub pressure_scale: f64,
}

impl PinnModel {
    pub fn new(
        real_net: MlpParams,
        imag_net: MlpParams,
        frequencies: Vec<f64>,
        radius: f64,
        coord_scale: f64,
        pressure_scale: f64,
    ) -> Result<Self> {
        let k = frequencies.len();
        if real_net.output_dim() != k || imag_net.output_dim() != k {
            return Err(Error::ShapeMismatch(format!(
                "networks emit {} and {} values for {k} wavenumbers",
                real_net.output_dim(),
                imag_net.output_dim()
            )));
        }
        if !(coord_scale > 0.0) || !(radius > 0.0) || !pressure_scale.is_finite() {
            return Err(Error::InvalidConfig("model scales must be positive and finite".into()));
        }
        Ok(PinnModel { real_net, imag_net, frequencies, radius, coord_scale, pressure_scale })
    }

    pub fn bin_count(&self) -> usize {
        self.frequencies.len()
    }

    pub fn param_count(&self) -> usize {
        self.real_net.param_count() + self.imag_net.param_count()
    }

    /// Real network parameters followed by the imaginary network's.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.real_net.write_flat(&mut out);
        self.imag_net.write_flat(&mut out);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let rest = self.real_net.read_flat(flat)?;
        let rest = self.imag_net.read_flat(rest)?;
        if !rest.is_empty() {
            return Err(Error::ShapeMismatch("parameter vector too long".into()));
        }
        Ok(())
    }

    fn kappa2(&self) -> Vec<f64> {
        self.frequencies.iter().map(|k| (k * self.coord_scale).powi(2)).collect()
    }
}

/// Capsule observations `p~(r_q, k_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    positions: Vec<Direction>,
    pressures: Vec<Complex64>,
    frequencies: Vec<f64>,
    radius: f64,
}

impl ObservationSet {
    /// `pressures` is `Q x K`, row-major.
    pub fn new(
        positions: Vec<Direction>,
        pressures: Vec<Complex64>,
        frequencies: Vec<f64>,
        radius: f64,
    ) -> Result<Self> {
        if pressures.len() != positions.len() * frequencies.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} pressures for {} positions and {} wavenumbers",
                pressures.len(),
                positions.len(),
                frequencies.len()
            )));
        }
        if pressures.iter().any(|p| !p.re.is_finite() || !p.im.is_finite())
            || frequencies.iter().any(|k| !k.is_finite())
        {
            return Err(Error::domain("observations must be finite"));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidGeometry(format!("radius {radius} must be positive")));
        }
        Ok(ObservationSet { positions, pressures, frequencies, radius })
    }

    pub fn from_field(field: &ComplexPressureField) -> Result<Self> {
        Self::new(
            field.geometry().capsules().to_vec(),
            field.pressures().to_vec(),
            field.wavenumbers().to_vec(),
            field.geometry().radius(),
        )
    }

    pub fn positions(&self) -> &[Direction] {
        &self.positions
    }

    pub fn pressures(&self) -> &[Complex64] {
        &self.pressures
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn max_abs(&self) -> f64 {
        self.pressures.iter().fold(0.0, |m, p| m.max(p.norm()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub data: f64,
    pub pde: f64,
}

/// Gradient with the same layout as the two networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradient {
    pub real_net: MlpParams,
    pub imag_net: MlpParams,
}

impl ModelGradient {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.real_net.write_flat(&mut out);
        self.imag_net.write_flat(&mut out);
        out
    }
}

fn uniform_layer(
    rng: &mut ChaCha8Rng,
    fan_in: usize,
    fan_out: usize,
    bound: f64,
    activation: Activation,
) -> Layer {
    let dist = Uniform::new_inclusive(-bound, bound);
    let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(rng));
    Layer { weights, biases: ndarray::Array1::zeros(fan_out), activation }
}

fn init_net(config: &TrainConfig, k: usize, rng: &mut ChaCha8Rng) -> Result<MlpParams> {
    let width = config.hidden_width;
    let mut layers = Vec::with_capacity(config.hidden_layers + 1);
    for l in 0..config.hidden_layers {
        let (fan_in, omega0) = if l == 0 { (3, config.omega0_first) } else { (width, config.omega0_hidden) };
        let bound = if l == 0 { 1.0 / fan_in as f64 } else { (6.0 / fan_in as f64).sqrt() / omega0 };
        let act = RowdyActivationParams::initial(omega0, config.rowdy_w, config.rowdy_n_init)?;
        layers.push(uniform_layer(rng, fan_in, width, bound, Activation::Rowdy(act)));
    }
    let fan_in = if config.hidden_layers == 0 { 3 } else { width };
    let bound = (6.0 / fan_in as f64).sqrt() / config.omega0_hidden;
    layers.push(uniform_layer(rng, fan_in, k, bound, Activation::Identity));
    MlpParams::new(layers)
}

/// Fresh model for `frequencies` (wavenumbers) on a sphere of `radius`.
///
/// First-layer weights are uniform in `±1/3`, later layers in
/// `±sqrt(6/fan_in)/omega0_hidden`, biases zero, `n_w = rowdy_n_init`,
/// `alpha_w = w`. The real network is drawn before the imaginary one.
pub fn init_params(config: &TrainConfig, frequencies: &[f64], radius: f64, seed: u64) -> Result<PinnModel> {
    config.validate()?;
    if frequencies.is_empty() {
        return Err(Error::InvalidConfig("model needs at least one wavenumber".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real_net = init_net(config, frequencies.len(), &mut rng)?;
    let imag_net = init_net(config, frequencies.len(), &mut rng)?;
    PinnModel::new(real_net, imag_net, frequencies.to_vec(), radius, radius, 1.0)
}

fn points_matrix(points: &[[f64; 3]]) -> Array2<f64> {
    Array2::from_shape_fn((3, points.len()), |(i, b)| points[b][i])
}

fn direction_points(dirs: &[Direction]) -> Vec<[f64; 3]> {
    dirs.iter().map(Direction::unit_vector).collect()
}

/// Real and imaginary outputs at a normalised position, times `pressure_scale`.
pub fn forward(model: &PinnModel, position: [f64; 3]) -> (Vec<f64>, Vec<f64>) {
    let x = points_matrix(&[position]);
    let eval = |net: &MlpParams| {
        let (out, _) = forward_batch(net, x.view(), Channels::Value, false);
        out.column(0).iter().map(|v| v * model.pressure_scale).collect::<Vec<_>>()
    };
    (eval(&model.real_net), eval(&model.imag_net))
}

/// Value and Laplacian with respect to the normalised input coordinates.
pub fn laplacian(model: &PinnModel, position: [f64; 3]) -> (Vec<Complex64>, Vec<Complex64>) {
    let x = points_matrix(&[position]);
    let eval = |net: &MlpParams| {
        let (out, _) = forward_batch(net, x.view(), Channels::Laplacian, false);
        value_and_laplacian(&out, 1)
    };
    let (vr, lr) = eval(&model.real_net);
    let (vi, li) = eval(&model.imag_net);
    let s = model.pressure_scale;
    let zip = |a: &Array2<f64>, b: &Array2<f64>| {
        a.iter().zip(b.iter()).map(|(&re, &im)| Complex64::new(re, im) * s).collect::<Vec<_>>()
    };
    (zip(&vr, &vi), zip(&lr, &li))
}

/// `(1/(S K)) sum |lap p + kappa_j^2 p|^2` for any field given as
/// `point -> (values, laplacians)` over `K` bins.
pub fn pde_term_with(
    eval: impl Fn([f64; 3]) -> (Vec<Complex64>, Vec<Complex64>),
    kappa: &[f64],
    colloc: &[[f64; 3]],
) -> f64 {
    let mut sum = 0.0;
    for &x in colloc {
        let (v, lap) = eval(x);
        for ((v, l), k) in v.iter().zip(&lap).zip(kappa) {
            sum += (l + v * (k * k)).norm_sqr();
        }
    }
    sum / (colloc.len() * kappa.len()).max(1) as f64
}

/// Training problem with targets already divided by the pressure scale.
pub(crate) struct Problem {
    data_x: Array2<f64>,
    target_re: Array2<f64>,
    target_im: Array2<f64>,
    kappa2: Vec<f64>,
}

impl Problem {
    pub(crate) fn new(model: &PinnModel, obs: &ObservationSet, scale: f64) -> Result<Self> {
        let k = model.bin_count();
        let same = obs.frequencies.len() == k
            && obs.frequencies.iter().zip(&model.frequencies).all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1.0));
        if !same {
            return Err(Error::ShapeMismatch("observation wavenumbers differ from the model's".into()));
        }
        let q = obs.positions.len();
        let target = |f: fn(&Complex64) -> f64| {
            Array2::from_shape_fn((k, q), |(j, i)| f(&obs.pressures[i * k + j]) / scale)
        };
        Ok(Problem {
            data_x: points_matrix(&direction_points(&obs.positions)),
            target_re: target(|p| p.re),
            target_im: target(|p| p.im),
            kappa2: model.kappa2(),
        })
    }
}

struct NetResult {
    data_sum: f64,
    pde_sum: f64,
    grad: Option<MlpParams>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum PdePass {
    Skip,
    Evaluate,
}

fn net_objective(
    net: &MlpParams,
    problem: &Problem,
    target: &Array2<f64>,
    colloc: &Array2<f64>,
    lambda: f64,
    pde: PdePass,
    want_grad: bool,
) -> NetResult {
    let k = net.output_dim();
    let q = problem.data_x.ncols();
    let mut grad = want_grad.then(|| net.zeros_like());

    let mut data_sum = 0.0;
    if q > 0 {
        let (out, tape) = forward_batch(net, problem.data_x.view(), Channels::Value, want_grad);
        let diff = out - target;
        data_sum = diff.iter().map(|d| d * d).sum();
        if let (Some(g), Some(tape)) = (grad.as_mut(), tape) {
            let adj = diff * (2.0 / (q * k) as f64);
            backward_batch(net, &tape, adj, g);
        }
    }

    let mut pde_sum = 0.0;
    let s = colloc.ncols();
    if pde == PdePass::Evaluate && s > 0 {
        let backprop = want_grad && lambda != 0.0;
        let (out, tape) = forward_batch(net, colloc.view(), Channels::Laplacian, backprop);
        let (value, lap) = value_and_laplacian(&out, s);
        let mut res = lap;
        for (j, mut row) in res.axis_iter_mut(Axis(0)).enumerate() {
            row.scaled_add(problem.kappa2[j], &value.row(j));
        }
        pde_sum = res.iter().map(|r| r * r).sum();
        if let (Some(g), Some(tape)) = (grad.as_mut(), tape) {
            let c = 2.0 * lambda / (s * k) as f64;
            let mut adj = Array2::zeros(out.raw_dim());
            for j in 0..k {
                for b in 0..s {
                    let r = c * res[[j, b]];
                    adj[[j, b]] = r * problem.kappa2[j];
                    for i in 4..7 {
                        adj[[j, i * s + b]] = r;
                    }
                }
            }
            backward_batch(net, &tape, adj, g);
        }
    }
    NetResult { data_sum, pde_sum, grad }
}

/// Loss and optional gradient in normalised pressure units.
pub(crate) fn objective(
    model: &PinnModel,
    problem: &Problem,
    colloc: &Array2<f64>,
    lambda: f64,
    pde: PdePass,
    want_grad: bool,
) -> (LossTerms, Option<ModelGradient>) {
    let (re, im) = rayon::join(
        || net_objective(&model.real_net, problem, &problem.target_re, colloc, lambda, pde, want_grad),
        || net_objective(&model.imag_net, problem, &problem.target_im, colloc, lambda, pde, want_grad),
    );
    let k = model.bin_count();
    let q = problem.data_x.ncols();
    let s = colloc.ncols();
    let data = if q > 0 { (re.data_sum + im.data_sum) / (q * k) as f64 } else { 0.0 };
    let pde_term = if s > 0 { (re.pde_sum + im.pde_sum) / (s * k) as f64 } else { 0.0 };
    let terms = LossTerms { total: data + lambda * pde_term, data, pde: pde_term };
    let grad = match (re.grad, im.grad) {
        (Some(real_net), Some(imag_net)) => Some(ModelGradient { real_net, imag_net }),
        _ => None,
    };
    (terms, grad)
}

fn scale_gradient(grad: &mut ModelGradient, factor: f64) {
    for net in [&mut grad.real_net, &mut grad.imag_net] {
        for layer in &mut net.layers {
            layer.weights *= factor;
            layer.biases *= factor;
            if let Activation::Rowdy(p) = &mut layer.activation {
                p.n.iter_mut().chain(p.alpha.iter_mut()).for_each(|v| *v *= factor);
            }
        }
    }
}

fn physical(model: &PinnModel, obs: &ObservationSet, colloc: &[[f64; 3]], lambda: f64, want_grad: bool) -> Result<(LossTerms, Option<ModelGradient>)> {
    let s = model.pressure_scale;
    if !(s > 0.0) {
        return Err(Error::InvalidConfig("pressure scale must be positive".into()));
    }
    let problem = Problem::new(model, obs, s)?;
    let colloc = points_matrix(colloc);
    let (t, mut grad) = objective(model, &problem, &colloc, lambda, PdePass::Evaluate, want_grad);
    let s2 = s * s;
    if let Some(g) = grad.as_mut() {
        scale_gradient(g, s2);
    }
    Ok((LossTerms { total: t.total * s2, data: t.data * s2, pde: t.pde * s2 }, grad))
}

/// Data term, Helmholtz term and `data + lambda * pde`, in the units of the
/// observations.
pub fn loss(model: &PinnModel, obs: &ObservationSet, colloc: &[[f64; 3]], lambda: f64) -> Result<LossTerms> {
    physical(model, obs, colloc, lambda, false).map(|(t, _)| t)
}

/// [`loss`] together with its gradient with respect to every weight, bias,
/// `n_w` and `alpha_w`.
pub fn loss_grad(
    model: &PinnModel,
    obs: &ObservationSet,
    colloc: &[[f64; 3]],
    lambda: f64,
) -> Result<(LossTerms, ModelGradient)> {
    physical(model, obs, colloc, lambda, true).map(|(t, g)| (t, g.expect("gradient requested")))
}

/// Model output at every direction of `targets`.
pub fn predict(model: &PinnModel, targets: &ArrayGeometry) -> Result<ComplexPressureField> {
    let k = model.bin_count();
    let x = points_matrix(&direction_points(targets.capsules()));
    let mut pressures = vec![Complex64::new(0.0, 0.0); targets.len() * k];
    if !targets.is_empty() {
        let (re, _) = forward_batch(&model.real_net, x.view(), Channels::Value, false);
        let (im, _) = forward_batch(&model.imag_net, x.view(), Channels::Value, false);
        for q in 0..targets.len() {
            for j in 0..k {
                pressures[q * k + j] = Complex64::new(re[[j, q]], im[[j, q]]) * model.pressure_scale;
            }
        }
    }
    ComplexPressureField::new(targets.clone(), model.frequencies.clone(), pressures)
}

#[cfg(test)]
mod tests;
