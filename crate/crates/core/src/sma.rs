//! Spherical microphone array geometry and spherical-harmonics processing.
//!
//! Encoding follows `C_nm = 1/b_n(kR) * sum_q w_q p(r_q) conj(Y_nm(r_q))` where
//! `w_q` are per-capsule quadrature weights (sum `4 pi`). With `w_q = 1` the
//! plain unweighted sum is recovered, see [`Weighting::Unit`].

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{self, sh_count, sh_index, Enclosure};

/// Default speed of sound in air, m/s.
pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

/// Radius of the reference 32-capsule layout, metres.
pub const REFERENCE_RADIUS: f64 = 0.042;

const FOUR_PI: f64 = 4.0 * PI;
const MIN_CAPSULE_SEPARATION: f64 = 1e-9;
const BESSEL_NULL: f64 = 1e-12;
const TIE_TOLERANCE: f64 = 1e-9;

/// A direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    /// Inclination from +z, radians in `[0, pi]`.
    pub theta: f64,
    /// Azimuth, radians in `[0, 2 pi)`.
    pub phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Self {
        Direction { theta, phi }.canonical()
    }

    pub fn from_vector(v: [f64; 3]) -> Self {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let theta = (v[2] / r).clamp(-1.0, 1.0).acos();
        Direction::new(theta, v[1].atan2(v[0]))
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Wraps `phi` into `[0, 2 pi)` and folds `theta` into `[0, pi]`.
    pub fn canonical(self) -> Self {
        let mut theta = self.theta.rem_euclid(2.0 * PI);
        let mut phi = self.phi;
        if theta > PI {
            theta = 2.0 * PI - theta;
            phi += PI;
        }
        let mut phi = phi.rem_euclid(2.0 * PI);
        if phi >= 2.0 * PI {
            phi = 0.0;
        }
        Direction { theta, phi }
    }

    /// Great-circle angle to `other`, radians.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        dot.clamp(-1.0, 1.0).acos()
    }
}

/// A point in spherical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalCoord {
    pub fn new(r: f64, theta: f64, phi: f64) -> Self {
        let d = Direction::new(theta, phi);
        SphericalCoord {
            r,
            theta: d.theta,
            phi: d.phi,
        }
    }

    pub fn on_sphere(r: f64, direction: Direction) -> Self {
        SphericalCoord::new(r, direction.theta, direction.phi)
    }

    pub fn from_cartesian(p: [f64; 3]) -> Self {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if r == 0.0 {
            return SphericalCoord { r, theta: 0.0, phi: 0.0 };
        }
        SphericalCoord::on_sphere(r, Direction::from_vector(p))
    }

    pub fn direction(&self) -> Direction {
        Direction {
            theta: self.theta,
            phi: self.phi,
        }
    }

    pub fn to_cartesian(&self) -> [f64; 3] {
        let u = self.direction().unit_vector();
        [self.r * u[0], self.r * u[1], self.r * u[2]]
    }
}

/// Propagation medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    /// Speed of sound, m/s.
    pub c: f64,
}

impl Default for Medium {
    fn default() -> Self {
        Medium {
            c: DEFAULT_SPEED_OF_SOUND,
        }
    }
}

impl Medium {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidConfig(format!("speed of sound {c} must be > 0")));
        }
        Ok(Medium { c })
    }

    pub fn wavenumber(&self, frequency_hz: f64) -> f64 {
        2.0 * PI * frequency_hz / self.c
    }
}

/// Capsule layout on a sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    radius: f64,
    capsules: Vec<Direction>,
    enclosure: Enclosure,
    weights: Vec<f64>,
}

impl ArrayGeometry {
    /// Validated constructor. Weights must sum to `4 pi` within 1e-9.
    pub fn new(
        radius: f64,
        capsules: Vec<Direction>,
        enclosure: Enclosure,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if capsules.is_empty() {
            return Err(Error::InvalidGeometry("at least one capsule is required".into()));
        }
        let geometry = Self::unchecked(radius, capsules, enclosure, weights)?;
        let total: f64 = geometry.weights.iter().sum();
        if (total - FOUR_PI).abs() > 1e-9 {
            return Err(Error::InvalidGeometry(format!(
                "weights sum to {total}, expected 4 pi"
            )));
        }
        for i in 0..geometry.capsules.len() {
            for j in (i + 1)..geometry.capsules.len() {
                if geometry.capsules[i].angle_to(&geometry.capsules[j]) < MIN_CAPSULE_SEPARATION {
                    return Err(Error::InvalidGeometry(format!(
                        "capsules {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(geometry)
    }

    /// Capsules with equal weights `4 pi / Q`.
    pub fn with_uniform_weights(
        radius: f64,
        capsules: Vec<Direction>,
        enclosure: Enclosure,
    ) -> Result<Self> {
        let w = FOUR_PI / capsules.len().max(1) as f64;
        let weights = vec![w; capsules.len()];
        Self::new(radius, capsules, enclosure, weights)
    }

    /// Evaluation targets: like [`with_uniform_weights`](Self::with_uniform_weights)
    /// but an empty direction list is allowed.
    pub fn targets(radius: f64, directions: Vec<Direction>, enclosure: Enclosure) -> Result<Self> {
        if directions.is_empty() {
            return Self::unchecked(radius, directions, enclosure, Vec::new());
        }
        Self::with_uniform_weights(radius, directions, enclosure)
    }

    fn unchecked(
        radius: f64,
        capsules: Vec<Direction>,
        enclosure: Enclosure,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidGeometry(format!("radius {radius} must be > 0")));
        }
        if weights.len() != capsules.len() {
            return Err(Error::InvalidGeometry(format!(
                "{} weights for {} capsules",
                weights.len(),
                capsules.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidGeometry("weights must be finite and >= 0".into()));
        }
        for d in &capsules {
            if !d.theta.is_finite() || !d.phi.is_finite() {
                return Err(Error::InvalidGeometry("non-finite capsule angle".into()));
            }
        }
        let capsules = capsules.into_iter().map(Direction::canonical).collect();
        Ok(ArrayGeometry {
            radius,
            capsules,
            enclosure,
            weights,
        })
    }

    /// The 32-capsule reference layout: vertices of a pentakis dodecahedron
    /// (12 icosahedron vertices followed by 20 dodecahedron vertices).
    ///
    /// The two vertex families carry different weights chosen so that the
    /// degree-6 icosahedral invariant integrates to zero; the resulting rule
    /// integrates every spherical polynomial of degree <= 9 exactly, so
    /// encoding up to order 4 is an exact projection.
    pub fn reference(radius: f64, enclosure: Enclosure) -> Result<Self> {
        let (icosa, dodeca) = pentakis_vertices();
        let probe = Direction::new(0.3, 0.7).unit_vector();
        let p6 = |v: &[f64; 3]| {
            let x = v[0] * probe[0] + v[1] * probe[1] + v[2] * probe[2];
            specfun::assoc_legendre(6, 0, x.clamp(-1.0, 1.0)).unwrap_or(0.0)
        };
        let a: f64 = icosa.iter().map(p6).sum();
        let b: f64 = dodeca.iter().map(p6).sum();
        // w_i * a + w_d * b = 0 and 12 w_i + 20 w_d = 4 pi
        let w_d = FOUR_PI / (20.0 - 12.0 * b / a);
        let w_i = -w_d * b / a;
        let mut capsules = Vec::with_capacity(32);
        let mut weights = Vec::with_capacity(32);
        for v in &icosa {
            capsules.push(Direction::from_vector(*v));
            weights.push(w_i);
        }
        for v in &dodeca {
            capsules.push(Direction::from_vector(*v));
            weights.push(w_d);
        }
        // exact sum to the last ulp
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w *= FOUR_PI / total;
        }
        Self::new(radius, capsules, enclosure, weights)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn capsules(&self) -> &[Direction] {
        &self.capsules
    }

    pub fn enclosure(&self) -> Enclosure {
        self.enclosure
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.capsules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capsules.is_empty()
    }

    /// Capsule position relative to the array centre, metres.
    pub fn capsule_position(&self, q: usize) -> [f64; 3] {
        let u = self.capsules[q].unit_vector();
        [self.radius * u[0], self.radius * u[1], self.radius * u[2]]
    }

    /// Same capsules with every weight set to `4 pi / Q`.
    pub fn uniformly_weighted(&self) -> Self {
        let w = FOUR_PI / self.len().max(1) as f64;
        ArrayGeometry {
            weights: vec![w; self.len()],
            ..self.clone()
        }
    }

    /// Restriction to `indices` with weights renormalised to `4 pi`.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidGeometry("empty capsule selection".into()));
        }
        let mut capsules = Vec::with_capacity(indices.len());
        let mut weights = Vec::with_capacity(indices.len());
        for &i in indices {
            let d = self.capsules.get(i).ok_or_else(|| {
                Error::InvalidGeometry(format!("capsule index {i} out of range"))
            })?;
            capsules.push(*d);
            weights.push(self.weights[i]);
        }
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            for w in &mut weights {
                *w *= FOUR_PI / total;
            }
        } else {
            weights = vec![FOUR_PI / indices.len() as f64; indices.len()];
        }
        Self::new(self.radius, capsules, self.enclosure, weights)
    }
}

fn pentakis_vertices() -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let normalize = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    let signs = [1.0, -1.0];
    let mut icosa = Vec::with_capacity(12);
    for &s1 in &signs {
        for &s2 in &signs {
            icosa.push(normalize([0.0, s1 * g, s2]));
            icosa.push(normalize([s2, 0.0, s1 * g]));
            icosa.push(normalize([s1 * g, s2, 0.0]));
        }
    }
    let mut dodeca = Vec::with_capacity(20);
    for &s1 in &signs {
        for &s2 in &signs {
            for &s3 in &signs {
                dodeca.push(normalize([s1, s2, s3]));
            }
        }
    }
    for &s1 in &signs {
        for &s2 in &signs {
            dodeca.push(normalize([0.0, s1 / g, s2 * g]));
            dodeca.push(normalize([s1 / g, s2 * g, 0.0]));
            dodeca.push(normalize([s2 * g, 0.0, s1 / g]));
        }
    }
    (icosa, dodeca)
}

/// `n` near-uniform directions on a Fibonacci spiral.
pub fn fibonacci_directions(n: usize) -> Vec<Direction> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let theta = z.clamp(-1.0, 1.0).acos();
            Direction::new(theta, golden * i as f64)
        })
        .collect()
}

/// Layout of the discrete spectrum a field was taken from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumLayout {
    /// Sample rate, Hz.
    pub fs: f64,
    /// DFT length in samples.
    pub length: usize,
    /// DFT bin index for each frequency of the field.
    pub bins: Vec<usize>,
    /// Speed of sound used to convert bins to wavenumbers.
    pub c: f64,
}

/// Complex pressures `Q x K` at the capsules of a geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPressureField {
    geometry: ArrayGeometry,
    wavenumbers: Vec<f64>,
    /// Row-major: capsule `q`, bin `j` at `q * K + j`.
    pressures: Vec<Complex64>,
    spectrum: Option<SpectrumLayout>,
}

impl ComplexPressureField {
    pub fn new(
        geometry: ArrayGeometry,
        wavenumbers: Vec<f64>,
        pressures: Vec<Complex64>,
    ) -> Result<Self> {
        if pressures.len() != geometry.len() * wavenumbers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} pressures for {} capsules x {} bins",
                pressures.len(),
                geometry.len(),
                wavenumbers.len()
            )));
        }
        if wavenumbers.iter().any(|k| !k.is_finite() || *k < 0.0) {
            return Err(Error::domain("wavenumbers must be finite and >= 0"));
        }
        if wavenumbers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("wavenumbers must be strictly increasing"));
        }
        if pressures.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::domain("non-finite pressure"));
        }
        Ok(ComplexPressureField {
            geometry,
            wavenumbers,
            pressures,
            spectrum: None,
        })
    }

    pub fn with_spectrum(mut self, spectrum: Option<SpectrumLayout>) -> Result<Self> {
        if let Some(s) = &spectrum {
            if s.bins.len() != self.wavenumbers.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} spectrum bins for {} wavenumbers",
                    s.bins.len(),
                    self.wavenumbers.len()
                )));
            }
        }
        self.spectrum = spectrum;
        Ok(self)
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn spectrum(&self) -> Option<&SpectrumLayout> {
        self.spectrum.as_ref()
    }

    pub fn pressures(&self) -> &[Complex64] {
        &self.pressures
    }

    pub fn capsule_count(&self) -> usize {
        self.geometry.len()
    }

    pub fn bin_count(&self) -> usize {
        self.wavenumbers.len()
    }

    pub fn at(&self, q: usize, bin: usize) -> Complex64 {
        self.pressures[q * self.wavenumbers.len() + bin]
    }

    /// Pressures of capsule `q` over all bins.
    pub fn row(&self, q: usize) -> &[Complex64] {
        let k = self.wavenumbers.len();
        &self.pressures[q * k..(q + 1) * k]
    }

    /// Pressures of all capsules at one bin.
    pub fn column(&self, bin: usize) -> Vec<Complex64> {
        (0..self.capsule_count()).map(|q| self.at(q, bin)).collect()
    }

    /// Restriction to a subset of capsules.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let geometry = self.geometry.select(indices)?;
        let mut pressures = Vec::with_capacity(indices.len() * self.bin_count());
        for &q in indices {
            pressures.extend_from_slice(self.row(q));
        }
        ComplexPressureField::new(geometry, self.wavenumbers.clone(), pressures)?
            .with_spectrum(self.spectrum.clone())
    }

    /// Applies `f` to every pressure.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        ComplexPressureField::new(
            self.geometry.clone(),
            self.wavenumbers.clone(),
            self.pressures.iter().map(|p| f(*p)).collect(),
        )?
        .with_spectrum(self.spectrum.clone())
    }
}

/// Truncated spherical-harmonics coefficients at one wavenumber.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoefficients {
    pub order: usize,
    pub k: f64,
    /// Indexed by [`sh_index`].
    pub coeffs: Vec<Complex64>,
}

impl ShCoefficients {
    pub fn zeros(order: usize, k: f64) -> Self {
        ShCoefficients {
            order,
            k,
            coeffs: vec![Complex64::new(0.0, 0.0); sh_count(order)],
        }
    }

    pub fn get(&self, n: usize, m: i64) -> Complex64 {
        self.coeffs[sh_index(n, m)]
    }

    pub fn set(&mut self, n: usize, m: i64, value: Complex64) {
        self.coeffs[sh_index(n, m)] = value;
    }
}

/// Highest order `N` with `(N+1)^2 <= q_count`.
pub fn max_order(q_count: usize) -> usize {
    let mut n = (q_count as f64).sqrt() as usize;
    while n * n > q_count {
        n -= 1;
    }
    while (n + 1) * (n + 1) <= q_count {
        n += 1;
    }
    n.saturating_sub(1)
}

/// Smallest order `N >= k r`, the rule of thumb for negligible aliasing.
pub fn aliasing_free_order(k: f64, r: f64) -> usize {
    (k * r).ceil().max(0.0) as usize
}

/// How capsule pressures are weighted in [`sh_encode_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Geometry quadrature weights.
    #[default]
    Quadrature,
    /// `w_q = 1`: the plain sum over capsules.
    Unit,
}

/// Spherical-harmonics encoding with the geometry's quadrature weights.
pub fn sh_encode(field: &ComplexPressureField, bin: usize, order: usize) -> Result<ShCoefficients> {
    sh_encode_with(field, bin, order, Weighting::Quadrature)
}

pub fn sh_encode_with(
    field: &ComplexPressureField,
    bin: usize,
    order: usize,
    weighting: Weighting,
) -> Result<ShCoefficients> {
    let geometry = field.geometry();
    let needed = sh_count(order);
    if needed > geometry.len() {
        return Err(Error::OrderTooHigh {
            order,
            needed,
            available: geometry.len(),
        });
    }
    let k = *field
        .wavenumbers()
        .get(bin)
        .ok_or_else(|| Error::domain(format!("bin {bin} out of range")))?;
    let kr = k * geometry.radius();
    let radial = specfun::radial_terms(order, kr, geometry.enclosure())?;
    for (n, b) in radial.iter().enumerate() {
        if b.norm() < BESSEL_NULL {
            return Err(Error::BesselNull {
                order: n,
                kr,
                magnitude: b.norm(),
            });
        }
    }
    let mut out = ShCoefficients::zeros(order, k);
    for (q, dir) in geometry.capsules().iter().enumerate() {
        let w = match weighting {
            Weighting::Quadrature => geometry.weights()[q],
            Weighting::Unit => 1.0,
        };
        let p = field.at(q, bin) * w;
        let y = specfun::sph_harm_all(order, dir.theta, dir.phi)?;
        for (c, yc) in out.coeffs.iter_mut().zip(&y) {
            *c += p * yc.conj();
        }
    }
    for n in 0..=order {
        for m in -(n as i64)..=(n as i64) {
            let i = sh_index(n, m);
            out.coeffs[i] /= radial[n];
        }
    }
    Ok(out)
}

/// Radial dependence used when re-expanding coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialMode {
    /// `j_n(kr)`: interior free-field expansion.
    FreeField,
    /// `b_n(kr)` of the given enclosure; on the surface of a rigid sphere
    /// this undoes the encoding's `1/b_n(kR)`.
    MatchEnclosure(Enclosure),
}

/// Evaluates `sum_nm C_nm R_n(kr) Y_nm(theta, phi)`.
pub fn sh_expand(coeffs: &ShCoefficients, point: SphericalCoord, radial: RadialMode) -> Result<Complex64> {
    if !(point.r > 0.0) {
        return Err(Error::domain("expansion point must have r > 0"));
    }
    let kr = coeffs.k * point.r;
    let radial = match radial {
        RadialMode::FreeField => specfun::radial_terms(coeffs.order, kr, Enclosure::Open)?,
        RadialMode::MatchEnclosure(e) => specfun::radial_terms(coeffs.order, kr, e)?,
    };
    let y = specfun::sph_harm_all(coeffs.order, point.theta, point.phi)?;
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 0..=coeffs.order {
        let mut shell = Complex64::new(0.0, 0.0);
        for m in -(n as i64)..=(n as i64) {
            let i = sh_index(n, m);
            shell += coeffs.coeffs[i] * y[i];
        }
        sum += shell * radial[n];
    }
    Ok(sum)
}

/// How the baseline interpolator forms its coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineMode {
    /// Weighted least-squares projection onto orders `<= N`. Coincides with
    /// `Quadrature` whenever the weights integrate the basis exactly and stays
    /// idempotent on band-limited data when they do not.
    #[default]
    Projection,
    /// Direct quadrature `C = sum_q w_q p_q conj(Y(q))`.
    Quadrature,
}

/// Order-limited surface interpolation at `targets` (same sphere radius).
///
/// The encoder's `1/b_n(kR)` and the surface re-expansion's `b_n(kR)`
/// cancel, so the interpolation operator is frequency independent and is
/// applied to every bin without dividing by the radial term.
pub fn baseline_upsample(
    field: &ComplexPressureField,
    targets: &[Direction],
) -> Result<ComplexPressureField> {
    let order = max_order(field.capsule_count());
    baseline_upsample_with(field, targets, order, BaselineMode::default())
}

pub fn baseline_upsample_with(
    field: &ComplexPressureField,
    targets: &[Direction],
    order: usize,
    mode: BaselineMode,
) -> Result<ComplexPressureField> {
    let geometry = field.geometry();
    let q = geometry.len();
    let needed = sh_count(order);
    if needed > q {
        return Err(Error::OrderTooHigh {
            order,
            needed,
            available: q,
        });
    }
    let operator = interpolation_operator(geometry, targets, order, mode)?;
    let kcount = field.bin_count();
    let mut pressures = vec![Complex64::new(0.0, 0.0); targets.len() * kcount];
    for s in 0..targets.len() {
        let out = &mut pressures[s * kcount..(s + 1) * kcount];
        for c in 0..q {
            let t = operator[(s, c)];
            for (o, p) in out.iter_mut().zip(field.row(c)) {
                *o += t * p;
            }
        }
    }
    let target_geometry =
        ArrayGeometry::targets(geometry.radius(), targets.to_vec(), geometry.enclosure())?;
    ComplexPressureField::new(target_geometry, field.wavenumbers().to_vec(), pressures)?
        .with_spectrum(field.spectrum().cloned())
}

/// `S x Q` matrix mapping capsule pressures to target pressures.
fn interpolation_operator(
    geometry: &ArrayGeometry,
    targets: &[Direction],
    order: usize,
    mode: BaselineMode,
) -> Result<DMatrix<Complex64>> {
    let q = geometry.len();
    let m = sh_count(order);
    let mut basis = DMatrix::<Complex64>::zeros(q, m);
    for (row, dir) in geometry.capsules().iter().enumerate() {
        let y = specfun::sph_harm_all(order, dir.theta, dir.phi)?;
        for (col, v) in y.into_iter().enumerate() {
            basis[(row, col)] = v;
        }
    }
    let mut target_basis = DMatrix::<Complex64>::zeros(targets.len(), m);
    for (row, dir) in targets.iter().enumerate() {
        let y = specfun::sph_harm_all(order, dir.theta, dir.phi)?;
        for (col, v) in y.into_iter().enumerate() {
            target_basis[(row, col)] = v;
        }
    }
    // Y^H W
    let mut analysis = basis.adjoint();
    for (c, w) in geometry.weights().iter().enumerate() {
        for r in 0..m {
            analysis[(r, c)] *= *w;
        }
    }
    let encoder = match mode {
        BaselineMode::Quadrature => analysis,
        BaselineMode::Projection => {
            let gram = &analysis * &basis;
            let inverse = gram
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::domain(format!("singular spherical-harmonics Gram matrix: {e}")))?;
            inverse * analysis
        }
    };
    Ok(target_basis * encoder)
}

/// Picks `q` capsules that maximise the minimum pairwise angle.
///
/// Exhaustive for `q <= 4`; otherwise greedy farthest-point insertion
/// seeded by the most distant pair. Returned indices are ascending.
pub fn subset_select(geometry: &ArrayGeometry, q: usize) -> Result<(ArrayGeometry, Vec<usize>)> {
    let total = geometry.len();
    if q == 0 || q > total {
        return Err(Error::InvalidConfig(format!(
            "subset size {q} outside 1..={total}"
        )));
    }
    if q == total {
        let indices: Vec<usize> = (0..total).collect();
        return Ok((geometry.select(&indices)?, indices));
    }
    let caps = geometry.capsules();
    let mut angles = vec![0.0; total * total];
    for i in 0..total {
        for j in 0..total {
            angles[i * total + j] = caps[i].angle_to(&caps[j]);
        }
    }
    let angle = |i: usize, j: usize| angles[i * total + j];

    let mut indices = if q == 1 {
        vec![0]
    } else if q <= 4 {
        exhaustive_maximin(total, q, &angle)
    } else {
        let mut chosen = exhaustive_maximin(total, 2, &angle);
        while chosen.len() < q {
            let scores: Vec<(usize, f64)> = (0..total)
                .filter(|c| !chosen.contains(c))
                .map(|cand| {
                    let score = chosen
                        .iter()
                        .map(|&c| angle(c, cand))
                        .fold(f64::INFINITY, f64::min);
                    (cand, score)
                })
                .collect();
            let top = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            // Symmetric layouts produce exact ties; among them prefer the
            // best-conditioned order-N basis so the final subset stays
            // solvable at the order it is meant to resolve.
            let order = max_order(q);
            let mut best = None;
            let mut best_det = f64::NEG_INFINITY;
            for &(cand, score) in &scores {
                if score < top - TIE_TOLERANCE {
                    continue;
                }
                let mut trial: Vec<Direction> = chosen.iter().map(|&c| caps[c]).collect();
                trial.push(caps[cand]);
                let det = basis_log_det(&trial, order)?;
                if det > best_det + 1e-9 {
                    best_det = det;
                    best = Some(cand);
                }
            }
            chosen.push(best.expect("candidates remain while chosen < total"));
        }
        chosen
    };
    indices.sort_unstable();
    Ok((geometry.select(&indices)?, indices))
}

/// `log det(Y^H Y + 1e-6 I)` of the order-`order` harmonic basis at `directions`.
fn basis_log_det(directions: &[Direction], order: usize) -> Result<f64> {
    let m = sh_count(order);
    let mut basis = DMatrix::<Complex64>::zeros(directions.len(), m);
    for (row, d) in directions.iter().enumerate() {
        for (col, v) in specfun::sph_harm_all(order, d.theta, d.phi)?.into_iter().enumerate() {
            basis[(row, col)] = v;
        }
    }
    let mut gram = basis.adjoint() * basis;
    for i in 0..m {
        gram[(i, i)] += Complex64::new(1e-6, 0.0);
    }
    Ok(gram.symmetric_eigenvalues().iter().map(|l| l.ln()).sum())
}

fn exhaustive_maximin(total: usize, q: usize, angle: &impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut best = Vec::new();
    let mut best_score = f64::NEG_INFINITY;
    let mut current = Vec::with_capacity(q);
    fn recurse(
        start: usize,
        total: usize,
        q: usize,
        current_min: f64,
        current: &mut Vec<usize>,
        best: &mut Vec<usize>,
        best_score: &mut f64,
        angle: &impl Fn(usize, usize) -> f64,
    ) {
        if current.len() == q {
            if current_min > *best_score {
                *best_score = current_min;
                *best = current.clone();
            }
            return;
        }
        for i in start..total {
            let mut m = current_min;
            for &c in current.iter() {
                m = m.min(angle(c, i));
            }
            if m <= *best_score {
                continue;
            }
            current.push(i);
            recurse(i + 1, total, q, m, current, best, best_score, angle);
            current.pop();
        }
    }
    recurse(0, total, q, f64::INFINITY, &mut current, &mut best, &mut best_score, angle);
    best
}

/// Minimum pairwise great-circle angle of a layout, radians.
pub fn min_pairwise_angle(directions: &[Direction]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..directions.len() {
        for j in (i + 1)..directions.len() {
            m = m.min(directions[i].angle_to(&directions[j]));
        }
    }
    m
}
