//! Ground-truth sound fields: analytic plane waves (open and rigid sphere),
//! free-field point sources, shoebox image-source impulse responses and
//! seeded noise.
//!
//! Single-frequency fields use the `exp(-i omega t)` convention, so a plane
//! wave is `exp(i k . r)` and a point source `exp(i k d) / (4 pi d)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{ScalarField, TimeSignalSet};
use crate::sma::{ArrayGeometry, ComplexPressureField, Direction};
use crate::specfun::{self, Enclosure, MAX_ORDER};

/// Extra orders kept beyond `ceil(kR)` in series expansions.
pub const SERIES_MARGIN: usize = 12;

/// Half-width of the windowed-sinc fractional delay kernel (81 taps).
const SINC_HALF_WIDTH: i64 = 40;

/// Highest supported image-source reflection order.
pub const MAX_REFLECTION_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveSpec {
    /// Propagation direction.
    pub direction: Direction,
    pub amplitude: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSourceSpec {
    /// Position relative to the array centre, metres.
    pub position: [f64; 3],
    pub amplitude: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShoeboxSpec {
    /// Room size `(Lx, Ly, Lz)`, metres.
    pub dimensions: [f64; 3],
    /// Source position in room coordinates, metres.
    pub source: [f64; 3],
    /// Array centre in room coordinates, metres.
    pub array_center: [f64; 3],
    pub reflection_order: usize,
    /// Pressure reflection coefficient of every wall, in `[0, 1]`.
    pub wall_reflection_coeff: f64,
    /// Sample rate, Hz.
    pub fs: f64,
    /// Samples per channel.
    pub length: usize,
    /// Speed of sound, m/s.
    pub c: f64,
}

/// Default series truncation for argument `kr`.
pub fn default_truncation(kr: f64) -> usize {
    (kr.ceil().max(0.0) as usize + SERIES_MARGIN).min(MAX_ORDER)
}

fn legendre_all(order: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; order + 1];
    p[0] = 1.0;
    if order >= 1 {
        p[1] = x;
    }
    for n in 1..order {
        p[n + 1] = ((2 * n + 1) as f64 * x * p[n] - n as f64 * p[n - 1]) / (n + 1) as f64;
    }
    p
}

fn i_pow(n: usize) -> Complex64 {
    match n % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// A plane wave around a sphere of radius `radius` centred at the origin.
///
/// For a rigid sphere the field is incident plus scattered wave; for an open
/// sphere it is the incident wave alone.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWaveField {
    pub spec: PlaneWaveSpec,
    pub k: f64,
    pub radius: f64,
    pub enclosure: Enclosure,
    pub truncation: usize,
    /// `j_n'(kR) / h_n'(kR)` for the rigid scattered part.
    scatter: Vec<Complex64>,
}

impl PlaneWaveField {
    pub fn new(
        spec: PlaneWaveSpec,
        k: f64,
        radius: f64,
        enclosure: Enclosure,
        truncation: Option<usize>,
    ) -> Result<Self> {
        if !(k >= 0.0) || !(radius > 0.0) {
            return Err(Error::domain("plane wave needs k >= 0 and radius > 0"));
        }
        let truncation = truncation.unwrap_or_else(|| default_truncation(k * radius));
        if truncation > MAX_ORDER {
            return Err(Error::domain(format!(
                "truncation {truncation} exceeds the supported maximum {MAX_ORDER}"
            )));
        }
        let scatter = match enclosure {
            Enclosure::Open => Vec::new(),
            Enclosure::Rigid => {
                let kr = k * radius;
                (0..=truncation)
                    .map(|n| {
                        let jd = specfun::sph_bessel_j(n, kr, true)?;
                        let hd = specfun::sph_hankel1(n, kr, true)?;
                        Ok(Complex64::new(jd, 0.0) / hd)
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(PlaneWaveField {
            spec,
            k,
            radius,
            enclosure,
            truncation,
            scatter,
        })
    }

    fn wave_vector(&self) -> [f64; 3] {
        let u = self.spec.direction.unit_vector();
        [self.k * u[0], self.k * u[1], self.k * u[2]]
    }

    /// Closed-form incident wave `A exp(i k . x)`.
    pub fn incident(&self, x: [f64; 3]) -> Complex64 {
        self.spec.amplitude * Complex64::from_polar(1.0, dot3(self.wave_vector(), x))
    }

    /// Series value at `x` (and, with `radial_derivative`, `dp/dr`).
    fn series(&self, x: [f64; 3], radial_derivative: bool) -> Result<Complex64> {
        let rho = norm3(x);
        let cos_gamma = if rho == 0.0 {
            1.0
        } else {
            dot3(self.spec.direction.unit_vector(), x) / rho
        };
        let p = legendre_all(self.truncation, cos_gamma.clamp(-1.0, 1.0));
        let kr = self.k * rho;
        let mut sum = Complex64::new(0.0, 0.0);
        for n in 0..=self.truncation {
            let mut radial = Complex64::new(specfun::sph_bessel_j(n, kr, radial_derivative)?, 0.0);
            if self.enclosure == Enclosure::Rigid {
                radial -= self.scatter[n] * specfun::sph_hankel1(n, kr, radial_derivative)?;
            }
            sum += i_pow(n) * (2 * n + 1) as f64 * radial * p[n];
        }
        let scale = if radial_derivative { self.k } else { 1.0 };
        Ok(self.spec.amplitude * sum * scale)
    }

    /// Pressure at `x` by the spherical-wave expansion.
    pub fn series_value(&self, x: [f64; 3]) -> Result<Complex64> {
        self.series(x, false)
    }

    /// Analytic `dp/dr` at `x` by the same expansion.
    pub fn radial_derivative(&self, x: [f64; 3]) -> Result<Complex64> {
        self.series(x, true)
    }
}

impl ScalarField for PlaneWaveField {
    fn value(&self, x: [f64; 3]) -> Complex64 {
        match self.enclosure {
            Enclosure::Open => self.incident(x),
            Enclosure::Rigid => self.series(x, false).unwrap_or(Complex64::new(f64::NAN, f64::NAN)),
        }
    }

    fn laplacian(&self, x: [f64; 3]) -> Option<Complex64> {
        match self.enclosure {
            Enclosure::Open => {
                let kv = self.wave_vector();
                let p = self.incident(x);
                Some(kv.iter().map(|ki| p * -(ki * ki)).sum())
            }
            Enclosure::Rigid => None,
        }
    }
}

/// Pressures of a plane wave at the capsules:
/// `A sum_n i^n (2n+1) b_n(kR) P_n(cos gamma)`.
pub fn plane_wave_field(
    spec: &PlaneWaveSpec,
    geometry: &ArrayGeometry,
    k: f64,
    truncation: Option<usize>,
) -> Result<Vec<Complex64>> {
    let field = PlaneWaveField::new(*spec, k, geometry.radius(), geometry.enclosure(), truncation)?;
    (0..geometry.len())
        .map(|q| field.series_value(geometry.capsule_position(q)))
        .collect()
}

/// Free-field monopole `A exp(i k d) / (4 pi d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSourceField {
    pub spec: PointSourceSpec,
    pub k: f64,
}

impl PointSourceField {
    fn green(&self, x: [f64; 3]) -> (Complex64, f64) {
        let d = norm3([
            x[0] - self.spec.position[0],
            x[1] - self.spec.position[1],
            x[2] - self.spec.position[2],
        ]);
        let g = Complex64::from_polar(1.0, self.k * d) / (4.0 * PI * d);
        (self.spec.amplitude * g, d)
    }
}

impl ScalarField for PointSourceField {
    fn value(&self, x: [f64; 3]) -> Complex64 {
        self.green(x).0
    }

    /// `f'' + 2 f' / d` of the radial profile.
    fn laplacian(&self, x: [f64; 3]) -> Option<Complex64> {
        let (p, d) = self.green(x);
        let ikd = Complex64::new(0.0, self.k * d);
        let first = p * (ikd - 1.0) / d;
        let second = p * (ikd * ikd - ikd * 2.0 + 2.0) / (d * d);
        Some(second + first * (2.0 / d))
    }
}

/// Pressures of one or more point sources at the capsules of an open sphere.
pub fn point_source_field(
    sources: &[PointSourceSpec],
    geometry: &ArrayGeometry,
    k: f64,
) -> Result<Vec<Complex64>> {
    if geometry.enclosure() != Enclosure::Open {
        return Err(Error::EnclosureUnsupported("point-source synthesis"));
    }
    for s in sources {
        if !(norm3(s.position) > geometry.radius()) {
            return Err(Error::InvalidGeometry(format!(
                "source at {:?} is not outside the array sphere",
                s.position
            )));
        }
    }
    let mut out = vec![Complex64::new(0.0, 0.0); geometry.len()];
    for s in sources {
        let field = PointSourceField { spec: *s, k };
        for (q, slot) in out.iter_mut().enumerate() {
            *slot += field.value(geometry.capsule_position(q));
        }
    }
    Ok(out)
}

fn inside_box(p: [f64; 3], dims: [f64; 3], margin: f64) -> bool {
    (0..3).all(|i| p[i] - margin > 0.0 && p[i] + margin < dims[i])
}

/// Hann-windowed sinc tap for offset `x` samples from the arrival.
fn fractional_delay_tap(x: f64) -> f64 {
    let half = SINC_HALF_WIDTH as f64 + 1.0;
    if x.abs() >= half {
        return 0.0;
    }
    let window = 0.5 * (1.0 + (PI * x / half).cos());
    let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    window * sinc
}

/// Shoebox impulse responses at every capsule of an open-sphere array.
///
/// Each image source contributes `beta^reflections / (4 pi d)` at a delay of
/// `d / c * fs` samples, spread with an 81-tap Hann-windowed sinc.
pub fn image_source_rir(spec: &ShoeboxSpec, geometry: &ArrayGeometry) -> Result<TimeSignalSet> {
    if geometry.enclosure() != Enclosure::Open {
        return Err(Error::EnclosureUnsupported("image-source simulation"));
    }
    if spec.reflection_order > MAX_REFLECTION_ORDER {
        return Err(Error::InvalidConfig(format!(
            "reflection order {} exceeds {MAX_REFLECTION_ORDER}",
            spec.reflection_order
        )));
    }
    if !(0.0..=1.0).contains(&spec.wall_reflection_coeff) {
        return Err(Error::InvalidConfig("wall reflection coefficient must lie in [0, 1]".into()));
    }
    if !(spec.fs > 0.0) || !(spec.c > 0.0) || spec.dimensions.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidConfig("shoebox needs fs, c and dimensions > 0".into()));
    }
    if !inside_box(spec.source, spec.dimensions, 0.0) {
        return Err(Error::InvalidGeometry("source lies outside the room".into()));
    }
    if !inside_box(spec.array_center, spec.dimensions, geometry.radius()) {
        return Err(Error::InvalidGeometry("array does not fit inside the room".into()));
    }
    let images = image_sources(spec);
    let mut channels = Vec::with_capacity(geometry.len());
    for q in 0..geometry.len() {
        let offset = geometry.capsule_position(q);
        let mic = [
            spec.array_center[0] + offset[0],
            spec.array_center[1] + offset[1],
            spec.array_center[2] + offset[2],
        ];
        let mut signal = vec![0.0; spec.length];
        for (position, gain) in &images {
            let d = norm3([position[0] - mic[0], position[1] - mic[1], position[2] - mic[2]]);
            let amplitude = gain / (4.0 * PI * d);
            let delay = d / spec.c * spec.fs;
            let centre = delay.round() as i64;
            for t in (centre - SINC_HALF_WIDTH)..=(centre + SINC_HALF_WIDTH) {
                if t < 0 || t as usize >= spec.length {
                    continue;
                }
                signal[t as usize] += amplitude * fractional_delay_tap(t as f64 - delay);
            }
        }
        channels.push(signal);
    }
    TimeSignalSet::new(spec.fs, channels)
}

/// Image positions with their reflection gains, in a fixed order.
fn image_sources(spec: &ShoeboxSpec) -> Vec<([f64; 3], f64)> {
    let order = spec.reflection_order as i64;
    let beta = spec.wall_reflection_coeff;
    let mut out = Vec::new();
    let range = -order..=order;
    for nx in range.clone() {
        for ny in range.clone() {
            for nz in range.clone() {
                for parity in 0..8u8 {
                    let n = [nx, ny, nz];
                    let mut position = [0.0; 3];
                    let mut reflections = 0i64;
                    for axis in 0..3 {
                        let u = ((parity >> axis) & 1) as i64;
                        let sign = if u == 1 { -1.0 } else { 1.0 };
                        position[axis] =
                            2.0 * n[axis] as f64 * spec.dimensions[axis] + sign * spec.source[axis];
                        reflections += (2 * n[axis] - u).abs();
                    }
                    if reflections > order {
                        continue;
                    }
                    let gain = if reflections == 0 { 1.0 } else { beta.powi(reflections as i32) };
                    if gain == 0.0 {
                        continue;
                    }
                    out.push((position, gain));
                }
            }
        }
    }
    out
}

/// Broadband field from a per-wavenumber capsule response.
///
/// `response(k)` returns capsule pressures in the `exp(-i omega t)`
/// convention; the DFT spectrum is its conjugate, delayed by
/// `delay_samples`. Bins outside `band` are zero. Returns the time signals
/// and the in-band field taken back from them.
pub fn broadband_from_response(
    geometry: &ArrayGeometry,
    fs: f64,
    length: usize,
    band: (f64, f64),
    c: f64,
    delay_samples: f64,
    mut response: impl FnMut(f64) -> Result<Vec<Complex64>>,
) -> Result<(ComplexPressureField, TimeSignalSet)> {
    let medium = crate::sma::Medium::new(c)?;
    let zeros = TimeSignalSet::zeros(fs, geometry.len(), length)?;
    let template = crate::evalkit::time_to_freq(&zeros, band, medium, geometry)?;
    let layout = template.spectrum().cloned().expect("time_to_freq records the layout");
    let kcount = template.bin_count();
    let mut pressures = vec![Complex64::new(0.0, 0.0); geometry.len() * kcount];
    for (j, (&bin, &k)) in layout.bins.iter().zip(template.wavenumbers()).enumerate() {
        let values = response(k)?;
        let omega = 2.0 * PI * bin as f64 / length as f64;
        let shift = Complex64::from_polar(1.0, -omega * delay_samples);
        for (q, v) in values.iter().enumerate() {
            pressures[q * kcount + j] = v.conj() * shift;
        }
    }
    let spectrum = ComplexPressureField::new(geometry.clone(), template.wavenumbers().to_vec(), pressures)?
        .with_spectrum(Some(layout))?;
    let signals = crate::evalkit::freq_to_time(&spectrum, fs, length)?;
    let field = crate::evalkit::time_to_freq(&signals, band, medium, geometry)?;
    Ok((field, signals))
}

/// Additive white Gaussian noise at a per-channel SNR.
pub trait AddNoise: Sized {
    /// `snr_db = +inf` returns an exact copy.
    fn add_noise(&self, snr_db: f64, seed: u64) -> Result<Self>;
}

fn channel_rng(seed: u64, channel: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ channel as u64)
}

impl AddNoise for TimeSignalSet {
    fn add_noise(&self, snr_db: f64, seed: u64) -> Result<Self> {
        if snr_db == f64::INFINITY {
            return Ok(self.clone());
        }
        if !snr_db.is_finite() {
            return Err(Error::domain(format!("SNR {snr_db} dB is not finite")));
        }
        let channels = self
            .channels()
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let power = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
                let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
                let mut rng = channel_rng(seed, i);
                x.iter()
                    .map(|v| {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        v + sigma * n
                    })
                    .collect()
            })
            .collect();
        TimeSignalSet::new(self.fs(), channels)
    }
}

impl AddNoise for ComplexPressureField {
    fn add_noise(&self, snr_db: f64, seed: u64) -> Result<Self> {
        if snr_db == f64::INFINITY {
            return Ok(self.clone());
        }
        if !snr_db.is_finite() {
            return Err(Error::domain(format!("SNR {snr_db} dB is not finite")));
        }
        let mut pressures = Vec::with_capacity(self.pressures().len());
        for q in 0..self.capsule_count() {
            let row = self.row(q);
            let power = row.iter().map(|p| p.norm_sqr()).sum::<f64>() / row.len().max(1) as f64;
            // circular complex noise: half the variance in each component
            let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
            let mut rng = channel_rng(seed, q);
            for p in row {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                pressures.push(p + Complex64::new(re, im) * sigma);
            }
        }
        ComplexPressureField::new(self.geometry().clone(), self.wavenumbers().to_vec(), pressures)?
            .with_spectrum(self.spectrum().cloned())
    }
}

pub fn add_noise<T: AddNoise>(data: &T, snr_db: f64, seed: u64) -> Result<T> {
    data.add_noise(snr_db, seed)
}
