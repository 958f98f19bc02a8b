//! Reconstruction metrics, Helmholtz residual probes and the bridge between
//! time-domain signals and per-bin complex pressure fields.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::sma::{ArrayGeometry, ComplexPressureField, Medium, SpectrumLayout};

/// Reports are clamped here; a perfect reconstruction would be `-inf` dB.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// Multichannel real signals, one row per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignalSet {
    fs: f64,
    channels: Vec<Vec<f64>>,
}

impl TimeSignalSet {
    pub fn new(fs: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::domain(format!("sample rate {fs} must be > 0")));
        }
        if let Some(first) = channels.first() {
            if channels.iter().any(|c| c.len() != first.len()) {
                return Err(Error::ShapeMismatch("channels differ in length".into()));
            }
        }
        if channels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::domain("non-finite sample"));
        }
        Ok(TimeSignalSet { fs, channels })
    }

    pub fn zeros(fs: f64, channel_count: usize, length: usize) -> Result<Self> {
        Self::new(fs, vec![vec![0.0; length]; channel_count])
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }
}

/// NMSE summary in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct NmseReport {
    /// `10 log10` of the channel-averaged normalised error.
    pub overall_db: f64,
    /// Per-channel normalised error; `NaN` where the reference is silent.
    pub per_channel_db: Vec<f64>,
    pub per_frequency_db: Option<Vec<f64>>,
}

fn to_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
    } else {
        NMSE_FLOOR_DB
    }
}

/// Averages the finite ratios and converts to dB; `None` when all are NaN.
fn mean_ratio_db(ratios: &[f64]) -> Option<f64> {
    let used: Vec<f64> = ratios.iter().copied().filter(|r| !r.is_nan()).collect();
    if used.is_empty() {
        None
    } else {
        Some(to_db(used.iter().sum::<f64>() / used.len() as f64))
    }
}

/// Time-domain NMSE, averaged over channels inside the logarithm.
pub fn nmse_time(estimate: &TimeSignalSet, reference: &TimeSignalSet) -> Result<NmseReport> {
    if estimate.fs() != reference.fs() {
        return Err(Error::ShapeMismatch(format!(
            "sample rates differ: {} vs {}",
            estimate.fs(),
            reference.fs()
        )));
    }
    if estimate.channel_count() != reference.channel_count() || estimate.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "estimate is {}x{}, reference is {}x{}",
            estimate.channel_count(),
            estimate.len(),
            reference.channel_count(),
            reference.len()
        )));
    }
    let ratios: Vec<f64> = estimate
        .channels()
        .iter()
        .zip(reference.channels())
        .enumerate()
        .map(|(i, (e, r))| {
            let energy: f64 = r.iter().map(|x| x * x).sum();
            if energy == 0.0 {
                log::warn!("reference channel {i} is silent; excluded from NMSE");
                return f64::NAN;
            }
            let err: f64 = e.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
            err / energy
        })
        .collect();
    let overall_db = mean_ratio_db(&ratios)
        .ok_or_else(|| Error::ShapeMismatch("reference signals are all zero".into()))?;
    Ok(NmseReport {
        overall_db,
        per_channel_db: ratios.iter().map(|r| if r.is_nan() { *r } else { to_db(*r) }).collect(),
        per_frequency_db: None,
    })
}

/// Frequency-domain NMSE with complex-modulus norms, per channel and per bin.
pub fn nmse_freq(estimate: &ComplexPressureField, reference: &ComplexPressureField) -> Result<NmseReport> {
    let (q, k) = (reference.capsule_count(), reference.bin_count());
    if estimate.capsule_count() != q || estimate.bin_count() != k {
        return Err(Error::ShapeMismatch(format!(
            "estimate is {}x{}, reference is {q}x{k}",
            estimate.capsule_count(),
            estimate.bin_count()
        )));
    }
    let mut channel_ratios = Vec::with_capacity(q);
    for c in 0..q {
        let energy: f64 = reference.row(c).iter().map(|p| p.norm_sqr()).sum();
        if energy == 0.0 {
            channel_ratios.push(f64::NAN);
            continue;
        }
        let err: f64 = estimate
            .row(c)
            .iter()
            .zip(reference.row(c))
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        channel_ratios.push(err / energy);
    }
    let per_frequency_db = (0..k)
        .map(|j| {
            let ratios: Vec<f64> = (0..q)
                .map(|c| {
                    let r = reference.at(c, j).norm_sqr();
                    if r == 0.0 {
                        f64::NAN
                    } else {
                        (estimate.at(c, j) - reference.at(c, j)).norm_sqr() / r
                    }
                })
                .collect();
            mean_ratio_db(&ratios).unwrap_or(f64::NAN)
        })
        .collect();
    let overall_db = mean_ratio_db(&channel_ratios)
        .ok_or_else(|| Error::ShapeMismatch("reference field is all zero".into()))?;
    Ok(NmseReport {
        overall_db,
        per_channel_db: channel_ratios
            .iter()
            .map(|r| if r.is_nan() { *r } else { to_db(*r) })
            .collect(),
        per_frequency_db: Some(per_frequency_db),
    })
}

/// A complex scalar field in Cartesian coordinates (metres).
pub trait ScalarField {
    fn value(&self, x: [f64; 3]) -> Complex64;

    /// Closed-form Laplacian, when the field can provide one.
    fn laplacian(&self, _x: [f64; 3]) -> Option<Complex64> {
        None
    }
}

impl<F: Fn([f64; 3]) -> Complex64> ScalarField for F {
    fn value(&self, x: [f64; 3]) -> Complex64 {
        self(x)
    }
}

/// Seven-point central-difference Laplacian.
pub fn fd_laplacian(field: &dyn ScalarField, x: [f64; 3], step: f64) -> Complex64 {
    let centre = field.value(x);
    let mut acc = centre * -6.0;
    for axis in 0..3 {
        let mut plus = x;
        let mut minus = x;
        plus[axis] += step;
        minus[axis] -= step;
        acc += field.value(plus) + field.value(minus);
    }
    acc / (step * step)
}

fn residual_ratio(
    field: &dyn ScalarField,
    k: f64,
    probes: &[[f64; 3]],
    laplacian: impl Fn([f64; 3]) -> Complex64,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &x in probes {
        let kp = field.value(x) * (k * k);
        num += (laplacian(x) + kp).norm_sqr();
        den += kp.norm_sqr();
    }
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}

/// `RMS |lap p + k^2 p| / RMS |k^2 p|` over `probes`.
///
/// Uses the field's own Laplacian when it has one, otherwise central
/// differences with spacing `step`.
pub fn helmholtz_residual(field: &dyn ScalarField, k: f64, probes: &[[f64; 3]], step: f64) -> f64 {
    residual_ratio(field, k, probes, |x| {
        field.laplacian(x).unwrap_or_else(|| fd_laplacian(field, x, step))
    })
}

/// Like [`helmholtz_residual`] but always by finite differences.
pub fn helmholtz_residual_fd(field: &dyn ScalarField, k: f64, probes: &[[f64; 3]], step: f64) -> f64 {
    residual_ratio(field, k, probes, |x| fd_laplacian(field, x, step))
}

/// Per-channel DFT restricted to bins whose frequency lies in `band` (Hz).
pub fn time_to_freq(
    signals: &TimeSignalSet,
    band: (f64, f64),
    medium: Medium,
    geometry: &ArrayGeometry,
) -> Result<ComplexPressureField> {
    let (f_min, f_max) = band;
    let fs = signals.fs();
    let length = signals.len();
    if !(f_min >= 0.0) || !(f_max >= f_min) || f_max > fs / 2.0 {
        return Err(Error::InvalidConfig(format!(
            "band [{f_min}, {f_max}] Hz must lie within [0, fs/2 = {}]",
            fs / 2.0
        )));
    }
    if signals.channel_count() != geometry.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} channels for {} capsules",
            signals.channel_count(),
            geometry.len()
        )));
    }
    if length == 0 {
        return Err(Error::ShapeMismatch("empty signals".into()));
    }
    let bins: Vec<usize> = (0..=length / 2)
        .filter(|&j| {
            let f = j as f64 * fs / length as f64;
            f >= f_min && f <= f_max
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "band [{f_min}, {f_max}] Hz contains no DFT bin"
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(length);
    let mut pressures = Vec::with_capacity(signals.channel_count() * bins.len());
    let mut buffer = vec![Complex64::new(0.0, 0.0); length];
    for channel in signals.channels() {
        for (b, x) in buffer.iter_mut().zip(channel) {
            *b = Complex64::new(*x, 0.0);
        }
        fft.process(&mut buffer);
        pressures.extend(bins.iter().map(|&j| buffer[j]));
    }
    let wavenumbers = bins
        .iter()
        .map(|&j| medium.wavenumber(j as f64 * fs / length as f64))
        .collect();
    ComplexPressureField::new(geometry.clone(), wavenumbers, pressures)?.with_spectrum(Some(
        SpectrumLayout {
            fs,
            length,
            bins,
            c: medium.c,
        },
    ))
}

/// Real signals from a field's retained bins by Hermitian inverse DFT.
/// Bins the field does not carry are treated as zero.
pub fn freq_to_time(field: &ComplexPressureField, fs: f64, length: usize) -> Result<TimeSignalSet> {
    let layout = field
        .spectrum()
        .ok_or_else(|| Error::ShapeMismatch("field carries no spectrum layout".into()))?;
    if layout.fs != fs || layout.length != length {
        return Err(Error::ShapeMismatch(format!(
            "field was taken at fs = {} with {} samples, requested fs = {fs} with {length}",
            layout.fs, layout.length
        )));
    }
    if layout.bins.iter().any(|&j| j > length / 2) {
        return Err(Error::ShapeMismatch("spectrum bin beyond Nyquist".into()));
    }
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(length);
    let mut channels = Vec::with_capacity(field.capsule_count());
    let mut spectrum = vec![Complex64::new(0.0, 0.0); length];
    for q in 0..field.capsule_count() {
        spectrum.iter_mut().for_each(|s| *s = Complex64::new(0.0, 0.0));
        for (&j, p) in layout.bins.iter().zip(field.row(q)) {
            if j == 0 || 2 * j == length {
                spectrum[j] = Complex64::new(p.re, 0.0);
            } else {
                spectrum[j] = *p;
                spectrum[length - j] = p.conj();
            }
        }
        ifft.process(&mut spectrum);
        channels.push(spectrum.iter().map(|s| s.re / length as f64).collect());
    }
    TimeSignalSet::new(fs, channels)
}
