//! Experiment configuration and reference-scene synthesis.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{freq_to_time, time_to_freq, TimeSignalSet};
use crate::io;
use crate::pinn::TrainConfig;
use crate::sma::{ArrayGeometry, ComplexPressureField, Direction, Medium, DEFAULT_SPEED_OF_SOUND, REFERENCE_RADIUS};
use crate::specfun::Enclosure;
use crate::synth::{
    add_noise, broadband_from_response, image_source_rir, plane_wave_field, point_source_field, PlaneWaveSpec,
    PointSourceSpec, ShoeboxSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSpec {
    PlaneWave {
        theta: f64,
        phi: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    PointSources {
        sources: Vec<PointSourceSpec>,
    },
    Shoebox {
        dimensions: [f64; 3],
        source: [f64; 3],
        array_center: [f64; 3],
        reflection_order: usize,
        wall_reflection_coeff: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec::Shoebox {
            dimensions: [4.0, 3.0, 2.5],
            source: [2.9, 2.0, 1.4],
            array_center: [2.0, 1.5, 1.2],
            reflection_order: 2,
            wall_reflection_coeff: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Order-limited spherical-harmonics interpolation.
    Baseline,
    /// Plain sinusoidal network, data term only.
    Siren,
    /// Plain sinusoidal network with the Helmholtz term.
    PinnPlainSiren,
    /// Rowdy network with the Helmholtz term.
    Pinn,
    /// Rowdy network, data term only.
    PinnNoPde,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Baseline, Method::Siren, Method::PinnPlainSiren, Method::Pinn, Method::PinnNoPde];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Siren => "siren",
            Method::PinnPlainSiren => "pinn_plain_siren",
            Method::Pinn => "pinn",
            Method::PinnNoPde => "pinn_no_pde",
        }
    }

    /// Row label in the results table.
    pub fn label(self) -> &'static str {
        match self {
            Method::Baseline => "SH baseline (replaces SARITA)",
            Method::Siren => "SIREN",
            Method::PinnPlainSiren => "SIREN + PDE",
            Method::Pinn => "Proposed",
            Method::PinnNoPde => "Proposed without PDE",
        }
    }

    /// Training configuration for a network method, `None` for the baseline.
    pub fn train_config(self, base: &TrainConfig) -> Option<TrainConfig> {
        let mut cfg = base.clone();
        match self {
            Method::Baseline => return None,
            Method::Siren => {
                cfg.rowdy_w = 0;
                cfg.lambda_pde = 0.0;
            }
            Method::PinnPlainSiren => cfg.rowdy_w = 0,
            Method::Pinn => {}
            Method::PinnNoPde => cfg.lambda_pde = 0.0,
        }
        Some(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Geometry file; the 32-capsule reference layout when absent.
    pub geometry: Option<PathBuf>,
    /// Radius and enclosure of the reference layout.
    pub radius: f64,
    pub enclosure: Enclosure,
    pub fs: f64,
    /// Samples per channel (DFT length).
    pub length: usize,
    /// `[f_min, f_max]` in Hz.
    pub band: [f64; 2],
    pub c: f64,
    /// Observation SNR; noiseless when absent.
    pub snr_db: Option<f64>,
    pub scene: SceneSpec,
    pub subset_sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub output: PathBuf,
    /// Capsule whose waveforms are exported; defaults to the first capsule
    /// outside the largest subset.
    pub waveform_channel: Option<usize>,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            geometry: None,
            radius: REFERENCE_RADIUS,
            enclosure: Enclosure::Open,
            fs: 16000.0,
            length: 128,
            band: [100.0, 8000.0],
            c: DEFAULT_SPEED_OF_SOUND,
            snr_db: None,
            scene: SceneSpec::default(),
            subset_sizes: vec![4, 9, 16, 25],
            methods: Method::ALL.to_vec(),
            seed: 0,
            output: PathBuf::from("spherepinn-out"),
            waveform_channel: None,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; a relative geometry path is resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if let Some(g) = cfg.geometry.as_mut() {
            if g.is_relative() {
                *g = base_dir.join(&*g);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks everything that can be checked without synthesising, and
    /// loads the geometry.
    pub fn validate(&self) -> Result<ArrayGeometry> {
        if !(self.fs > 0.0) || self.length < 2 {
            return Err(Error::InvalidConfig("fs must be positive and length at least 2".into()));
        }
        if self.band[1] > self.fs / 2.0 {
            return Err(Error::InvalidConfig(format!(
                "band exceeds Nyquist: f_max {} Hz > fs/2 = {} Hz",
                self.band[1],
                self.fs / 2.0
            )));
        }
        if !(self.band[0] >= 0.0) || !(self.band[0] < self.band[1]) {
            return Err(Error::InvalidConfig("band must satisfy 0 <= f_min < f_max".into()));
        }
        Medium::new(self.c).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if let Some(snr) = self.snr_db {
            if snr.is_nan() {
                return Err(Error::InvalidConfig("snr_db must be a number".into()));
            }
        }
        self.train.validate()?;
        let geometry = match &self.geometry {
            Some(path) => io::read_geometry(path).map_err(|e| Error::InvalidConfig(e.to_string()))?,
            None => ArrayGeometry::reference(self.radius, self.enclosure)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?,
        };
        if self.subset_sizes.iter().any(|&q| q == 0 || q > geometry.len()) {
            return Err(Error::InvalidConfig(format!(
                "subset sizes must lie in 1..={}",
                geometry.len()
            )));
        }
        if let Some(ch) = self.waveform_channel {
            if ch >= geometry.len() {
                return Err(Error::InvalidConfig(format!("waveform channel {ch} out of range")));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods selected".into()));
        }
        Ok(geometry)
    }

    pub fn medium(&self) -> Medium {
        Medium { c: self.c }
    }

    pub fn band(&self) -> (f64, f64) {
        (self.band[0], self.band[1])
    }
}

/// A synthesised reference scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub geometry: ArrayGeometry,
    /// Time signals at the capsules as synthesised (before noise).
    pub signals: TimeSignalSet,
    /// In-band spectrum of the clean signals.
    pub field: ComplexPressureField,
    /// In-band spectrum of the observed (possibly noisy) signals.
    pub observed: ComplexPressureField,
    /// Clean signals restricted to the band; the NMSE reference.
    pub reference: TimeSignalSet,
}

pub fn synthesize(cfg: &ExperimentConfig, geometry: &ArrayGeometry) -> Result<Scene> {
    let band = cfg.band();
    let (field, signals) = match &cfg.scene {
        SceneSpec::PlaneWave { theta, phi, amplitude } => {
            let spec = PlaneWaveSpec {
                direction: Direction::new(*theta, *phi),
                amplitude: Complex64::new(*amplitude, 0.0),
            };
            broadband_from_response(geometry, cfg.fs, cfg.length, band, cfg.c, cfg.length as f64 / 4.0, |k| {
                plane_wave_field(&spec, geometry, k, None)
            })?
        }
        SceneSpec::PointSources { sources } => {
            broadband_from_response(geometry, cfg.fs, cfg.length, band, cfg.c, 0.0, |k| {
                point_source_field(sources, geometry, k)
            })?
        }
        SceneSpec::Shoebox { dimensions, source, array_center, reflection_order, wall_reflection_coeff } => {
            let spec = ShoeboxSpec {
                dimensions: *dimensions,
                source: *source,
                array_center: *array_center,
                reflection_order: *reflection_order,
                wall_reflection_coeff: *wall_reflection_coeff,
                fs: cfg.fs,
                length: cfg.length,
                c: cfg.c,
            };
            let signals = image_source_rir(&spec, geometry)?;
            (time_to_freq(&signals, band, cfg.medium(), geometry)?, signals)
        }
    };
    let reference = freq_to_time(&field, cfg.fs, cfg.length)?;
    let observed = match cfg.snr_db {
        Some(snr) if snr.is_finite() => {
            let noisy = add_noise(&signals, snr, cfg.seed)?;
            time_to_freq(&noisy, band, cfg.medium(), geometry)?
        }
        _ => field.clone(),
    };
    Ok(Scene { geometry: geometry.clone(), signals, field, observed, reference })
}
