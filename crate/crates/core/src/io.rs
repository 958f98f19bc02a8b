//! File formats.
//!
//! * Geometry: text. Header line `radius_m enclosure`, then one line
//!   `theta_rad phi_rad weight_sr` per capsule. Blank lines and lines
//!   starting with `#` are ignored.
//! * Field: JSON document tagged `spherepinn-field/1` with the geometry,
//!   wavenumbers, row-major real and imaginary `Q x K` matrices and the
//!   optional spectrum layout. Floats are written in shortest round-trip form.
//! * Signals: raw little-endian `f64` samples, channel-major, plus a JSON
//!   sidecar `<file>.json` tagged `spherepinn-signals/1`.
//! * Model: binary.
//!
//!   | bytes | content |
//!   |-------|---------|
//!   | 8     | magic `SPHPINN\0` |
//!   | 4     | format version, `u32` LE (currently 1) |
//!   | 4     | header length `n`, `u32` LE |
//!   | n     | JSON header: layer shapes, activations, wavenumbers, scales, training config |
//!   | 8 * P | parameters, `f64` LE |
//!
//!   Parameters run over the real network then the imaginary one; within a
//!   network, layer by layer: weights (row-major `out x in`), biases, `n_w`,
//!   `alpha_w`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::TimeSignalSet;
use crate::pinn::{Activation, Layer, MlpParams, PinnModel, RowdyActivationParams, TrainConfig};
use crate::sma::{ArrayGeometry, ComplexPressureField, Direction, SpectrumLayout};
use crate::specfun::Enclosure;

pub const FIELD_FORMAT: &str = "spherepinn-field/1";
pub const SIGNALS_FORMAT: &str = "spherepinn-signals/1";
pub const MODEL_MAGIC: &[u8; 8] = b"SPHPINN\0";
pub const MODEL_VERSION: u32 = 1;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::format(path, format!("cannot read: {e}")))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn parse_geometry(text: &str, origin: &Path) -> Result<ArrayGeometry> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let bad = |line: usize, why: &str| Error::format(origin, format!("line {line}: {why}"));
    let (hline, header) = lines.next().ok_or_else(|| Error::format(origin, "empty geometry file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(bad(hline, "header must be `radius_m enclosure`"));
    }
    let radius: f64 = fields[0].parse().map_err(|_| bad(hline, "radius is not a number"))?;
    let enclosure: Enclosure = fields[1].parse().map_err(|_| bad(hline, "enclosure must be open or rigid"))?;
    let mut capsules = Vec::new();
    let mut weights = Vec::new();
    for (n, line) in lines {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(n, "expected three numbers"))?;
        if v.len() != 3 {
            return Err(bad(n, "expected `theta_rad phi_rad weight_sr`"));
        }
        if !(0.0..=std::f64::consts::PI).contains(&v[0]) || !v[1].is_finite() {
            return Err(bad(n, "theta must lie in [0, pi] and phi must be finite"));
        }
        capsules.push(Direction::new(v[0], v[1]));
        weights.push(v[2]);
    }
    ArrayGeometry::new(radius, capsules, enclosure, weights)
        .map_err(|e| Error::format(origin, e.to_string()))
}

pub fn read_geometry(path: &Path) -> Result<ArrayGeometry> {
    parse_geometry(&read_text(path)?, path)
}

pub fn format_geometry(geometry: &ArrayGeometry) -> String {
    let mut out = format!("{} {}\n", geometry.radius(), geometry.enclosure());
    for (d, w) in geometry.capsules().iter().zip(geometry.weights()) {
        out.push_str(&format!("{} {} {}\n", d.theta, d.phi, w));
    }
    out
}

pub fn write_geometry(path: &Path, geometry: &ArrayGeometry) -> Result<()> {
    write_atomic(path, format_geometry(geometry).as_bytes())
}

#[derive(Serialize, Deserialize)]
struct GeometryDoc {
    radius: f64,
    enclosure: Enclosure,
    /// `[theta, phi]` per capsule.
    capsules: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl GeometryDoc {
    fn from_geometry(g: &ArrayGeometry) -> Self {
        GeometryDoc {
            radius: g.radius(),
            enclosure: g.enclosure(),
            capsules: g.capsules().iter().map(|d| [d.theta, d.phi]).collect(),
            weights: g.weights().to_vec(),
        }
    }

    fn into_geometry(self) -> Result<ArrayGeometry> {
        let dirs = self.capsules.iter().map(|c| Direction::new(c[0], c[1])).collect();
        if self.capsules.is_empty() {
            ArrayGeometry::targets(self.radius, dirs, self.enclosure)
        } else {
            ArrayGeometry::new(self.radius, dirs, self.enclosure, self.weights)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct FieldDoc {
    format: String,
    geometry: GeometryDoc,
    wavenumbers: Vec<f64>,
    real: Vec<Vec<f64>>,
    imag: Vec<Vec<f64>>,
    spectrum: Option<SpectrumLayout>,
}

pub fn field_to_string(field: &ComplexPressureField) -> String {
    let rows = |f: fn(&Complex64) -> f64| {
        (0..field.capsule_count()).map(|q| field.row(q).iter().map(f).collect()).collect()
    };
    let doc = FieldDoc {
        format: FIELD_FORMAT.to_string(),
        geometry: GeometryDoc::from_geometry(field.geometry()),
        wavenumbers: field.wavenumbers().to_vec(),
        real: rows(|p| p.re),
        imag: rows(|p| p.im),
        spectrum: field.spectrum().cloned(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("field document serialises");
    s.push('\n');
    s
}

pub fn field_from_str(text: &str, origin: &Path) -> Result<ComplexPressureField> {
    let doc: FieldDoc = serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
    if doc.format != FIELD_FORMAT {
        return Err(Error::format(origin, format!("unsupported format tag {:?}", doc.format)));
    }
    let k = doc.wavenumbers.len();
    let q = doc.geometry.capsules.len();
    if doc.real.len() != q || doc.imag.len() != q || doc.real.iter().chain(&doc.imag).any(|r| r.len() != k) {
        return Err(Error::format(origin, format!("pressure matrices must be {q} x {k}")));
    }
    let pressures = doc
        .real
        .iter()
        .zip(&doc.imag)
        .flat_map(|(re, im)| re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)))
        .collect();
    let geometry = doc.geometry.into_geometry().map_err(|e| Error::format(origin, e.to_string()))?;
    ComplexPressureField::new(geometry, doc.wavenumbers, pressures)
        .and_then(|f| f.with_spectrum(doc.spectrum))
        .map_err(|e| Error::format(origin, e.to_string()))
}

pub fn write_field(path: &Path, field: &ComplexPressureField) -> Result<()> {
    write_atomic(path, field_to_string(field).as_bytes())
}

pub fn read_field(path: &Path) -> Result<ComplexPressureField> {
    field_from_str(&read_text(path)?, path)
}

#[derive(Serialize, Deserialize)]
struct SignalsSidecar {
    format: String,
    fs: f64,
    channels: usize,
    length: usize,
    sample_format: String,
}

pub fn sidecar_path(raw: &Path) -> PathBuf {
    let mut p = raw.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn write_signals(raw: &Path, signals: &TimeSignalSet) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 * signals.channel_count() * signals.len());
    for ch in signals.channels() {
        for v in ch {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(raw, &bytes)?;
    let sidecar = SignalsSidecar {
        format: SIGNALS_FORMAT.to_string(),
        fs: signals.fs(),
        channels: signals.channel_count(),
        length: signals.len(),
        sample_format: "f64le".to_string(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serialises");
    text.push('\n');
    write_atomic(&sidecar_path(raw), text.as_bytes())
}

pub fn read_signals(raw: &Path) -> Result<TimeSignalSet> {
    let side_path = sidecar_path(raw);
    let side: SignalsSidecar =
        serde_json::from_str(&read_text(&side_path)?).map_err(|e| Error::format(&side_path, e.to_string()))?;
    if side.format != SIGNALS_FORMAT || side.sample_format != "f64le" {
        return Err(Error::format(&side_path, "unsupported signal format"));
    }
    let bytes = fs::read(raw).map_err(|e| Error::format(raw, format!("cannot read: {e}")))?;
    if bytes.len() != 8 * side.channels * side.length {
        return Err(Error::format(
            raw,
            format!("{} bytes for {} channels x {} samples", bytes.len(), side.channels, side.length),
        ));
    }
    let samples: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let channels = if side.length == 0 {
        vec![Vec::new(); side.channels]
    } else {
        samples.chunks(side.length).map(<[f64]>::to_vec).collect()
    };
    TimeSignalSet::new(side.fs, channels).map_err(|e| Error::format(raw, e.to_string()))
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
#[serde(rename_all = "snake_case")]
enum LayerActivationDoc {
    Identity,
    Rowdy { omega0: f64, terms: usize },
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    inputs: usize,
    outputs: usize,
    activation: LayerActivationDoc,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    wavenumbers: Vec<f64>,
    radius: f64,
    coord_scale: f64,
    pressure_scale: f64,
    real_net: Vec<LayerDoc>,
    imag_net: Vec<LayerDoc>,
    parameter_count: usize,
    config: Option<TrainConfig>,
}

fn layer_docs(net: &MlpParams) -> Vec<LayerDoc> {
    net.layers
        .iter()
        .map(|l| LayerDoc {
            inputs: l.input_dim(),
            outputs: l.output_dim(),
            activation: match &l.activation {
                Activation::Identity => LayerActivationDoc::Identity,
                Activation::Rowdy(p) => LayerActivationDoc::Rowdy { omega0: p.omega0, terms: p.terms() },
            },
        })
        .collect()
}

fn empty_net(docs: &[LayerDoc]) -> Result<MlpParams> {
    let layers = docs
        .iter()
        .map(|d| {
            Ok(Layer {
                weights: Array2::zeros((d.outputs, d.inputs)),
                biases: Array1::zeros(d.outputs),
                activation: match d.activation {
                    LayerActivationDoc::Identity => Activation::Identity,
                    LayerActivationDoc::Rowdy { omega0, terms } => {
                        Activation::Rowdy(RowdyActivationParams::new(omega0, vec![0.0; terms], vec![0.0; terms])?)
                    }
                },
            })
        })
        .collect::<Result<_>>()?;
    MlpParams::new(layers)
}

pub fn model_to_bytes(model: &PinnModel, config: Option<&TrainConfig>) -> Vec<u8> {
    let params = model.to_flat();
    let header = ModelHeader {
        wavenumbers: model.frequencies.clone(),
        radius: model.radius,
        coord_scale: model.coord_scale,
        pressure_scale: model.pressure_scale,
        real_net: layer_docs(&model.real_net),
        imag_net: layer_docs(&model.imag_net),
        parameter_count: params.len(),
        config: config.cloned(),
    };
    let json = serde_json::to_vec(&header).expect("model header serialises");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * params.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Parses a model file; returns the model and the echoed training config.
pub fn model_from_bytes(bytes: &[u8], origin: &Path) -> Result<(PinnModel, Option<TrainConfig>)> {
    let bad = |why: String| Error::format(origin, why);
    if bytes.len() < 16 || &bytes[..8] != MODEL_MAGIC {
        return Err(bad("not a model file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(bad(format!("unsupported model version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header".into()))?;
    let header: ModelHeader = serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
    let raw = &bytes[16 + hlen..];
    if raw.len() != 8 * header.parameter_count {
        return Err(bad(format!("{} parameter bytes, expected {}", raw.len(), 8 * header.parameter_count)));
    }
    let params: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let build = || -> Result<PinnModel> {
        let mut model = PinnModel::new(
            empty_net(&header.real_net)?,
            empty_net(&header.imag_net)?,
            header.wavenumbers.clone(),
            header.radius,
            header.coord_scale,
            header.pressure_scale,
        )?;
        model.set_flat(&params)?;
        Ok(model)
    };
    let model = build().map_err(|e| bad(e.to_string()))?;
    Ok((model, header.config))
}

pub fn write_model(path: &Path, model: &PinnModel, config: Option<&TrainConfig>) -> Result<()> {
    write_atomic(path, &model_to_bytes(model, config))
}

pub fn read_model(path: &Path) -> Result<(PinnModel, Option<TrainConfig>)> {
    let bytes = fs::read(path).map_err(|e| Error::format(path, format!("cannot read: {e}")))?;
    model_from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinn::init_params;
    use crate::sma::REFERENCE_RADIUS;

    #[test]
    fn geometry_round_trip() {
        let g = ArrayGeometry::reference(REFERENCE_RADIUS, Enclosure::Rigid).unwrap();
        let text = format_geometry(&g);
        assert_eq!(parse_geometry(&text, Path::new("g")).unwrap(), g);
        let commented = format!("# layout\n\n{text}");
        assert_eq!(parse_geometry(&commented, Path::new("g")).unwrap(), g);
    }

    #[test]
    fn geometry_rejects_malformed_input() {
        let p = Path::new("g.txt");
        for text in [
            "",
            "0.042\n0 0 12.566370614359172\n",
            "0.042 closed\n0 0 12.566370614359172\n",
            "0.042 open\n0 0\n",
            "0.042 open\n4.0 0 12.566370614359172\n",
            "0.042 open\n0 0 1.0\n",
            "0.042 open\n0 x 12.566370614359172\n",
        ] {
            assert!(matches!(parse_geometry(text, p), Err(Error::Format { .. })), "{text:?}");
        }
    }

    #[test]
    fn field_round_trip_is_exact() {
        let g = ArrayGeometry::reference(REFERENCE_RADIUS, Enclosure::Open).unwrap();
        let p: Vec<Complex64> = (0..64).map(|i| Complex64::new((i as f64).sin() / 3.0, 1e-300 * i as f64)).collect();
        let f = ComplexPressureField::new(g, vec![1.0, 2.5], p)
            .unwrap()
            .with_spectrum(Some(SpectrumLayout { fs: 16000.0, length: 128, bins: vec![1, 3], c: 343.0 }))
            .unwrap();
        let text = field_to_string(&f);
        assert!(text.contains(FIELD_FORMAT));
        assert_eq!(field_from_str(&text, Path::new("f")).unwrap(), f);
        let tampered = text.replace(FIELD_FORMAT, "spherepinn-field/9");
        assert!(field_from_str(&tampered, Path::new("f")).is_err());
    }

    #[test]
    fn signals_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.f64");
        let s = TimeSignalSet::new(16000.0, vec![vec![1.0, -2.5, 3.0], vec![0.0, 1e-12, f64::MIN_POSITIVE]]).unwrap();
        write_signals(&path, &s).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 48);
        assert_eq!(read_signals(&path).unwrap(), s);
        fs::write(&path, [0u8; 40]).unwrap();
        assert!(read_signals(&path).is_err());
    }

    #[test]
    fn model_round_trip() {
        let cfg = TrainConfig { hidden_width: 16, hidden_layers: 2, ..TrainConfig::default() };
        let mut m = init_params(&cfg, &[3.0, 9.0, 12.0], REFERENCE_RADIUS, 5).unwrap();
        m.pressure_scale = 0.25;
        let bytes = model_to_bytes(&m, Some(&cfg));
        assert_eq!(&bytes[..8], MODEL_MAGIC);
        let (back, echoed) = model_from_bytes(&bytes, Path::new("m")).unwrap();
        assert_eq!(back, m);
        assert_eq!(echoed, Some(cfg));
        assert!(model_from_bytes(&bytes[..bytes.len() - 8], Path::new("m")).is_err());
        let mut wrong = bytes.clone();
        wrong[8] = 2;
        assert!(model_from_bytes(&wrong, Path::new("m")).is_err());
    }
}
