//! The subset -> upsample -> evaluate pipeline and its report files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Method, Scene};
use crate::error::{Error, Result};
use crate::evalkit::{freq_to_time, nmse_time, NmseReport, TimeSignalSet};
use crate::io;
use crate::pinn::{cosine_lr, predict, train, LossTerms, ObservationSet, PinnModel, TrainConfig};
use crate::sma::{baseline_upsample, subset_select, ComplexPressureField};

pub const NMSE_TABLE_HEADER: &str = "# spherepinn nmse-table v1; baseline = order-limited spherical-harmonics \
interpolation standing in for SARITA; NMSE in dB over all capsules";

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    pub q: usize,
    pub nmse: NmseReport,
    /// Reconstructed signals at every capsule.
    pub estimate: TimeSignalSet,
    pub trace: Option<Vec<LossTerms>>,
    pub model: Option<(PinnModel, TrainConfig)>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub subsets: Vec<(usize, Vec<usize>)>,
    pub results: Vec<MethodResult>,
    pub waveform_channel: usize,
}

impl RunReport {
    pub fn nmse(&self, method: Method, q: usize) -> Option<f64> {
        self.results.iter().find(|r| r.method == method && r.q == q).map(|r| r.nmse.overall_db)
    }
}

/// Upsamples a subset observation to every capsule of the scene geometry.
pub fn upsample(
    method: Method,
    cfg: &ExperimentConfig,
    scene: &Scene,
    subset: &ComplexPressureField,
) -> Result<(ComplexPressureField, Option<Vec<LossTerms>>, Option<(PinnModel, TrainConfig)>)> {
    let layout = scene.field.spectrum().cloned();
    let full = &scene.geometry;
    match method.train_config(&cfg.train) {
        None => {
            let up = baseline_upsample(subset, full.capsules())?;
            let field = ComplexPressureField::new(full.clone(), up.wavenumbers().to_vec(), up.pressures().to_vec())?
                .with_spectrum(layout)?;
            Ok((field, None, None))
        }
        Some(mut tc) => {
            tc.seed = cfg.seed;
            let obs = ObservationSet::from_field(subset)?;
            let (model, trace) = train(&obs, &tc)?;
            let field = predict(&model, full)?.with_spectrum(layout)?;
            Ok((field, Some(trace), Some((model, tc))))
        }
    }
}

fn run_one(method: Method, q: usize, indices: &[usize], cfg: &ExperimentConfig, scene: &Scene) -> Result<MethodResult> {
    info!("Q={q}: {}", method.name());
    let subset = scene.observed.select(indices)?;
    let (field, trace, model) = upsample(method, cfg, scene, &subset)?;
    let estimate = freq_to_time(&field, cfg.fs, cfg.length)?;
    let nmse = nmse_time(&estimate, &scene.reference)?;
    info!("Q={q}: {} NMSE {:.2} dB", method.name(), nmse.overall_db);
    Ok(MethodResult { method, q, nmse, estimate, trace, model })
}

/// Runs every (Q, method) job. Jobs may run in parallel; results keep
/// the configured order. Returns the completed results and the first error.
pub fn run_experiment(cfg: &ExperimentConfig, scene: &Scene) -> (RunReport, Option<Error>) {
    let mut subsets = Vec::new();
    let mut first_error = None;
    for &q in &cfg.subset_sizes {
        match subset_select(&scene.geometry, q) {
            Ok((_, idx)) => subsets.push((q, idx)),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let jobs: Vec<(usize, &[usize], Method)> = subsets
        .iter()
        .flat_map(|(q, idx)| cfg.methods.iter().map(move |&m| (*q, idx.as_slice(), m)))
        .collect();
    let outcomes: Vec<Result<MethodResult>> =
        jobs.par_iter().map(|&(q, idx, m)| run_one(m, q, idx, cfg, scene)).collect();
    let mut results = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let waveform_channel = cfg.waveform_channel.unwrap_or_else(|| {
        let largest = subsets.iter().max_by_key(|(q, _)| *q).map(|(_, i)| i.as_slice()).unwrap_or(&[]);
        (0..scene.geometry.len()).find(|c| !largest.contains(c)).unwrap_or(0)
    });
    (RunReport { subsets, results, waveform_channel }, first_error)
}

pub fn nmse_table_csv(cfg: &ExperimentConfig, report: &RunReport) -> String {
    let mut out = String::new();
    writeln!(out, "{NMSE_TABLE_HEADER}").unwrap();
    write!(out, "method,label").unwrap();
    for q in &cfg.subset_sizes {
        write!(out, ",Q{q}").unwrap();
    }
    out.push('\n');
    for &m in &cfg.methods {
        write!(out, "{},{}", m.name(), m.label()).unwrap();
        for &q in &cfg.subset_sizes {
            match report.nmse(m, q) {
                Some(v) => write!(out, ",{v:.4}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

fn per_channel_csv(report: &RunReport) -> String {
    let mut out = String::from("# spherepinn nmse-per-channel v1\nmethod,q,channel,nmse_db\n");
    for r in &report.results {
        for (ch, v) in r.nmse.per_channel_db.iter().enumerate() {
            writeln!(out, "{},{},{},{:.4}", r.method.name(), r.q, ch, v).unwrap();
        }
    }
    out
}

pub fn trace_csv(trace: &[LossTerms], cfg: &TrainConfig) -> String {
    let mut out = String::from("# spherepinn loss-trace v1; normalised pressure units\niteration,lr,total,data,pde\n");
    for (t, l) in trace.iter().enumerate() {
        writeln!(out, "{t},{:.9e},{:.9e},{:.9e},{:.9e}", cosine_lr(t, cfg), l.total, l.data, l.pde).unwrap();
    }
    out
}

fn waveform_csv(cfg: &ExperimentConfig, scene: &Scene, report: &RunReport) -> String {
    let ch = report.waveform_channel;
    let mut out = format!("# spherepinn waveforms v1; capsule {ch}\nsample,time_s,reference");
    for r in &report.results {
        write!(out, ",{}_q{}", r.method.name(), r.q).unwrap();
    }
    out.push('\n');
    for t in 0..cfg.length {
        write!(out, "{t},{:.9e},{:.9e}", t as f64 / cfg.fs, scene.reference.channel(ch)[t]).unwrap();
        for r in &report.results {
            write!(out, ",{:.9e}", r.estimate.channel(ch)[t]).unwrap();
        }
        out.push('\n');
    }
    out
}

fn subsets_csv(report: &RunReport) -> String {
    let mut out = String::from("# spherepinn subsets v1\nq,indices\n");
    for (q, idx) in &report.subsets {
        let list: Vec<String> = idx.iter().map(usize::to_string).collect();
        writeln!(out, "{q},{}", list.join(" ")).unwrap();
    }
    out
}

/// Writes every report file into `dir`.
pub fn write_report(dir: &Path, cfg: &ExperimentConfig, scene: &Scene, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("nmse_table.csv"), nmse_table_csv(cfg, report))?;
    fs::write(dir.join("nmse_per_channel.csv"), per_channel_csv(report))?;
    fs::write(dir.join("subsets.csv"), subsets_csv(report))?;
    fs::write(dir.join("waveforms.csv"), waveform_csv(cfg, scene, report))?;
    let echo = toml::to_string(cfg).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    fs::write(dir.join("config.toml"), echo)?;
    for r in &report.results {
        let stem = format!("q{}_{}", r.q, r.method.name());
        if let (Some(trace), Some((model, tc))) = (&r.trace, &r.model) {
            fs::write(dir.join(format!("loss_{stem}.csv")), trace_csv(trace, tc))?;
            io::write_model(&dir.join(format!("model_{stem}.bin")), model, Some(tc))?;
        }
    }
    Ok(())
}
