//! Command-line experiment driver.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 synthesis or
//! upsampling failure, 4 data mismatch, 5 training abort. The log level is
//! read from `SPHEREPINN_LOG` (`error`, `warn`, `info`, `debug`).

pub mod config;
pub mod experiment;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::evalkit::{freq_to_time, nmse_freq, nmse_time, NmseReport};
use crate::io;
use crate::pinn::{predict, train, ObservationSet};
use crate::sma::{subset_select, ArrayGeometry};

pub use config::{synthesize, ExperimentConfig, Method, Scene, SceneSpec};
pub use experiment::{run_experiment, write_report, RunReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SYNTHESIS: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;
pub const EXIT_TRAINING: i32 = 5;

/// Exit code for an error.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::InvalidConfig(_) | Error::Format { .. } | Error::Io(_) => EXIT_CONFIG,
        Error::ShapeMismatch(_) => EXIT_MISMATCH,
        Error::NonFiniteLoss { .. } => EXIT_TRAINING,
        Error::Domain(_)
        | Error::OrderTooHigh { .. }
        | Error::BesselNull { .. }
        | Error::EnclosureUnsupported(_)
        | Error::InvalidGeometry(_) => EXIT_SYNTHESIS,
    }
}

#[derive(Debug, Parser)]
#[command(name = "spherepinn", version, about = "Spatial upsampling of spherical microphone array recordings")]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesise the reference scene: geometry, field and signal files.
    Synth,
    /// Full experiment: subsets, baseline and network upsampling, NMSE report.
    Run,
    /// NMSE of an estimate against a reference (signal or field files).
    Eval { estimate: PathBuf, reference: PathBuf },
    /// Maximin capsule subset of the configured geometry.
    Subset {
        #[arg(long)]
        q: usize,
    },
    /// Train a model on a field file.
    Train {
        field: PathBuf,
        /// Train on a maximin subset of this size instead of all capsules.
        #[arg(long)]
        q: Option<usize>,
    },
    /// Evaluate a model at target directions.
    Predict {
        model: PathBuf,
        /// Geometry file of target directions; the configured geometry otherwise.
        #[arg(long)]
        targets: Option<PathBuf>,
        /// Field file whose spectrum layout is reused to also write signals.
        #[arg(long)]
        like: Option<PathBuf>,
    },
}

struct Context {
    cfg: ExperimentConfig,
    out: PathBuf,
}

fn context(cli: &Cli) -> Result<Context> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    let out = cfg.output.clone();
    Ok(Context { cfg, out })
}

fn print_report(report: &NmseReport) {
    println!("NMSE: {:.2} dB", report.overall_db);
}

fn report_csv(report: &NmseReport) -> String {
    let mut out = String::from("# spherepinn nmse-report v1\nkind,index,nmse_db\n");
    out.push_str(&format!("overall,,{:.4}\n", report.overall_db));
    for (i, v) in report.per_channel_db.iter().enumerate() {
        out.push_str(&format!("channel,{i},{v:.4}\n"));
    }
    for (j, v) in report.per_frequency_db.iter().flatten().enumerate() {
        out.push_str(&format!("frequency,{j},{v:.4}\n"));
    }
    out
}

fn is_field_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

fn cmd_synth(ctx: &Context) -> Result<()> {
    let geometry = ctx.cfg.validate()?;
    let scene = synthesize(&ctx.cfg, &geometry)?;
    io::write_geometry(&ctx.out.join("geometry.txt"), &scene.geometry)?;
    io::write_field(&ctx.out.join("reference_field.json"), &scene.field)?;
    io::write_field(&ctx.out.join("observed_field.json"), &scene.observed)?;
    io::write_signals(&ctx.out.join("reference_signals.f64"), &scene.signals)?;
    println!(
        "synthesised {} channels x {} samples, {} bins -> {}",
        scene.signals.channel_count(),
        scene.signals.len(),
        scene.field.bin_count(),
        ctx.out.display()
    );
    Ok(())
}

fn cmd_run(ctx: &Context) -> Result<()> {
    let geometry = ctx.cfg.validate()?;
    let scene = synthesize(&ctx.cfg, &geometry)?;
    let (report, error) = run_experiment(&ctx.cfg, &scene);
    write_report(&ctx.out, &ctx.cfg, &scene, &report)?;
    print!("{}", experiment::nmse_table_csv(&ctx.cfg, &report));
    match error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_eval(ctx: &Context, estimate: &Path, reference: &Path) -> Result<()> {
    let report = if is_field_file(estimate) && is_field_file(reference) {
        nmse_freq(&io::read_field(estimate)?, &io::read_field(reference)?)?
    } else {
        nmse_time(&io::read_signals(estimate)?, &io::read_signals(reference)?)?
    };
    print_report(&report);
    fs::create_dir_all(&ctx.out)?;
    fs::write(ctx.out.join("eval.csv"), report_csv(&report))?;
    Ok(())
}

fn cmd_subset(ctx: &Context, q: usize) -> Result<()> {
    let geometry = ctx.cfg.validate()?;
    let (subset, indices) = subset_select(&geometry, q)?;
    let list: Vec<String> = indices.iter().map(usize::to_string).collect();
    println!("{}", list.join(" "));
    io::write_geometry(&ctx.out.join(format!("subset_q{q}.txt")), &subset)?;
    Ok(())
}

fn cmd_train(ctx: &Context, field: &Path, q: Option<usize>) -> Result<()> {
    ctx.cfg.train.validate()?;
    let mut data = io::read_field(field)?;
    if let Some(q) = q {
        let (_, idx) = subset_select(data.geometry(), q)?;
        data = data.select(&idx)?;
    }
    let mut tc = ctx.cfg.train.clone();
    tc.seed = ctx.cfg.seed;
    let (model, trace) = train(&ObservationSet::from_field(&data)?, &tc)?;
    fs::create_dir_all(&ctx.out)?;
    io::write_model(&ctx.out.join("model.bin"), &model, Some(&tc))?;
    fs::write(ctx.out.join("loss_trace.csv"), experiment::trace_csv(&trace, &tc))?;
    if let Some(last) = trace.last() {
        println!("final loss {:.6e} (data {:.6e}, pde {:.6e})", last.total, last.data, last.pde);
    }
    Ok(())
}

fn cmd_predict(ctx: &Context, model: &Path, targets: Option<&Path>, like: Option<&Path>) -> Result<()> {
    let (model, _) = io::read_model(model)?;
    let geometry: ArrayGeometry = match targets {
        Some(path) => io::read_geometry(path)?,
        None => ctx.cfg.validate()?,
    };
    let mut field = predict(&model, &geometry)?;
    if let Some(path) = like {
        let layout = io::read_field(path)?.spectrum().cloned();
        field = field.with_spectrum(layout)?;
    }
    io::write_field(&ctx.out.join("predicted_field.json"), &field)?;
    if let Some(layout) = field.spectrum() {
        let signals = freq_to_time(&field, layout.fs, layout.length)?;
        io::write_signals(&ctx.out.join("predicted_signals.f64"), &signals)?;
    }
    println!("predicted {} directions x {} bins", field.capsule_count(), field.bin_count());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let ctx = context(cli)?;
    match &cli.command {
        Command::Synth => cmd_synth(&ctx),
        Command::Run => cmd_run(&ctx),
        Command::Eval { estimate, reference } => cmd_eval(&ctx, estimate, reference),
        Command::Subset { q } => cmd_subset(&ctx, *q),
        Command::Train { field, q } => cmd_train(&ctx, field, *q),
        Command::Predict { model, targets, like } => cmd_predict(&ctx, model, targets.as_deref(), like.as_deref()),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPHEREPINN_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = match cli.jobs {
        Some(0) => Err(Error::InvalidConfig("--jobs must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Error::InvalidConfig(format!("cannot start {n} workers: {e}"))),
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
