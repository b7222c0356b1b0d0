//! `misac`: run the sensing pipeline, or any single stage of it, from the
//! command line.
//!
//! Every subcommand works on a run manifest. Pass one with `--manifest`, or
//! let the flags build one. When both give a value, the manifest wins and a
//! warning is logged. Log verbosity comes from `MISAC_LOG` (e.g.
//! `MISAC_LOG=debug`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use misac_core::eval::EvalReport;
use misac_core::manifest::{RunManifest, Stages};
use misac_core::microdoppler::Window;
use misac_core::pipeline::run_pipeline;
use misac_core::scenarios::Preset;
use misac_core::sync::MissingLos;
use misac_core::{Error, Exec};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "misac", version, about = "Multistatic ISAC sensing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize raw CIR streams and the ground-truth log.
    Simulate(RunArgs),
    /// Align each raw stream to its LOS tap and remove the frequency offset.
    Sync(RunArgs),
    /// Background subtraction, peak picking and bistatic localization.
    Detect(RunArgs),
    /// EKF tracking of the detections.
    Track(RunArgs),
    /// Micro-Doppler spectrogram along the longest track.
    Mdoppler(RunArgs),
    /// Score existing artifacts against the ground truth.
    Eval(RunArgs),
    /// Every stage, simulate through evaluate.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ExecArg {
    Sequential,
    Parallel,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Static,
    Walker,
    SitStand,
    TwoGeometry,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnMissingArg {
    ReusePrevious,
    Drop,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Hann,
    Rectangular,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run manifest (TOML). Its values take precedence over the flags below.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Scene description (TOML).
    #[arg(long, conflicts_with = "preset")]
    scene: Option<PathBuf>,
    /// Built-in scene, written to `<out>/scene.toml`.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Preset duration, s.
    #[arg(long, default_value_t = 10.0, requires = "preset")]
    duration: f64,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    exec: Option<ExecArg>,
    #[arg(long)]
    chunk_frames: Option<usize>,

    /// Sync threshold multiplier.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_enum)]
    on_missing: Option<OnMissingArg>,
    /// Detection floor multiplier.
    #[arg(long)]
    floor_kappa: Option<f64>,
    /// Background window, frames (default: whole clip).
    #[arg(long)]
    background_window: Option<usize>,
    /// Tracker update every this many frames.
    #[arg(long)]
    decimation: Option<usize>,
    #[arg(long)]
    window_len: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long, value_enum)]
    window: Option<WindowArg>,
}

fn stages_for(cmd: &Command) -> (Stages, &RunArgs) {
    let only = |f: fn(&mut Stages)| {
        let mut s = Stages::all(false);
        f(&mut s);
        s
    };
    match cmd {
        Command::Simulate(a) => (only(|s| s.simulate = true), a),
        Command::Sync(a) => (only(|s| s.sync = true), a),
        Command::Detect(a) => (only(|s| s.detect = true), a),
        Command::Track(a) => (only(|s| s.track = true), a),
        Command::Mdoppler(a) => (only(|s| s.mdoppler = true), a),
        Command::Eval(a) => (only(|s| s.evaluate = true), a),
        Command::Run(a) => (Stages::all(true), a),
    }
}

/// Tracks which manifest keys were written explicitly, so a flag only
/// overrides values the manifest left at their defaults.
struct Merge {
    table: Option<toml::Table>,
}

impl Merge {
    fn present(&self, path: &[&str]) -> bool {
        let Some(mut t) = self.table.as_ref() else {
            return false;
        };
        for (i, key) in path.iter().enumerate() {
            match t.get(*key) {
                Some(toml::Value::Table(sub)) if i + 1 < path.len() => t = sub,
                Some(_) if i + 1 == path.len() => return true,
                _ => return false,
            }
        }
        false
    }

    fn set<T: PartialEq + std::fmt::Debug>(&self, path: &[&str], slot: &mut T, flag: Option<T>) {
        let Some(v) = flag else { return };
        if self.present(path) {
            if *slot != v {
                log::warn!(
                    "--{} {v:?} ignored: the manifest sets {} = {:?}",
                    path.last().unwrap().replace('_', "-"),
                    path.join("."),
                    slot
                );
            }
        } else {
            *slot = v;
        }
    }
}

fn build_manifest(args: &RunArgs, stages: Stages) -> anyhow::Result<RunManifest> {
    let (mut m, merge) = match &args.manifest {
        Some(path) => {
            let m = RunManifest::load(path)?;
            let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
            let table = text.parse::<toml::Table>().ok();
            (m, Merge { table })
        }
        None => {
            let out = args
                .out
                .clone()
                .ok_or_else(|| Error::Config("--out is required without --manifest".into()))?;
            let scene = match (&args.scene, args.preset) {
                (Some(s), _) => s.clone(),
                (None, Some(_)) => out.join("scene.toml"),
                (None, None) => {
                    return Err(Error::Config(
                        "one of --manifest, --scene or --preset is required".into(),
                    )
                    .into())
                }
            };
            (RunManifest::new(scene, out), Merge { table: None })
        }
    };

    merge.set(&["output_dir"], &mut m.output_dir, args.out.clone());
    if args.preset.is_none() {
        merge.set(&["scene"], &mut m.scene, args.scene.clone());
    }
    merge.set(&["rng_seed"], &mut m.rng_seed, args.seed.map(Some));
    merge.set(
        &["exec"],
        &mut m.exec,
        args.exec.map(|e| match e {
            ExecArg::Sequential => Exec::Sequential,
            ExecArg::Parallel => Exec::Parallel,
        }),
    );
    merge.set(&["chunk_frames"], &mut m.chunk_frames, args.chunk_frames);
    let p = &mut m.params;
    merge.set(&["params", "sync", "kappa"], &mut p.sync.kappa, args.kappa);
    merge.set(
        &["params", "sync", "on_missing"],
        &mut p.sync.on_missing,
        args.on_missing.map(|o| match o {
            OnMissingArg::ReusePrevious => MissingLos::ReusePrevious,
            OnMissingArg::Drop => MissingLos::Drop,
        }),
    );
    merge.set(
        &["params", "detect", "floor_kappa"],
        &mut p.detect.floor_kappa,
        args.floor_kappa,
    );
    merge.set(
        &["params", "detect", "background_window"],
        &mut p.detect.background_window,
        args.background_window.map(Some),
    );
    merge.set(
        &["params", "tracker", "decimation"],
        &mut p.tracker.decimation,
        args.decimation.map(Some),
    );
    merge.set(
        &["params", "mdoppler", "window_len"],
        &mut p.mdoppler.window_len,
        args.window_len,
    );
    merge.set(
        &["params", "mdoppler", "hop"],
        &mut p.mdoppler.hop,
        args.hop,
    );
    merge.set(
        &["params", "mdoppler", "window"],
        &mut p.mdoppler.window,
        args.window.map(|w| match w {
            WindowArg::Hann => Window::Hann,
            WindowArg::Rectangular => Window::Rectangular,
        }),
    );
    m.stages = stages;

    m.validate()?;

    match (args.preset, &args.manifest) {
        (Some(_), Some(_)) => log::warn!(
            "--preset ignored: the manifest names scene {}",
            m.scene.display()
        ),
        (Some(preset), None) => {
            write_preset(preset, args.duration, args.seed.unwrap_or(0), &m.scene)?
        }
        (None, _) => {}
    }
    Ok(m)
}

fn write_preset(preset: PresetArg, duration: f64, seed: u64, path: &Path) -> anyhow::Result<()> {
    let p = match preset {
        PresetArg::Static => Preset::Static,
        PresetArg::Walker => Preset::Walker,
        PresetArg::SitStand => Preset::SitStand,
        PresetArg::TwoGeometry => Preset::TwoGeometry,
    };
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::Config(format!("duration must be positive, got {duration}")).into());
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| anyhow::Error::new(e).context(dir.display().to_string()))?;
    }
    std::fs::write(path, p.scene(duration, seed).to_toml())
        .map_err(|e| anyhow::Error::new(e).context(path.display().to_string()))?;
    log::info!("wrote {} scene to {}", p.name(), path.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Error>() {
        if e.is_config() {
            EXIT_CONFIG
        } else if e.is_io() {
            EXIT_IO
        } else {
            EXIT_STAGE
        }
    } else if err.downcast_ref::<std::io::Error>().is_some() {
        EXIT_IO
    } else {
        EXIT_STAGE
    }
}

fn print_summary(report: &EvalReport) {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for r in &report.receivers {
        println!(
            "rx{}: frames {} | LOS {} | FO std {} rad | det {} FA/frame {} | loc {} m | tracks {} RMSE {} m | uD MAE {} Hz | xi {}",
            r.rx_id,
            r.frames,
            f(r.los_detection_rate),
            f(r.residual_fo_phase_std),
            f(r.detection_rate),
            f(r.false_alarms_per_frame),
            f(r.localization_median_error),
            r.confirmed_tracks.map_or("-".into(), |n| n.to_string()),
            f(r.track_rmse),
            f(r.mdoppler_mae_hz),
            f(r.xi),
        );
    }
    if let Some(x) = &report.xi_ratio {
        println!(
            "xi ratio rx{}/rx{}: observed {:.4}, predicted {:.4}, error {:.2}%",
            x.rx_a,
            x.rx_b,
            x.observed,
            x.predicted,
            100.0 * x.relative_error
        );
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (stages, args) = stages_for(&cli.command);
    let manifest = build_manifest(args, stages)?;
    log::debug!("manifest:\n{}", manifest.to_toml()?);
    let report = run_pipeline(&manifest)?;
    for t in &report.timings {
        match t.rx_id {
            Some(rx) => log::info!("{} rx{rx}: {:.3} s", t.stage, t.seconds),
            None => log::info!("{}: {:.3} s", t.stage, t.seconds),
        }
    }
    if stages.evaluate {
        print_summary(&report);
        println!("report: {}", manifest.report_path().display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MISAC_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
