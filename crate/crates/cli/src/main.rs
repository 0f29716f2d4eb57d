use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptive_bacf::eval::{
    emit_results, load_sequence, parse_trajectory, run_ope_with, EvalResult, SequenceSpec, TrackerRunner,
};
use adaptive_bacf::toy::{write_toy, ToyKind};
use adaptive_bacf::{BoundingBox, ConfigFile, Error, ProviderKind, StepReport, TrackerConfig};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use image::{Rgb, RgbImage};
use log::{error, info};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "bacf", version, about = "Adaptive background-aware correlation-filter tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track one sequence and write its trajectory and metrics.
    Track {
        /// Sequence directory with img/ and groundtruth_rect.txt.
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// One-pass evaluation over every sequence directory under --seqs.
    Eval {
        #[arg(long)]
        seqs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sequences tracked in parallel.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        jobs: u32,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Draw a trajectory (red) and the ground truth (green) onto the frames.
    Overlay {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic test sequence.
    MakeToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "moving")]
        kind: ToyKind,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Flat TOML file of tracker settings; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    provider: Option<ProviderKind>,
    /// Feature server as host:port.
    #[arg(long, env = "BACF_SERVER")]
    server: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn effective_config(&self) -> Result<TrackerConfig, Error> {
        let mut config = match &self.config {
            Some(path) => TrackerConfig::from_file(&ConfigFile::load(path)?)?,
            None => TrackerConfig::default(),
        };
        if let Some(p) = self.provider {
            config.deep_provider = p;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config.validate()?;
        Ok(config)
    }
}

fn usage_error(kind: ErrorKind, msg: &str) -> ExitCode {
    let _ = Cli::command().error(kind, msg).print();
    ExitCode::from(2)
}

fn runtime_error(e: &dyn std::error::Error) -> ExitCode {
    let mut msg = e.to_string();
    let mut source = e.source();
    while let Some(s) = source {
        let _ = write!(msg, ": {s}");
        source = s.source();
    }
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

/// Loads the configuration and checks the provider has an endpoint.
fn prepare(run: &RunArgs) -> Result<TrackerConfig, ExitCode> {
    let config = run.effective_config().map_err(|e| runtime_error(&e))?;
    if config.deep_provider == ProviderKind::Remote && run.server.is_none() {
        return Err(usage_error(
            ErrorKind::MissingRequiredArgument,
            "the remote provider needs --server <host:port> (or BACF_SERVER)",
        ));
    }
    Ok(config)
}

fn config_table(config: &TrackerConfig) -> Result<toml::Table, Error> {
    ConfigFile::from_config(config).to_table()
}

fn format_reports(reports: &[StepReport]) -> String {
    let mut s = String::from("frame,source,score,reliable,local_peaks,cnn_trained,fc7,rejection,memory\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{:?},{},{},{},{},{},{},{}",
            r.frame,
            r.source,
            r.score,
            r.reliability == adaptive_bacf::Reliability::Reliable,
            r.local_peaks,
            r.cnn_trained,
            r.flags.fc7 as u8,
            r.flags.rejection as u8,
            r.memory_len
        );
    }
    s
}

fn track_sequence(seq: &SequenceSpec, out: &Path, config: &TrackerConfig, server: Option<&str>) -> Result<EvalResult, Error> {
    let mut runner = TrackerRunner::<f64>::new(config.clone(), server.map(str::to_string));
    let result = run_ope_with(&mut runner, seq)?;
    emit_results(&result, out, Some(&config_table(config)?))?;
    let path = out.join("frames.csv");
    fs::write(&path, format_reports(runner.reports())).map_err(|e| Error::Io { path, source: e })?;
    info!(
        "{}: auc {:.3}, precision@20 {:.3}, {:.1} fps",
        result.name, result.auc, result.precision_at_20, result.fps
    );
    Ok(result)
}

fn cmd_track(seq: &Path, out: &Path, run: &RunArgs) -> ExitCode {
    let config = match prepare(run) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let result = load_sequence(seq).and_then(|s| track_sequence(&s, out, &config, run.server.as_deref()));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => runtime_error(&e),
    }
}

#[derive(Serialize)]
struct Aggregate {
    sequences: usize,
    evaluated: Vec<String>,
    failed: Vec<String>,
    mean_auc: f64,
    mean_precision_at_20: f64,
    total_failures: usize,
}

fn sequence_dirs(root: &Path) -> Result<Vec<PathBuf>, Error> {
    let entries = fs::read_dir(root).map_err(|e| Error::Io {
        path: root.to_path_buf(),
        source: e,
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("img").is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn write_file(path: PathBuf, text: &str) -> Result<(), Error> {
    fs::write(&path, text).map_err(|source| Error::Io { path, source })
}

fn cmd_eval(seqs: &Path, out: &Path, jobs: u32, run: &RunArgs) -> ExitCode {
    let config = match prepare(run) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let dirs = match sequence_dirs(seqs) {
        Ok(d) if d.is_empty() => {
            eprintln!("error: no sequences found in {}", seqs.display());
            return ExitCode::from(1);
        }
        Ok(d) => d,
        Err(e) => return runtime_error(&e),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs as usize).build() {
        Ok(p) => p,
        Err(e) => return runtime_error(&e),
    };
    let server = run.server.as_deref();
    let outcomes: Vec<(String, Result<EvalResult, Error>)> = pool.install(|| {
        dirs.par_iter()
            .map(|dir| {
                let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
                let result = load_sequence(dir).and_then(|s| track_sequence(&s, &out.join(&name), &config, server));
                (name, result)
            })
            .collect()
    });

    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (name, outcome) in outcomes {
        match outcome {
            Ok(r) => ok.push(r),
            Err(e) => {
                error!("{name}: {e}");
                eprintln!("warning: skipping {name}: {e}");
                failed.push(name);
            }
        }
    }
    let n = ok.len().max(1) as f64;
    let aggregate = Aggregate {
        sequences: ok.len() + failed.len(),
        evaluated: ok.iter().map(|r| r.name.clone()).collect(),
        failed,
        mean_auc: ok.iter().map(|r| r.auc).sum::<f64>() / n,
        mean_precision_at_20: ok.iter().map(|r| r.precision_at_20).sum::<f64>() / n,
        total_failures: ok.iter().map(|r| r.failures).sum(),
    };
    let written = (|| -> Result<(), Error> {
        let mut table = toml::Table::try_from(&aggregate).map_err(|e| Error::Config(e.to_string()))?;
        table.insert("config".into(), toml::Value::Table(config_table(&config)?));
        fs::create_dir_all(out).map_err(|source| Error::Io {
            path: out.to_path_buf(),
            source,
        })?;
        write_file(out.join("aggregate.toml"), &toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?)?;
        let mean_fps = ok.iter().map(|r| r.fps).sum::<f64>() / n;
        write_file(out.join("timing.toml"), &format!("mean_fps = {mean_fps}\n"))
    })();
    match written {
        Ok(()) if ok.is_empty() => {
            eprintln!("error: every sequence failed");
            ExitCode::from(1)
        }
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => runtime_error(&e),
    }
}

/// Draws a 2-pixel rectangle outline, clipped to the image.
fn draw_box(img: &mut RgbImage, b: &BoundingBox, colour: Rgb<u8>) {
    let (x0, y0, x1, y1) = b.extent();
    // extents are 1-based and half-open
    let (x0, y0) = ((x0 - 1.0).round() as i64, (y0 - 1.0).round() as i64);
    let (x1, y1) = ((x1 - 1.0).round() as i64 - 1, (y1 - 1.0).round() as i64 - 1);
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, colour);
        }
    };
    for t in 0..2 {
        for x in x0.max(-1)..=x1.min(w) {
            put(x, y0 + t);
            put(x, y1 - t);
        }
        for y in y0.max(-1)..=y1.min(h) {
            put(x0 + t, y);
            put(x1 - t, y);
        }
    }
}

fn cmd_overlay(seq: &Path, traj: &Path, out: &Path) -> ExitCode {
    let run = || -> Result<(), Error> {
        let seq = load_sequence(seq)?;
        let boxes = parse_trajectory(traj)?;
        if boxes.len() != seq.len() {
            return Err(Error::Input(format!(
                "trajectory has {} boxes for {} frames",
                boxes.len(),
                seq.len()
            )));
        }
        fs::create_dir_all(out).map_err(|source| Error::Io {
            path: out.to_path_buf(),
            source,
        })?;
        for (i, b) in boxes.iter().enumerate() {
            let mut frame = seq.load_frame(i)?;
            if let Some(gt) = &seq.ground_truth[i] {
                draw_box(&mut frame, gt, Rgb([0, 255, 0]));
            }
            draw_box(&mut frame, b, Rgb([255, 0, 0]));
            let path = out.join(format!("{:04}.png", i + 1));
            frame.save(&path).map_err(|source| Error::Image { path, source })?;
        }
        Ok(())
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => runtime_error(&e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Track { seq, out, run } => cmd_track(seq, out, run),
        Command::Eval { seqs, out, jobs, run } => cmd_eval(seqs, out, *jobs, run),
        Command::Overlay { seq, traj, out } => cmd_overlay(seq, traj, out),
        Command::MakeToy { out, kind, seed } => match write_toy(out, *kind, *seed) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => runtime_error(&e),
        },
    }
}
