//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use convgroups::dominant_set::{DsConfig, Symmetrization};
use convgroups::eval::GroupMatchConfig;
use convgroups::net::{grad_check, grad_check_fixture};
use convgroups::pipeline::{
    detect, evaluate, forecast_corpus, train_model, Checkpoint, ForecastOptions, SceneDetection, Segment, TrainOptions,
};
use convgroups::scene::{load_scene_sequences, save_scene_sequences};
use convgroups::synth::{generate, SynthConfig};
use convgroups::train::TrainConfig;
use convgroups::Error;

type CliResult<T = ()> = std::result::Result<T, Box<dyn std::error::Error>>;

#[derive(Parser, Debug)]
#[command(
    name = "convgroups",
    version,
    about = "Detect and forecast conversation groups in social scenes"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labelled synthetic scene corpus
    Synth(SynthArgs),
    /// Train the affinity model and write a checkpoint plus a training log
    Train(TrainArgs),
    /// Predict affinities and groups for every frame of a segment
    Detect(DetectArgs),
    /// Score detections against ground truth
    Evaluate(EvaluateArgs),
    /// Forecast groups over a horizon and score them
    Forecast(ForecastArgs),
    /// Compare analytic and finite-difference gradients on a random model
    Gradcheck(GradcheckArgs),
}

/// Optional JSON file with any of these sections; command-line flags win.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    synth: SynthConfig,
    train: TrainOptions,
    ds: Option<DsConfig>,
    forecast: ForecastOptions,
    segment: Option<Segment>,
}

fn read_config(path: Option<&Path>) -> CliResult<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            Ok(serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

#[derive(Args, Debug)]
struct DsFlags {
    /// Minimum cohesion for a group (defaults to the checkpoint's tuned value)
    #[arg(long)]
    ds_threshold: Option<f64>,
    /// How directed affinities are made symmetric before clustering
    #[arg(long, value_parser = clap::value_parser!(Symmetrization))]
    symmetrize: Option<Symmetrization>,
}

impl DsFlags {
    fn apply(&self, ds: &mut DsConfig) {
        if let Some(t) = self.ds_threshold {
            ds.affinity_threshold = t;
        }
        if let Some(s) = self.symmetrize {
            ds.strategy = s;
        }
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_scenes: Option<usize>,
    #[arg(long)]
    n_people: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Expected group events per 100 steps
    #[arg(long)]
    event_rate: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path
    #[arg(long)]
    out: PathBuf,
    /// Training curve CSV (default: next to the checkpoint)
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use every k-th frame as the end of a training window
    #[arg(long)]
    sample_stride: Option<usize>,
    #[command(flatten)]
    ds: DsFlags,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// train, val, test or all
    #[arg(long)]
    segment: Option<Segment>,
    #[command(flatten)]
    ds: DsFlags,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Scenes with ground-truth groups
    #[arg(long)]
    data: PathBuf,
    /// Output of `detect`
    #[arg(long)]
    detections: PathBuf,
    /// JSON report path; the per-frame CSV is written next to it
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Match tolerance(s) to print; the report always holds both 2/3 and 1
    #[arg(long, num_args = 1..)]
    thr: Vec<f64>,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Observed frames per edge series
    #[arg(long)]
    history: Option<usize>,
    /// Frames between forecast windows
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    ds: DsFlags,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Persons per scene (the model sees n - 1 slots)
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    seq_len: usize,
    #[arg(long, default_value_t = 8)]
    hidden_size: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
}

pub const GRAD_TOLERANCE: f64 = 1e-5;

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Forecast(a) => forecast_cmd(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn synth(a: SynthArgs) -> CliResult {
    let mut cfg = read_config(a.config.as_deref())?.synth;
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.n_scenes = a.n_scenes.unwrap_or(cfg.n_scenes);
    cfg.n_people = a.n_people.unwrap_or(cfg.n_people);
    cfg.min_people = cfg.min_people.min(cfg.n_people);
    cfg.steps_per_scene = a.steps.unwrap_or(cfg.steps_per_scene);
    cfg.event_rate = a.event_rate.unwrap_or(cfg.event_rate);
    let seqs = generate(&cfg)?;
    save_scene_sequences(&seqs, &a.out)?;
    println!("wrote {} scenes to {}", seqs.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> CliResult {
    let file = read_config(a.config.as_deref())?;
    let mut opts = file.train;
    if let Some(ds) = file.ds {
        opts.ds = ds;
    }
    let t: &mut TrainConfig = &mut opts.train;
    t.hidden_size = a.hidden_size.unwrap_or(t.hidden_size);
    t.seq_len = a.seq_len.unwrap_or(t.seq_len);
    t.learning_rate = a.lr.unwrap_or(t.learning_rate);
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.seed = a.seed.unwrap_or(t.seed);
    opts.sample_stride = a.sample_stride.unwrap_or(opts.sample_stride);
    a.ds.apply(&mut opts.ds);
    if a.ds.ds_threshold.is_some() {
        opts.tune_threshold = false;
    }
    if t.seq_len == 0 {
        return Err("--seq-len must be at least 1".into());
    }

    let seqs = load_scene_sequences(&a.data)?;
    let (ckpt, log) = train_model(&seqs, &opts)?;
    ckpt.save(&a.out)?;
    let log_path = a.log.unwrap_or_else(|| sibling(&a.out, ".log.csv"));
    write_csv(&log_path, &log)?;
    for e in &log {
        eprintln!("epoch {:>3}  train {:.5}  val {:.5}", e.epoch, e.train_loss, e.val_loss);
    }
    println!(
        "checkpoint {} (ds threshold {:.3}, {}), log {}",
        a.out.display(),
        ckpt.ds.affinity_threshold,
        ckpt.ds.strategy,
        log_path.display()
    );
    Ok(())
}

fn detect_cmd(a: DetectArgs) -> CliResult {
    let file = read_config(a.config.as_deref())?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let mut ds = file.ds.unwrap_or_else(|| ckpt.ds.clone());
    a.ds.apply(&mut ds);
    ds.validate()?;
    let segment = a.segment.or(file.segment).unwrap_or(Segment::Test);
    let seqs = load_scene_sequences(&a.data)?;
    let dets = detect(&ckpt, &seqs, segment, &ds)?;
    write_json(&a.out, &dets)?;
    let frames: usize = dets.iter().map(|d| d.frames.len()).sum();
    println!("wrote detections for {frames} frames to {}", a.out.display());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> CliResult {
    let thrs = if a.thr.is_empty() {
        vec![2.0 / 3.0, 1.0]
    } else {
        a.thr.clone()
    };
    let thrs: Vec<GroupMatchConfig> = thrs.into_iter().map(GroupMatchConfig::new).collect::<Result<_, _>>()?;
    let seqs = load_scene_sequences(&a.data)?;
    let text = fs::read_to_string(&a.detections).map_err(|e| format!("{}: {e}", a.detections.display()))?;
    let dets: Vec<SceneDetection> =
        serde_json::from_str(&text).map_err(|e| format!("{}: not a detection file: {e}", a.detections.display()))?;
    let report = evaluate(&dets, &seqs)?;
    write_json(&a.out, &report)?;
    let csv_path = a.csv.unwrap_or_else(|| a.out.with_extension("csv"));
    write_csv(&csv_path, &report.per_frame)?;

    println!("frames {}", report.frames);
    for t in thrs {
        let f1 = if t.thr >= 1.0 {
            report.mean_f1_thr1
        } else if t.thr == GroupMatchConfig::TWO_THIRDS.thr {
            report.mean_f1_thr23
        } else {
            return Err(format!("--thr {} is not reported; use 0.667 or 1.0", t.thr).into());
        };
        println!("F1@{:.3}  {f1:.4}", t.thr);
    }
    match report.auc {
        Some(v) => println!("AUC      {v:.4}"),
        None => println!("AUC      n/a"),
    }
    println!("D    scenes  F1@2/3  F1@1");
    for r in &report.f1_by_dynamics {
        println!(
            "{:<4} {:>6}  {:.4}  {:.4}",
            r.dynamics, r.scenes, r.mean_f1_thr23, r.mean_f1_thr1
        );
    }
    Ok(())
}

fn forecast_cmd(a: ForecastArgs) -> CliResult {
    let file = read_config(a.config.as_deref())?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let mut opts = file.forecast;
    opts.forecast.ds = file.ds.unwrap_or_else(|| ckpt.ds.clone());
    a.ds.apply(&mut opts.forecast.ds);
    opts.forecast.ds.validate()?;
    opts.forecast.horizon = a.horizon.unwrap_or(opts.forecast.horizon);
    opts.forecast.n_samples = a.n_samples.unwrap_or(opts.forecast.n_samples);
    opts.forecast.seed = a.seed.unwrap_or(opts.forecast.seed);
    opts.history = a.history.unwrap_or(opts.history);
    opts.stride = a.stride.unwrap_or(opts.stride);
    if opts.forecast.horizon == 0 {
        return Err("--horizon must be at least 1".into());
    }
    if opts.forecast.n_samples == 0 {
        return Err("--n-samples must be at least 1".into());
    }
    let seqs = load_scene_sequences(&a.data)?;
    let report = forecast_corpus(&ckpt, &seqs, &opts)?;
    write_json(&a.out, &report)?;
    println!("h   F1@2/3 (sd win / sd smp)    F1@1 (sd win / sd smp)");
    for h in &report.horizons {
        println!(
            "{:<3} {:.4} ({:.4} / {:.4})  {:.4} ({:.4} / {:.4})",
            h.horizon,
            h.mean_f1_thr23,
            h.std_windows_thr23,
            h.std_samples_thr23,
            h.mean_f1_thr1,
            h.std_windows_thr1,
            h.std_samples_thr1
        );
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> CliResult {
    if a.n < 3 || a.seq_len == 0 || a.hidden_size == 0 || a.batch == 0 {
        return Err("gradcheck needs --n >= 3 and positive --seq-len, --hidden-size, --batch".into());
    }
    let (params, batch) = grad_check_fixture(a.seed, a.n, a.seq_len, a.hidden_size, a.batch);
    let err = grad_check(&params, &batch)?;
    println!("max relative error {err:e}");
    if err >= GRAD_TOLERANCE {
        return Err(format!("gradient check failed: {err:e} >= {GRAD_TOLERANCE:e}").into());
    }
    Ok(())
}
