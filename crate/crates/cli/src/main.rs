//! `nlos-track`: dataset generation, training, evaluation, streaming
//! tracking, figures and the ablation table.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod config;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use config::{absolute, resolve, write_resolved, FileConfig};
use nlos_core::datasets::{build_dataset_with, BuildConfig, DatasetManifest, Profile, Split, DEFAULT_TEST_FRACTION};
use nlos_core::metrics::{evaluate_tracking, MetricsReport};
use nlos_core::pacnet::{load_checkpoint, ModelKind, Stage, Tracker};
use nlos_core::training::{
    run_ablation_suite_with, train_with, AblationConfig, CheckpointChoice, LossConfig, TrainConfig, Variant,
};
use nlos_core::Point2;

/// Invalid flags or configuration values.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Parser)]
#[command(name = "nlos-track", version, about = "Passive NLOS walker tracking from relay-wall video")]
struct Cli {
    /// Master seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Layered TOML configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory of the run.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset and write its manifest.
    GenData(GenDataFlags),
    /// Train one model on a dataset.
    Train(TrainFlags),
    /// Score checkpoints on the test split.
    Eval(EvalFlags),
    /// Track one clip frame by frame.
    Track(TrackFlags),
    /// Draw trajectories and difference frames.
    Plot(PlotFlags),
    /// Train and evaluate the model variants over several seeds.
    Ablation(AblationFlags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Track(_) => "track",
            Command::Plot(_) => "plot",
            Command::Ablation(_) => "ablation",
        }
    }
}

#[derive(Args, Serialize)]
struct GenDataFlags {
    /// Number of clips.
    #[arg(long)]
    n: Option<usize>,
    /// tiny, small, paper-synthetic or paper-real.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenData {
    n: usize,
    profile: String,
    test_fraction: f64,
}

impl Default for GenData {
    fn default() -> Self {
        Self {
            n: 8,
            profile: "tiny".into(),
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }
}

#[derive(Args, Serialize)]
struct TrainFlags {
    /// pacnet, cnet, pnet or cnn.
    #[arg(long)]
    model: Option<String>,
    /// Dataset directory or manifest file.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Warm-up steps.
    #[arg(long = "W", visible_alias = "warmup-steps")]
    warmup_steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Frames per training window.
    #[arg(long)]
    subclip_len: Option<usize>,
    #[arg(long)]
    alpha_v: Option<f64>,
    /// Separate decoder and loss term for the P-trajectory (pacnet).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    split_decoder: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainOpts {
    model: String,
    manifest: PathBuf,
    warmup_steps: usize,
    epochs: usize,
    learning_rate: f64,
    weight_decay: f64,
    batch_size: usize,
    subclip_len: usize,
    alpha_v: f64,
    split_decoder: bool,
}

impl Default for TrainOpts {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            model: t.model.to_string(),
            manifest: PathBuf::new(),
            warmup_steps: t.warmup_steps,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            subclip_len: t.subclip_len,
            alpha_v: t.loss.alpha_v,
            split_decoder: t.split_decoder,
        }
    }
}

impl TrainOpts {
    fn train_config(&self, seed: u64) -> anyhow::Result<TrainConfig> {
        let model = parse_model(&self.model)?;
        if self.warmup_steps > 0 && !model.supports_warmup() {
            return usage(format!("{model} has no warm-up stage; drop --W"));
        }
        let cfg = TrainConfig {
            model,
            warmup_steps: self.warmup_steps,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            subclip_len: self.subclip_len,
            seed,
            loss: LossConfig { alpha_v: self.alpha_v },
            split_decoder: self.split_decoder,
            freeze: Vec::new(),
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args, Serialize)]
struct EvalFlags {
    /// Checkpoint file; repeat for several.
    #[arg(long = "checkpoint")]
    checkpoints: Option<Vec<PathBuf>>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Frames excluded as warm-up (default: each model's own W).
    #[arg(long = "W", visible_alias = "warmup-steps")]
    warmup_steps: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalOpts {
    checkpoints: Vec<PathBuf>,
    manifest: PathBuf,
    warmup_steps: Option<usize>,
}

#[derive(Args, Serialize)]
struct TrackFlags {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Clip id (default: the first test clip).
    #[arg(long)]
    clip: Option<String>,
    /// Print the measured frames per second.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    report_fps: Option<bool>,
    /// Deliver frames at this rate, as a live camera would.
    #[arg(long)]
    pace_fps: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrackOpts {
    checkpoint: PathBuf,
    manifest: PathBuf,
    clip: Option<String>,
    report_fps: bool,
    pace_fps: Option<f64>,
}

#[derive(Args, Serialize)]
struct PlotFlags {
    /// Ground-truth trajectory CSV.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Predicted trajectory CSV; repeat for several.
    #[arg(long = "pred")]
    preds: Option<Vec<PathBuf>>,
    /// Warm-up points at the start of each prediction.
    #[arg(long = "W", visible_alias = "warmup-steps")]
    warmup_steps: Option<usize>,
    /// Room size `WIDTH,DEPTH` in meters when the CSVs are not normalised.
    #[arg(long, value_delimiter = ',')]
    room: Option<Vec<f64>>,
    /// Also draw the difference frame `frame` of this clip.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    clip: Option<String>,
    #[arg(long)]
    frame: Option<usize>,
    /// Side of the square plot in pixels.
    #[arg(long)]
    size: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PlotOpts {
    gt: Option<PathBuf>,
    preds: Vec<PathBuf>,
    warmup_steps: usize,
    room: Option<Vec<f64>>,
    manifest: Option<PathBuf>,
    clip: Option<String>,
    frame: usize,
    size: u32,
}

impl Default for PlotOpts {
    fn default() -> Self {
        Self {
            gt: None,
            preds: Vec::new(),
            warmup_steps: 0,
            room: None,
            manifest: None,
            clip: None,
            frame: 1,
            size: 480,
        }
    }
}

#[derive(Args, Serialize)]
struct AblationFlags {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated training seeds (default: seed, seed+1, seed+2).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated warm-up lengths; nonzero entries add warm-up rows.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<usize>>,
    /// Comma-separated variant labels to run (default: all).
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<String>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    subclip_len: Option<usize>,
    #[arg(long)]
    alpha_v: Option<f64>,
    /// Report runs without a checkpoint as absent instead of training them.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    no_train: Option<bool>,
    /// best or last.
    #[arg(long)]
    checkpoint: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AblationOpts {
    manifest: PathBuf,
    seeds: Option<Vec<u64>>,
    sweep: Vec<usize>,
    only: Option<Vec<String>>,
    epochs: usize,
    learning_rate: f64,
    weight_decay: f64,
    batch_size: usize,
    subclip_len: usize,
    alpha_v: f64,
    no_train: bool,
    checkpoint: String,
}

impl Default for AblationOpts {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            manifest: PathBuf::new(),
            seeds: None,
            sweep: vec![0, 16, 32],
            only: None,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            subclip_len: t.subclip_len,
            alpha_v: t.loss.alpha_v,
            no_train: false,
            checkpoint: "best".into(),
        }
    }
}

fn parse_model(s: &str) -> anyhow::Result<ModelKind> {
    s.parse().map_err(|e: nlos_core::Error| UsageError(e.to_string()).into())
}

fn require_path(p: &Path, flag: &str) -> anyhow::Result<()> {
    if p.as_os_str().is_empty() {
        return usage(format!("--{flag} is required"));
    }
    Ok(())
}

fn load_manifest(p: &Path) -> anyhow::Result<DatasetManifest> {
    require_path(p, "manifest")?;
    DatasetManifest::load(p).with_context(|| format!("loading dataset {}", p.display()))
}

fn human_bytes(n: u64) -> String {
    let mut v = n as f64;
    for unit in ["B", "KiB", "MiB", "GiB"] {
        if v < 1024.0 || unit == "GiB" {
            return format!("{v:.1} {unit}");
        }
        v /= 1024.0;
    }
    unreachable!()
}

fn fmt_metrics(m: &MetricsReport) -> String {
    format!(
        "RMS_x {:.4}  RMS_v {:.5}  Area {:.4}  DTW {:.4}  PCM {:.5}",
        m.rms_x, m.rms_v, m.area, m.dtw, m.pcm
    )
}

fn cmd_gen_data(o: &GenData, seed: u64, out: &Path) -> anyhow::Result<()> {
    let profile: Profile = o.profile.parse().map_err(|e: nlos_core::Error| UsageError(e.to_string()))?;
    let cfg = BuildConfig {
        n_clips: o.n,
        profile,
        seed,
        test_fraction: o.test_fraction,
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let m = build_dataset_with(&cfg, out, |done, total| eprintln!("rendered {done}/{total}"))?;
    let s = profile.shape();
    println!(
        "{} clips ({} train, {} test), {} frames of {}x{}x{} each, {} on disk",
        m.clips.len(),
        m.ids(Split::Train).len(),
        m.ids(Split::Test).len(),
        m.frames_per_clip,
        s.channels,
        s.rows,
        s.cols,
        human_bytes(m.disk_size()?)
    );
    println!("manifest: {}", DatasetManifest::path(out).display());
    Ok(())
}

fn cmd_train(o: &TrainOpts, seed: u64, out: &Path) -> anyhow::Result<()> {
    let cfg = o.train_config(seed)?;
    let manifest = load_manifest(&o.manifest)?;
    let outcome = train_with(&manifest, &cfg, out, |r| {
        let test = r.test.as_ref().map(fmt_metrics).unwrap_or_else(|| "no test split".into());
        println!(
            "epoch {:>3}/{}  lr {:.2e}  loss {:.5} (x {:.5}, v {:.3e})  test {}{}",
            r.epoch,
            cfg.epochs,
            r.lr_first,
            r.train_loss,
            r.train_loss_x,
            r.train_loss_v,
            test,
            if r.best { "  *" } else { "" }
        );
    })?;
    println!("best epoch {}: {}", outcome.best_epoch, outcome.best_checkpoint().display());
    println!("last: {}", outcome.last_checkpoint().display());
    Ok(())
}

fn cmd_eval(o: &EvalOpts, out: &Path) -> anyhow::Result<()> {
    if o.checkpoints.is_empty() {
        return usage("--checkpoint is required");
    }
    let manifest = load_manifest(&o.manifest)?;
    let clips = manifest.load_split(Split::Test)?;
    if clips.is_empty() {
        bail!("the test split of {} is empty", manifest.root.display());
    }
    std::fs::create_dir_all(out)?;
    let mut per_clip = csv::Writer::from_path(out.join("per_clip.csv"))?;
    per_clip.write_record(["checkpoint", "model", "warmup_steps", "clip", "trajectory", "rms_x", "rms_v", "area", "dtw", "pcm", "frames"])?;
    let mut agg = csv::Writer::from_path(out.join("aggregate.csv"))?;
    agg.write_record(["checkpoint", "model", "warmup_steps", "trajectory", "rms_x", "rms_v", "area", "dtw", "pcm", "clips"])?;
    for path in &o.checkpoints {
        let (net, _) = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
        let w = o.warmup_steps.unwrap_or(net.config.warmup_steps);
        let kind = net.config.kind.to_string();
        let mut c_reports = Vec::new();
        let mut p_reports = Vec::new();
        for clip in &clips {
            let gt = clip.normalized();
            let track = net.track(&clip.raw, Some(gt[0]))?;
            let mut rows = vec![("c", evaluate_tracking(&track.positions, &gt, w)?)];
            if let Some(pp) = &track.p_positions {
                rows.push(("p", evaluate_tracking(pp, &gt, w)?));
            }
            for (traj, m) in rows {
                let mut rec = vec![path.display().to_string(), kind.clone(), w.to_string(), clip.id.clone(), traj.to_string()];
                rec.extend(m.values().iter().map(|v| v.to_string()));
                rec.push(m.n_frames_evaluated.to_string());
                per_clip.write_record(&rec)?;
                if traj == "c" { c_reports.push(m) } else { p_reports.push(m) }
            }
        }
        for (traj, reports) in [("c", &c_reports), ("p", &p_reports)] {
            if reports.is_empty() {
                continue;
            }
            let m = MetricsReport::mean(reports);
            let mut rec = vec![path.display().to_string(), kind.clone(), w.to_string(), traj.to_string()];
            rec.extend(m.values().iter().map(|v| v.to_string()));
            rec.push(reports.len().to_string());
            agg.write_record(&rec)?;
            println!("{} [{traj}] {}", path.display(), fmt_metrics(&m));
        }
    }
    per_clip.flush()?;
    agg.flush()?;
    println!("wrote {}", out.join("aggregate.csv").display());
    Ok(())
}

fn write_points(path: &Path, rows: impl IntoIterator<Item = (usize, Point2, Option<Stage>)>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["frame_index", "x", "y", "stage"])?;
    for (t, p, stage) in rows {
        let s = match stage {
            Some(Stage::Warmup) => "warmup",
            Some(Stage::Tracking) => "tracking",
            None => "",
        };
        w.write_record([t.to_string(), p.x.to_string(), p.y.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_track(o: &TrackOpts, out: &Path) -> anyhow::Result<()> {
    require_path(&o.checkpoint, "checkpoint")?;
    let manifest = load_manifest(&o.manifest)?;
    let (net, _) = load_checkpoint(&o.checkpoint).with_context(|| format!("loading {}", o.checkpoint.display()))?;
    let id = match &o.clip {
        Some(id) => id.clone(),
        None => manifest
            .ids(Split::Test)
            .first()
            .copied()
            .or_else(|| manifest.clips.first().map(|e| e.id.as_str()))
            .context("the dataset lists no clips")?
            .to_string(),
    };
    let clip = manifest.load_clip(&id)?;
    let shape = [clip.raw.channels, clip.raw.height, clip.raw.width];
    if shape != net.config.frame_shape {
        return Err(nlos_core::Error::InvalidConfig(format!(
            "clip {id} has frames {shape:?} but the checkpoint expects {:?}",
            net.config.frame_shape
        ))
        .into());
    }
    let gt = clip.normalized();
    let mut tracker = Tracker::with_initial_position(&net, gt[0]);
    let pace = o.pace_fps.filter(|&f| f > 0.0).map(|f| Duration::from_secs_f64(1.0 / f));
    let mut outputs = Vec::with_capacity(clip.frames());
    let mut busy = Duration::ZERO;
    let start = Instant::now();
    for t in 0..clip.frames() {
        if let Some(p) = pace {
            let due = start + p * t as u32;
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        let t0 = Instant::now();
        let step = tracker.push(clip.raw.frame(t))?;
        busy += t0.elapsed();
        outputs.extend(step);
    }
    std::fs::create_dir_all(out)?;
    write_points(&out.join("trajectory.csv"), outputs.iter().map(|s| (s.frame_index, s.position, Some(s.stage))))?;
    if outputs.iter().any(|s| s.p_position.is_some()) {
        write_points(
            &out.join("p_trajectory.csv"),
            outputs.iter().filter_map(|s| Some((s.frame_index, s.p_position?, Some(s.stage)))),
        )?;
    }
    write_points(&out.join("ground_truth.csv"), gt.iter().enumerate().map(|(t, &p)| (t, p, None)))?;
    println!("clip {id}: {} positions from {} frames -> {}", outputs.len(), clip.frames(), out.join("trajectory.csv").display());
    if o.report_fps {
        let fps = clip.frames() as f64 / busy.as_secs_f64().max(1e-12);
        println!("throughput: {fps:.1} frames/s ({} frames, {:.3} s of compute)", clip.frames(), busy.as_secs_f64());
    }
    Ok(())
}

/// Points and, when present, stages from a trajectory CSV.
fn read_points(path: &Path) -> anyhow::Result<(Vec<Point2>, usize)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(xi), Some(yi)) = (col("x"), col("y")) else {
        bail!("{}: expected columns x and y", path.display());
    };
    let si = col("stage");
    let mut pts = Vec::new();
    let mut warm = 0;
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> anyhow::Result<f64> {
            rec.get(i).unwrap_or("").trim().parse().with_context(|| format!("{}: bad number in line {}", path.display(), pts.len() + 2))
        };
        pts.push(Point2::new(num(xi)?, num(yi)?));
        if si.and_then(|i| rec.get(i)) == Some("warmup") {
            warm += 1;
        }
    }
    Ok((pts, warm))
}

fn cmd_plot(o: &PlotOpts, out: &Path) -> anyhow::Result<()> {
    if o.gt.is_none() && o.preds.is_empty() && o.clip.is_none() {
        return usage("nothing to plot: give --gt, --pred or --manifest with --clip");
    }
    let norm = |pts: Vec<Point2>| -> anyhow::Result<Vec<Point2>> {
        match o.room.as_deref() {
            None => Ok(pts),
            Some([w, d]) if *w > 0.0 && *d > 0.0 => Ok(pts.into_iter().map(|p| Point2::new(p.x / w, p.y / d)).collect()),
            Some(_) => usage("--room takes WIDTH,DEPTH in meters"),
        }
    };
    std::fs::create_dir_all(out)?;
    if o.gt.is_some() || !o.preds.is_empty() {
        let gt = o.gt.as_deref().map(read_points).transpose()?.map(|(p, _)| norm(p)).transpose()?;
        let mut series = Vec::new();
        for path in &o.preds {
            let (pts, warm) = read_points(path)?;
            series.push(plot::Series {
                points: norm(pts)?,
                warmup: if o.warmup_steps > 0 { o.warmup_steps } else { warm },
            });
        }
        let path = out.join("trajectory.png");
        plot::save(&plot::trajectory_figure(gt.as_deref(), &series, o.size), &path)?;
        println!("wrote {}", path.display());
    }
    if let Some(id) = &o.clip {
        let manifest = load_manifest(o.manifest.as_deref().unwrap_or(Path::new("")))?;
        let clip = manifest.load_clip(id)?;
        let t = o.frame;
        if t == 0 || t >= clip.frames() {
            return usage(format!("--frame must be in [1, {})", clip.frames()));
        }
        let d = plot::difference_magnitude(clip.raw.frame(t), clip.raw.frame(t - 1), clip.raw.channels);
        let scale = (256 / clip.raw.width.max(1) as u32).max(1);
        let path = out.join(format!("diff_{id}_{t:04}.png"));
        plot::save(&plot::grey_image(&d, clip.raw.height, clip.raw.width, scale), &path)?;
        let c = clip.raw.channels;
        let hw = clip.raw.height * clip.raw.width;
        let raw: Vec<f64> = (0..hw).map(|i| (0..c).map(|k| clip.raw.frame(t)[k * hw + i] as f64).sum::<f64>() / c as f64).collect();
        let raw_path = out.join(format!("frame_{id}_{t:04}.png"));
        plot::save(&plot::grey_image(&raw, clip.raw.height, clip.raw.width, scale), &raw_path)?;
        println!("wrote {} and {}", path.display(), raw_path.display());
    }
    Ok(())
}

fn cmd_ablation(o: &AblationOpts, seed: u64, out: &Path) -> anyhow::Result<()> {
    let manifest = load_manifest(&o.manifest)?;
    let checkpoint = match o.checkpoint.as_str() {
        "best" => CheckpointChoice::Best,
        "last" => CheckpointChoice::Last,
        other => return usage(format!("--checkpoint must be best or last, got '{other}'")),
    };
    let train = TrainConfig {
        epochs: o.epochs,
        learning_rate: o.learning_rate,
        weight_decay: o.weight_decay,
        batch_size: o.batch_size,
        subclip_len: o.subclip_len,
        loss: LossConfig { alpha_v: o.alpha_v },
        ..TrainConfig::default()
    };
    let mut cfg = AblationConfig::new(train, out.join("runs"));
    cfg.variants = Variant::standard(&o.sweep);
    if let Some(only) = &o.only {
        if let Some(bad) = only.iter().find(|l| !cfg.variants.iter().any(|v| &v.label == *l)) {
            return usage(format!("unknown variant '{bad}'"));
        }
        cfg.variants.retain(|v| only.contains(&v.label));
    }
    cfg.seeds = o.seeds.clone().unwrap_or_else(|| vec![seed, seed + 1, seed + 2]);
    cfg.train_missing = !o.no_train;
    cfg.checkpoint = checkpoint;
    for v in &cfg.variants {
        for &s in &cfg.seeds {
            cfg.run_config(v, s).validate().map_err(|e| UsageError(format!("{}: {e}", v.label)))?;
        }
    }
    let table = run_ablation_suite_with(&manifest, &cfg, |v, s| eprintln!("{} seed {s}", v.label))?;
    std::fs::write(out.join("ablation.csv"), table.to_csv())?;
    std::fs::write(out.join("ablation_per_seed.csv"), table.per_seed_csv())?;
    for r in &table.rows {
        match r.mean() {
            Some(m) => println!("{:<12} {} ({} seeds, {})", r.variant.label, fmt_metrics(&m), r.per_seed.len(), r.status()),
            None => println!("{:<12} absent", r.variant.label),
        }
    }
    println!("wrote {}", out.join("ablation.csv").display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let name = cli.command.name();
    let out = cli.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("runs").join(name));
    match &cli.command {
        Command::GenData(f) => {
            let o: GenData = resolve(&file, name, f)?;
            o.profile.parse::<Profile>().map_err(|e| UsageError(e.to_string()))?;
            write_resolved(&out, name, seed, &o)?;
            cmd_gen_data(&o, seed, &out)
        }
        Command::Train(f) => {
            let mut o: TrainOpts = resolve(&file, name, f)?;
            o.manifest = absolute(&o.manifest);
            o.train_config(seed)?;
            write_resolved(&out, name, seed, &o)?;
            cmd_train(&o, seed, &out)
        }
        Command::Eval(f) => {
            let mut o: EvalOpts = resolve(&file, name, f)?;
            o.manifest = absolute(&o.manifest);
            o.checkpoints = o.checkpoints.iter().map(|p| absolute(p)).collect();
            write_resolved(&out, name, seed, &o)?;
            cmd_eval(&o, &out)
        }
        Command::Track(f) => {
            let mut o: TrackOpts = resolve(&file, name, f)?;
            o.manifest = absolute(&o.manifest);
            o.checkpoint = absolute(&o.checkpoint);
            write_resolved(&out, name, seed, &o)?;
            cmd_track(&o, &out)
        }
        Command::Plot(f) => {
            let mut o: PlotOpts = resolve(&file, name, f)?;
            o.gt = o.gt.as_deref().map(absolute);
            o.preds = o.preds.iter().map(|p| absolute(p)).collect();
            o.manifest = o.manifest.as_deref().map(absolute);
            write_resolved(&out, name, seed, &o)?;
            cmd_plot(&o, &out)
        }
        Command::Ablation(f) => {
            let mut o: AblationOpts = resolve(&file, name, f)?;
            o.manifest = absolute(&o.manifest);
            write_resolved(&out, name, seed, &o)?;
            cmd_ablation(&o, seed, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
