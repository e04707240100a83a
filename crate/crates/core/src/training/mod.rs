//! Loss, training loop, gradient check and the ablation harness.
//!
//! Training samples one random `T'`-frame window per clip, sums gradients over
//! a batch, and steps AdamW with a per-step cosine-annealed learning rate.
//! Each epoch ends with an evaluation of the test split; the run directory
//! receives `train_log.jsonl`, `best.ckpt` (lowest test DTW) and `last.ckpt`.

mod ablation;
mod gradcheck;

pub use ablation::{run_ablation_suite, run_ablation_suite_with, AblationConfig, AblationRow, AblationTable, CheckpointChoice, Variant};
pub use gradcheck::{gradient_check, gradient_report, GradCheckConfig, GradCheckReport, GroupError};

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{random_window, Clip, DatasetManifest, Split};
use crate::metrics::{evaluate_tracking, MetricsReport};
use crate::nn::{cosine_lr, AdamW, Params, Real};
use crate::pacnet::{save_checkpoint, InputNorm, ModelConfig, ModelKind, Network};
use crate::trajgen::Point2;
use crate::{seed, Error, Result};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const TRAIN_LOG: &str = "train_log.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the displacement term.
    pub alpha_v: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { alpha_v: 500.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub loss_x: f64,
    pub loss_v: f64,
}

/// Loss on flat `n x 2` coordinates and its gradient with respect to `pred`.
///
/// The first `w` rows are warm-up outputs and are ignored. `loss_x` is the
/// mean squared coordinate error over the remaining rows, `loss_v` the same
/// for consecutive differences among them.
pub fn loss_and_grad<T: Real>(pred: &[T], gt: &[T], cfg: &LossConfig, w: usize) -> Result<(LossValue, Vec<T>)> {
    if pred.len() != gt.len() || pred.len() % 2 != 0 {
        return Err(Error::LengthMismatch {
            what: "predicted vs ground-truth coordinates",
            left: pred.len(),
            right: gt.len(),
        });
    }
    if !(cfg.alpha_v >= 0.0) {
        return Err(Error::InvalidConfig(format!("alpha_v must be >= 0, got {}", cfg.alpha_v)));
    }
    let n = pred.len() / 2;
    if n <= w {
        return Err(Error::TooShort {
            what: "loss (tracking-stage points)",
            got: n.saturating_sub(w),
            need: 1,
        });
    }
    let mut grad = vec![T::zero(); pred.len()];
    let m = n - w;
    let cx = 1.0 / (2 * m) as f64;
    let mut loss_x = 0.0;
    for i in 2 * w..2 * n {
        let e = (pred[i] - gt[i]).f64();
        loss_x += e * e * cx;
        grad[i] = T::of(2.0 * e * cx);
    }
    let mut loss_v = 0.0;
    if m >= 2 {
        let cv = 1.0 / (2 * (m - 1)) as f64;
        for k in w + 1..n {
            for d in 0..2 {
                let (i, j) = (2 * k + d, 2 * (k - 1) + d);
                let e = ((pred[i] - pred[j]) - (gt[i] - gt[j])).f64();
                loss_v += e * e * cv;
                let g = T::of(cfg.alpha_v * 2.0 * e * cv);
                grad[i] += g;
                grad[j] = grad[j] - g;
            }
        }
    }
    let value = LossValue {
        total: loss_x + cfg.alpha_v * loss_v,
        loss_x,
        loss_v,
    };
    Ok((value, grad))
}

/// Loss between two equal-length trajectories whose first `w` points belong
/// to the warm-up stage.
pub fn loss(pred: &[Point2], gt: &[Point2], cfg: &LossConfig, w: usize) -> Result<LossValue> {
    let flat = |v: &[Point2]| v.iter().flat_map(|p| [p.x, p.y]).collect::<Vec<f64>>();
    Ok(loss_and_grad(&flat(pred), &flat(gt), cfg, w)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub warmup_steps: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Decoupled weight decay.
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Frames per training window `T'`.
    pub subclip_len: usize,
    pub seed: u64,
    pub loss: LossConfig,
    /// Give the P-trajectory of `pacnet` its own decoder and loss term.
    pub split_decoder: bool,
    /// Tensors whose dotted name starts with one of these are not updated.
    #[serde(default)]
    pub freeze: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Pacnet,
            warmup_steps: 0,
            epochs: 70,
            learning_rate: 3e-4,
            weight_decay: 2e-3,
            batch_size: 32,
            subclip_len: 64,
            seed: 0,
            loss: LossConfig::default(),
            split_decoder: false,
            freeze: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning_rate must be positive and weight_decay non-negative".into());
        }
        if self.subclip_len < 2 || self.warmup_steps + 1 >= self.subclip_len {
            return bad(format!(
                "need 2 <= T' and W < T' - 1 (T' = {}, W = {})",
                self.subclip_len, self.warmup_steps
            ));
        }
        if self.warmup_steps > 0 && !self.model.supports_warmup() {
            return bad(format!("{} has no warm-up stage; use W = 0", self.model));
        }
        if !(self.loss.alpha_v >= 0.0) {
            return bad("alpha_v must be >= 0".into());
        }
        Ok(())
    }

    pub fn model_config(&self, frame_shape: [usize; 3]) -> ModelConfig {
        let mut c = ModelConfig::new(self.model, frame_shape, self.warmup_steps);
        c.shared_decoder = !(self.split_decoder && self.model == ModelKind::Pacnet);
        c
    }

    fn frozen(&self, name: &str) -> bool {
        self.freeze.iter().any(|p| name.starts_with(p.as_str()))
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr_first: f64,
    pub lr_last: f64,
    pub train_loss: f64,
    pub train_loss_x: f64,
    pub train_loss_v: f64,
    /// Test-split metrics of the C-trajectory (tracking stage only).
    pub test: Option<MetricsReport>,
    /// `pacnet`: the same for the P-trajectory.
    pub test_p: Option<MetricsReport>,
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn best_checkpoint(&self) -> PathBuf {
        self.run_dir.join(BEST_CHECKPOINT)
    }

    pub fn last_checkpoint(&self) -> PathBuf {
        self.run_dir.join(LAST_CHECKPOINT)
    }
}

/// Test metrics of a model over whole clips.
#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub per_clip: Vec<(String, MetricsReport)>,
    pub per_clip_p: Option<Vec<MetricsReport>>,
    pub mean: MetricsReport,
    pub mean_p: Option<MetricsReport>,
}

/// Track every clip from its first frame and score the tracking stage.
pub fn evaluate_model(net: &Network<f32>, clips: &[Clip]) -> Result<EvalSummary> {
    if clips.is_empty() {
        return Err(Error::InvalidConfig("nothing to evaluate: the test split is empty".into()));
    }
    let w = net.config.warmup_steps;
    let results: Vec<(MetricsReport, Option<MetricsReport>)> = clips
        .par_iter()
        .map(|clip| {
            let gt = clip.normalized();
            let out = net.track(&clip.raw, Some(gt[0]))?;
            let c = evaluate_tracking(&out.positions, &gt, w)?;
            let p = out.p_positions.as_ref().map(|pp| evaluate_tracking(pp, &gt, w)).transpose()?;
            Ok((c, p))
        })
        .collect::<Result<_>>()?;
    let per_clip: Vec<(String, MetricsReport)> = clips.iter().zip(&results).map(|(c, r)| (c.id.clone(), r.0)).collect();
    let reports: Vec<MetricsReport> = results.iter().map(|r| r.0).collect();
    let per_clip_p: Option<Vec<MetricsReport>> = results.iter().map(|r| r.1).collect();
    Ok(EvalSummary {
        mean: MetricsReport::mean(&reports),
        mean_p: per_clip_p.as_deref().map(MetricsReport::mean),
        per_clip,
        per_clip_p,
    })
}

/// Loss and parameter gradient for one training window.
fn window_grad(net: &Network<f32>, frames: &[f32], gt: &[Point2], cfg: &TrainConfig) -> Result<(LossValue, Network<f32>)> {
    let t = gt.len();
    let init = [gt[0].x as f32, gt[0].y as f32];
    let (out, cache) = net.forward(frames, t, Some(init))?;
    let target: Vec<f32> = gt[1..].iter().flat_map(|p| [p.x as f32, p.y as f32]).collect();
    let w = net.config.warmup_steps;
    let (mut value, d_pos) = loss_and_grad(&out.positions, &target, &cfg.loss, w)?;
    let mut d_ppos = None;
    if net.p_decoder.is_some() {
        let (pv, g) = loss_and_grad(out.p_positions.as_ref().unwrap(), &target, &cfg.loss, w)?;
        value.total += pv.total;
        value.loss_x += pv.loss_x;
        value.loss_v += pv.loss_v;
        d_ppos = Some(g);
    }
    let mut grads = net.zeros_like();
    net.backward(&cache, &d_pos, d_ppos.as_deref(), &mut grads);
    Ok((value, grads))
}

/// Train a freshly initialised model on the manifest's train split.
pub fn train(manifest: &DatasetManifest, cfg: &TrainConfig, run_dir: &Path) -> Result<TrainOutcome> {
    train_with(manifest, cfg, run_dir, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with(manifest: &DatasetManifest, cfg: &TrainConfig, run_dir: &Path, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.subclip_len > manifest.frames_per_clip {
        return Err(Error::InvalidConfig(format!(
            "T' = {} exceeds the clip length {}",
            cfg.subclip_len, manifest.frames_per_clip
        )));
    }
    let train_clips = manifest.load_split(Split::Train)?;
    if train_clips.is_empty() {
        return Err(Error::InvalidConfig("the manifest has no training clips".into()));
    }
    let test_clips = manifest.load_split(Split::Test)?;
    let norm = InputNorm::estimate(train_clips.iter().map(|c| &c.raw));
    let net = Network::<f32>::new(cfg.model_config(manifest.frame_shape), norm, seed::derive(cfg.seed, "init"))?;
    train_network(net, &train_clips, &test_clips, cfg, run_dir, on_epoch)
}

/// Training loop on an existing network and in-memory clips.
pub fn train_network(
    mut net: Network<f32>,
    train_clips: &[Clip],
    test_clips: &[Clip],
    cfg: &TrainConfig,
    run_dir: &Path,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_clips.is_empty() {
        return Err(Error::InvalidConfig("no training clips".into()));
    }
    if let Some(c) = train_clips.iter().find(|c| c.frames() < cfg.subclip_len) {
        return Err(Error::InvalidConfig(format!("clip {} is shorter than T' = {}", c.id, cfg.subclip_len)));
    }
    std::fs::create_dir_all(run_dir)?;
    let log_path = run_dir.join(TRAIN_LOG);
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);

    let batches_per_epoch = train_clips.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut opt = AdamW::new(cfg.weight_decay);
    let frozen = |name: &str| cfg.frozen(name);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize)> = None;
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        let mut rng = seed::child_rng(cfg.seed, &format!("epoch-{epoch}"));
        let mut order: Vec<usize> = (0..train_clips.len()).collect();
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (LossValue::default(), 0usize);
        let lr_first = cosine_lr(cfg.learning_rate, step, total_steps);
        let mut lr_last = lr_first;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let windows = batch
                .iter()
                .map(|&i| random_window(&train_clips[i], cfg.subclip_len, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let results = windows
                .par_iter()
                .map(|w| window_grad(&net, w.frames(), &w.normalized(), cfg))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = net.zeros_like();
            for (k, (value, g)) in results.iter().enumerate() {
                if !value.total.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: b,
                        detail: format!(
                            "clip {} window at frame {}: loss_x = {}, loss_v = {}",
                            windows[k].clip.id, windows[k].start, value.loss_x, value.loss_v
                        ),
                    });
                }
                sum.total += value.total;
                sum.loss_x += value.loss_x;
                sum.loss_v += value.loss_v;
                count += 1;
                grads.add_assign(g);
            }
            let inv = 1.0 / results.len() as f32;
            grads.visit_mut("", &mut |_, g| g.iter_mut().for_each(|v| *v *= inv));
            lr_last = cosine_lr(cfg.learning_rate, step, total_steps);
            opt.step(&mut net, &grads, lr_last, &frozen);
            step += 1;
        }

        let eval = if test_clips.is_empty() { None } else { Some(evaluate_model(&net, test_clips)?) };
        let n = count as f64;
        let mut rec = EpochRecord {
            epoch,
            lr_first,
            lr_last,
            train_loss: sum.total / n,
            train_loss_x: sum.loss_x / n,
            train_loss_v: sum.loss_v / n,
            test: eval.as_ref().map(|e| e.mean),
            test_p: eval.as_ref().and_then(|e| e.mean_p),
            best: false,
        };
        // lowest test DTW; lowest training loss when there is no test split
        let score = rec.test.map_or(rec.train_loss, |m| m.dtw);
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, epoch));
            rec.best = true;
        }
        let meta = serde_json::json!({ "epoch": epoch, "train_config": cfg, "record": rec });
        if rec.best {
            save_checkpoint(&run_dir.join(BEST_CHECKPOINT), &net, meta.clone())?;
        }
        if epoch == cfg.epochs {
            save_checkpoint(&run_dir.join(LAST_CHECKPOINT), &net, meta)?;
        }
        serde_json::to_writer(&mut log, &rec)?;
        log.write_all(b"\n")?;
        log.flush()?;
        on_epoch(&rec);
        history.push(rec);
    }
    Ok(TrainOutcome {
        run_dir: run_dir.to_path_buf(),
        history,
        best_epoch: best.map_or(cfg.epochs, |b| b.1),
    })
}

/// Parse a training log written by [`train`].
pub fn read_train_log(path: &Path) -> Result<Vec<EpochRecord>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
