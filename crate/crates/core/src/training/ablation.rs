use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{evaluate_model, train, TrainConfig, BEST_CHECKPOINT, LAST_CHECKPOINT};
use crate::datasets::{Clip, DatasetManifest, Split};
use crate::metrics::MetricsReport;
use crate::pacnet::{load_checkpoint, read_checkpoint_header, ModelKind};
use crate::{Error, Result};

/// One row of the table: a model kind at a fixed number of warm-up steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub kind: ModelKind,
    pub warmup_steps: usize,
}

impl Variant {
    pub fn new(kind: ModelKind, warmup_steps: usize) -> Self {
        let label = if warmup_steps > 0 { format!("{kind}+w{warmup_steps}") } else { kind.to_string() };
        Self { label, kind, warmup_steps }
    }

    /// CNN, C-Net, P-Net and PAC-Net, plus a warm-up row of C-Net and
    /// PAC-Net for every nonzero entry of `sweep`.
    pub fn standard(sweep: &[usize]) -> Vec<Variant> {
        let mut v = vec![Variant::new(ModelKind::Cnn, 0), Variant::new(ModelKind::Cnet, 0)];
        v.extend(sweep.iter().filter(|&&w| w > 0).map(|&w| Variant::new(ModelKind::Cnet, w)));
        v.push(Variant::new(ModelKind::Pnet, 0));
        v.push(Variant::new(ModelKind::Pacnet, 0));
        v.extend(sweep.iter().filter(|&&w| w > 0).map(|&w| Variant::new(ModelKind::Pacnet, w)));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointChoice {
    /// Lowest test DTW during training.
    Best,
    /// End of training.
    Last,
}

impl CheckpointChoice {
    fn file(self) -> &'static str {
        match self {
            CheckpointChoice::Best => BEST_CHECKPOINT,
            CheckpointChoice::Last => LAST_CHECKPOINT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    /// Shared recipe; `model`, `warmup_steps` and `seed` are set per run.
    pub train: TrainConfig,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    /// Runs live in `runs_dir/<label>/seed<k>/`.
    pub runs_dir: PathBuf,
    /// Train runs whose checkpoint is absent (or was trained with a different
    /// recipe). When false such runs are reported as absent.
    pub train_missing: bool,
    pub checkpoint: CheckpointChoice,
}

impl AblationConfig {
    pub fn new(train: TrainConfig, runs_dir: PathBuf) -> Self {
        Self {
            train,
            variants: Variant::standard(&[16, 32]),
            seeds: vec![0, 1, 2],
            runs_dir,
            train_missing: true,
            checkpoint: CheckpointChoice::Best,
        }
    }

    pub fn run_config(&self, v: &Variant, seed: u64) -> TrainConfig {
        TrainConfig {
            model: v.kind,
            warmup_steps: v.warmup_steps,
            seed,
            ..self.train.clone()
        }
    }

    pub fn run_dir(&self, v: &Variant, seed: u64) -> PathBuf {
        self.runs_dir.join(&v.label).join(format!("seed{seed}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    /// Seeds with a checkpoint and their test metrics.
    pub per_seed: Vec<(u64, MetricsReport)>,
    pub missing_seeds: Vec<u64>,
}

impl AblationRow {
    pub fn mean(&self) -> Option<MetricsReport> {
        let r: Vec<MetricsReport> = self.per_seed.iter().map(|p| p.1).collect();
        (!r.is_empty()).then(|| MetricsReport::mean(&r))
    }

    pub fn std(&self) -> Option<[f64; 5]> {
        let r: Vec<MetricsReport> = self.per_seed.iter().map(|p| p.1).collect();
        (!r.is_empty()).then(|| MetricsReport::std(&r))
    }

    pub fn status(&self) -> &'static str {
        match (self.per_seed.is_empty(), self.missing_seeds.is_empty()) {
            (true, _) => "absent",
            (false, true) => "ok",
            (false, false) => "partial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub const CSV_HEADER: &'static str =
        "model,kind,warmup_steps,n_seeds,rms_x_mean,rms_x_std,rms_v_mean,rms_v_std,area_mean,area_std,dtw_mean,dtw_std,pcm_mean,pcm_std,status";

    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant.label == label)
    }

    /// Seed-mean and population std of each metric; empty cells for absent rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let v = &r.variant;
            write!(s, "{},{},{},{}", v.label, v.kind, v.warmup_steps, r.per_seed.len()).unwrap();
            match (r.mean(), r.std()) {
                (Some(m), Some(sd)) => {
                    for (a, b) in m.values().iter().zip(sd) {
                        write!(s, ",{a},{b}").unwrap();
                    }
                }
                _ => s.push_str(&",".repeat(10)),
            }
            writeln!(s, ",{}", r.status()).unwrap();
        }
        s
    }

    /// One line per (variant, seed).
    pub fn per_seed_csv(&self) -> String {
        let mut s = String::from("model,seed,rms_x,rms_v,area,dtw,pcm\n");
        for r in &self.rows {
            for (seed, m) in &r.per_seed {
                let [a, b, c, d, e] = m.values();
                writeln!(s, "{},{seed},{a},{b},{c},{d},{e}", r.variant.label).unwrap();
            }
        }
        s
    }
}

fn trained_with(path: &Path, cfg: &TrainConfig) -> bool {
    read_checkpoint_header(path)
        .ok()
        .and_then(|h| serde_json::from_value::<TrainConfig>(h.meta.get("train_config")?.clone()).ok())
        .is_some_and(|c| &c == cfg)
}

/// Train (when needed) and evaluate every variant for every seed on the test
/// split, each model with its own warm-up length.
pub fn run_ablation_suite(manifest: &DatasetManifest, cfg: &AblationConfig) -> Result<AblationTable> {
    run_ablation_suite_with(manifest, cfg, |_, _| {})
}

/// As [`run_ablation_suite`], calling `progress(variant, seed)` before each run.
pub fn run_ablation_suite_with(manifest: &DatasetManifest, cfg: &AblationConfig, mut progress: impl FnMut(&Variant, u64)) -> Result<AblationTable> {
    if cfg.seeds.is_empty() || cfg.variants.is_empty() {
        return Err(Error::InvalidConfig("the ablation needs at least one variant and one seed".into()));
    }
    let test: Vec<Clip> = manifest.load_split(Split::Test)?;
    if test.is_empty() {
        return Err(Error::InvalidConfig("the manifest has no test clips".into()));
    }
    let mut rows = Vec::new();
    for v in &cfg.variants {
        let mut row = AblationRow {
            variant: v.clone(),
            per_seed: Vec::new(),
            missing_seeds: Vec::new(),
        };
        for &seed in &cfg.seeds {
            progress(v, seed);
            let run_cfg = cfg.run_config(v, seed);
            let dir = cfg.run_dir(v, seed);
            let ckpt = dir.join(cfg.checkpoint.file());
            if cfg.train_missing && !trained_with(&ckpt, &run_cfg) {
                train(manifest, &run_cfg, &dir)?;
            }
            match load_checkpoint(&ckpt) {
                Ok((net, _)) => {
                    if net.config.kind != v.kind || net.config.warmup_steps != v.warmup_steps {
                        return Err(Error::CheckpointMismatch(format!("{} is not a {} model", ckpt.display(), v.label)));
                    }
                    row.per_seed.push((seed, evaluate_model(&net, &test)?.mean));
                }
                Err(Error::MissingFile(_)) => row.missing_seeds.push(seed),
                Err(e) => return Err(e),
            }
        }
        rows.push(row);
    }
    Ok(AblationTable { rows })
}
