//! Recurrent trackers.
//!
//! [`Network`] covers all four model kinds with one parameter layout:
//!
//! | kind     | per-step update                                   | output            |
//! |----------|---------------------------------------------------|-------------------|
//! | `pacnet` | `h~ = P(h, dI)` then `h = C(h~, I)`               | position from `h` |
//! | `cnet`   | `h = C(h, I)`                                     | position from `h` |
//! | `pnet`   | `h = P(h, dI)`                                    | displacement, summed from the true start |
//! | `cnn`    | none, `f = E(I)`                                  | position from `f` |
//!
//! Each of `P` and `C` is a [`Pathway`]: a convolutional encoder followed by a
//! GRU stack. With `warmup_steps = W > 0` the steps `t <= W` use a second,
//! independently parameterised cell. Positions are in normalised room
//! coordinates.

mod checkpoint;
mod tracker;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, read_checkpoint_header, save_checkpoint, CheckpointHeader};
pub use tracker::{pac_step, FrameCell, NormalizedCell, Stage, StepOutput, Tracker, TrackerState};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nn::{join, Decoder, DecoderCache, Encoder, EncoderCache, GruStack, Params, Real, StackCache};
use crate::scenesim::{FrameStream, StreamKind};
use crate::trajgen::Point2;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pacnet,
    Cnet,
    Pnet,
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Cnn, ModelKind::Cnet, ModelKind::Pnet, ModelKind::Pacnet];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Pacnet => "pacnet",
            ModelKind::Cnet => "cnet",
            ModelKind::Pnet => "pnet",
            ModelKind::Cnn => "cnn",
        }
    }

    pub fn supports_warmup(self) -> bool {
        matches!(self, ModelKind::Pacnet | ModelKind::Cnet)
    }

    fn has_p(self) -> bool {
        matches!(self, ModelKind::Pacnet | ModelKind::Pnet)
    }

    fn has_c(self) -> bool {
        matches!(self, ModelKind::Pacnet | ModelKind::Cnet | ModelKind::Cnn)
    }

    /// First frame index that produces a step.
    fn first_step(self) -> usize {
        if self.has_p() {
            1
        } else {
            0
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pacnet" => Ok(ModelKind::Pacnet),
            "cnet" => Ok(ModelKind::Cnet),
            "pnet" => Ok(ModelKind::Pnet),
            "cnn" => Ok(ModelKind::Cnn),
            other => Err(Error::InvalidConfig(format!("unknown model kind '{other}' (expected pacnet, cnet, pnet or cnn)"))),
        }
    }
}

/// Architecture of a tracker. Two checkpoints are compatible iff their
/// configs are equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// `[C, H, W]`
    pub frame_shape: [usize; 3],
    pub encoder_channels: Vec<usize>,
    pub convs_per_stage: usize,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    /// GRU layers per pathway; 0 for the stateless CNN.
    pub gru_layers: usize,
    pub decoder_hidden: usize,
    pub warmup_steps: usize,
    /// Decode the propagated state `h~` with the main decoder. When false,
    /// `pacnet` gets a second decoder for `h~`, supervised by its own loss term.
    pub shared_decoder: bool,
    /// `pnet` only: decoded displacements are multiplied by this factor.
    pub displacement_scale: f64,
}

impl ModelConfig {
    /// Desk-scale defaults. The ablations widen their encoders (and C-Net and
    /// P-Net use a two-layer GRU) so that one pathway has roughly as many
    /// parameters as one PAC-Cell.
    pub fn new(kind: ModelKind, frame_shape: [usize; 3], warmup_steps: usize) -> Self {
        let (channels, layers) = match kind {
            ModelKind::Pacnet => (vec![16, 32, 64, 128], 1),
            ModelKind::Cnet | ModelKind::Pnet => (vec![24, 48, 96, 192], 2),
            ModelKind::Cnn => (vec![32, 64, 128, 256], 0),
        };
        Self {
            kind,
            frame_shape,
            encoder_channels: channels,
            convs_per_stage: 1,
            feature_dim: 128,
            hidden_dim: 128,
            gru_layers: layers,
            decoder_hidden: 64,
            warmup_steps,
            shared_decoder: true,
            displacement_scale: 0.01,
        }
    }

    /// Small configuration used for gradient checks.
    pub fn tiny(kind: ModelKind, frame_shape: [usize; 3], hidden: usize, warmup_steps: usize) -> Self {
        Self {
            encoder_channels: vec![4, 4, 6, 8],
            feature_dim: hidden,
            hidden_dim: hidden,
            gru_layers: if kind == ModelKind::Cnn { 0 } else { 1 },
            decoder_hidden: hidden,
            ..Self::new(kind, frame_shape, warmup_steps)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.frame_shape.contains(&0) {
            return bad(format!("frame shape must be nonzero, got {:?}", self.frame_shape));
        }
        if self.feature_dim == 0 || self.hidden_dim == 0 || self.decoder_hidden == 0 {
            return bad("feature, hidden and decoder widths must be positive".into());
        }
        if self.warmup_steps > 0 && !self.kind.supports_warmup() {
            return bad(format!("{} has no warm-up stage", self.kind));
        }
        match (self.kind, self.gru_layers) {
            (ModelKind::Cnn, 0) => {}
            (ModelKind::Cnn, _) => return bad("the CNN baseline is stateless (gru_layers = 0)".into()),
            (_, 0) => return bad(format!("{} needs at least one GRU layer", self.kind)),
            _ => {}
        }
        if self.kind == ModelKind::Cnn && self.feature_dim != self.hidden_dim {
            return bad("the CNN baseline decodes features directly: feature_dim must equal hidden_dim".into());
        }
        if !(self.displacement_scale > 0.0) {
            return bad("displacement_scale must be positive".into());
        }
        Ok(())
    }

    pub fn frame_len(&self) -> usize {
        self.frame_shape.iter().product()
    }
}

/// Fixed input standardisation, estimated on the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub raw_mean: f64,
    pub raw_std: f64,
    pub diff_std: f64,
}

impl Default for InputNorm {
    fn default() -> Self {
        Self {
            raw_mean: 0.5,
            raw_std: 0.1,
            diff_std: 0.01,
        }
    }
}

impl InputNorm {
    /// Statistics of raw frames and of their consecutive differences.
    pub fn estimate<'a>(streams: impl IntoIterator<Item = &'a FrameStream>) -> Self {
        let (mut n, mut s, mut s2, mut nd, mut d2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for st in streams {
            for &v in &st.data {
                n += 1.0;
                s += v as f64;
                s2 += (v as f64).powi(2);
            }
            let fl = st.frame_len();
            for (a, b) in st.data[fl..].iter().zip(&st.data) {
                nd += 1.0;
                d2 += ((a - b) as f64).powi(2);
            }
        }
        if n == 0.0 {
            return Self::default();
        }
        let mean = s / n;
        let std = (s2 / n - mean * mean).max(0.0).sqrt();
        let dstd = if nd > 0.0 { (d2 / nd).sqrt() } else { 0.0 };
        Self {
            raw_mean: mean,
            raw_std: if std > 1e-6 { std } else { 1.0 },
            diff_std: if dstd > 1e-6 { dstd } else { 1.0 },
        }
    }
}

/// Encoder plus recurrent stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Pathway<T> {
    pub encoder: Encoder<T>,
    pub gru: GruStack<T>,
}

impl<T: Real> Params<T> for Pathway<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a [T])) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.gru.visit(&join(prefix, "gru"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [T])) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.gru.visit_mut(&join(prefix, "gru"), f);
    }
}

/// The propagation pathway (difference frames) and/or the calibration
/// pathway (raw frames) of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PacCell<T> {
    pub p: Option<Pathway<T>>,
    pub c: Option<Pathway<T>>,
}

impl<T: Real> Params<T> for PacCell<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a [T])) {
        if let Some(p) = &self.p {
            p.visit(&join(prefix, "p"), f);
        }
        if let Some(c) = &self.c {
            c.visit(&join(prefix, "c"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [T])) {
        if let Some(p) = &mut self.p {
            p.visit_mut(&join(prefix, "p"), f);
        }
        if let Some(c) = &mut self.c {
            c.visit_mut(&join(prefix, "c"), f);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub config: ModelConfig,
    pub norm: InputNorm,
    pub warmup: Option<PacCell<T>>,
    pub tracking: PacCell<T>,
    pub decoder: Decoder<T>,
    pub p_decoder: Option<Decoder<T>>,
}

impl<T: Real> Params<T> for Network<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a [T])) {
        if let Some(w) = &self.warmup {
            w.visit(&join(prefix, "warmup"), f);
        }
        self.tracking.visit(&join(prefix, "tracking"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
        if let Some(d) = &self.p_decoder {
            d.visit(&join(prefix, "p_decoder"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [T])) {
        if let Some(w) = &mut self.warmup {
            w.visit_mut(&join(prefix, "warmup"), f);
        }
        self.tracking.visit_mut(&join(prefix, "tracking"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
        if let Some(d) = &mut self.p_decoder {
            d.visit_mut(&join(prefix, "p_decoder"), f);
        }
    }
}

/// Decoded outputs for one clip of `T` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    /// `(T - 1) x 2` positions for frames `1..T`.
    pub positions: Vec<T>,
    /// `pacnet`: positions decoded from the propagated state `h~`, frames `1..T`.
    pub p_positions: Option<Vec<T>>,
    /// Output for frame 0, when the model emits one (`cnet`, `cnn`: decoded;
    /// `pnet`: the supplied initial position).
    pub first: Option<[T; 2]>,
}

struct EncodedSlot<T> {
    cell: usize,
    is_p: bool,
    steps: Vec<usize>,
    cache: EncoderCache<T>,
}

struct StepCache<T> {
    t: usize,
    cell: usize,
    p: Option<StackCache<T>>,
    c: Option<StackCache<T>>,
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache<T> {
    n_frames: usize,
    slots: Vec<EncodedSlot<T>>,
    /// `(slot, row)` of the p and c features for each frame index.
    feat_at: Vec<[Option<(usize, usize)>; 2]>,
    steps: Vec<StepCache<T>>,
    dec: DecoderCache<T>,
    p_dec: Option<DecoderCache<T>>,
}

const WARMUP: usize = 1;
const TRACKING: usize = 0;

impl<T: Real> Network<T> {
    pub fn new(config: ModelConfig, norm: InputNorm, seed_value: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::child_rng(seed_value, "model-init");
        let kind = config.kind;
        let make_cell = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut pathway = || Pathway {
                encoder: Encoder::new(config.frame_shape, &config.encoder_channels, config.convs_per_stage, config.feature_dim, rng),
                gru: GruStack::new(config.feature_dim, config.hidden_dim, config.gru_layers, rng),
            };
            let p = kind.has_p().then(&mut pathway);
            let c = kind.has_c().then(&mut pathway);
            PacCell { p, c }
        };
        let tracking = make_cell(&mut rng);
        let warmup = (config.warmup_steps > 0).then(|| make_cell(&mut rng));
        let decoder = Decoder::new(config.hidden_dim, config.decoder_hidden, &mut rng);
        let p_decoder = (kind == ModelKind::Pacnet && !config.shared_decoder).then(|| Decoder::new(config.hidden_dim, config.decoder_hidden, &mut rng));
        Ok(Self {
            config,
            norm,
            warmup,
            tracking,
            decoder,
            p_decoder,
        })
    }

    /// Parameters of one stage's cell (both pathways); the quantity matched
    /// across models when sizing the ablations.
    pub fn pathway_param_count(&self) -> usize {
        self.tracking.param_count()
    }

    pub fn cell(&self, id: usize) -> &PacCell<T> {
        if id == WARMUP {
            self.warmup.as_ref().expect("warm-up cell")
        } else {
            &self.tracking
        }
    }

    fn cell_mut(&mut self, id: usize) -> &mut PacCell<T> {
        if id == WARMUP {
            self.warmup.as_mut().expect("warm-up cell")
        } else {
            &mut self.tracking
        }
    }

    /// Stage of the step at frame `t`.
    pub fn stage_of(&self, t: usize) -> Stage {
        let w = self.config.warmup_steps;
        if w > 0 && t <= w {
            Stage::Warmup
        } else {
            Stage::Tracking
        }
    }

    fn cell_id(&self, t: usize) -> usize {
        match self.stage_of(t) {
            Stage::Warmup => WARMUP,
            Stage::Tracking => TRACKING,
        }
    }

    pub fn state_len(&self) -> usize {
        self.config.gru_layers * self.config.hidden_dim
    }

    /// Minimum clip length accepted by [`Network::forward`].
    pub fn min_frames(&self) -> usize {
        self.config.warmup_steps + 2
    }

    pub(crate) fn normalize_raw(&self, frame: &[T]) -> Vec<T> {
        let (m, s) = (T::of(self.norm.raw_mean), T::of(1.0 / self.norm.raw_std));
        frame.iter().map(|&v| (v - m) * s).collect()
    }

    pub(crate) fn normalize_diff(&self, cur: &[T], prev: &[T]) -> Vec<T> {
        let s = T::of(1.0 / self.norm.diff_std);
        cur.iter().zip(prev).map(|(&a, &b)| (a - b) * s).collect()
    }

    /// Run the model over a whole clip (`n_frames x C x H x W`, values in
    /// [0, 1]). `init` is the normalised true start position, required by `pnet`.
    pub fn forward(&self, frames: &[T], n_frames: usize, init: Option<[T; 2]>) -> Result<(ForwardOutput<T>, ForwardCache<T>)> {
        let cfg = &self.config;
        let fl = cfg.frame_len();
        if frames.len() != n_frames * fl {
            return Err(Error::Contract(format!(
                "clip holds {} values, expected {n_frames} frames of shape {:?}",
                frames.len(),
                cfg.frame_shape
            )));
        }
        if n_frames < self.min_frames() {
            return Err(Error::TooShort {
                what: "tracked clip (frames)",
                got: n_frames,
                need: self.min_frames(),
            });
        }
        if cfg.kind == ModelKind::Pnet && init.is_none() {
            return Err(Error::Contract("pnet needs the true initial position".into()));
        }
        let frame = |t: usize| &frames[t * fl..(t + 1) * fl];
        let first = cfg.kind.first_step();
        let hw = cfg.frame_shape[1] * cfg.frame_shape[2];
        let ch = cfg.frame_shape[0];

        // Encode every frame once, grouped by (cell, pathway).
        let mut slots = Vec::new();
        let mut feats: Vec<Vec<T>> = Vec::new();
        let mut feat_at = vec![[None, None]; n_frames];
        let cells: Vec<usize> = if self.warmup.is_some() { vec![TRACKING, WARMUP] } else { vec![TRACKING] };
        for &cell_id in &cells {
            let cell_steps: Vec<usize> = (first..n_frames).filter(|&t| self.cell_id(t) == cell_id).collect();
            if cell_steps.is_empty() {
                continue;
            }
            let cell = self.cell(cell_id);
            for (is_p, pathway) in [(true, &cell.p), (false, &cell.c)] {
                let Some(pathway) = pathway else { continue };
                let n = cell_steps.len();
                let mut buf = vec![T::zero(); fl * n];
                for (i, &t) in cell_steps.iter().enumerate() {
                    let img = if is_p { self.normalize_diff(frame(t), frame(t - 1)) } else { self.normalize_raw(frame(t)) };
                    for c in 0..ch {
                        buf[(c * n + i) * hw..][..hw].copy_from_slice(&img[c * hw..][..hw]);
                    }
                }
                let (f, cache) = pathway.encoder.forward(&buf, n);
                let slot = slots.len();
                for (i, &t) in cell_steps.iter().enumerate() {
                    feat_at[t][usize::from(!is_p)] = Some((slot, i));
                }
                slots.push(EncodedSlot {
                    cell: cell_id,
                    is_p,
                    steps: cell_steps.clone(),
                    cache,
                });
                feats.push(f);
            }
        }
        let fd = cfg.feature_dim;
        let feat = |t: usize, p: bool| -> &[T] {
            let (slot, row) = feat_at[t][usize::from(!p)].unwrap();
            &feats[slot][row * fd..][..fd]
        };

        // Recurrence.
        let n_steps = n_frames - first;
        let hd = cfg.hidden_dim;
        let mut top = Vec::with_capacity(n_steps * hd);
        let mut top_tilde = Vec::with_capacity(if cfg.kind == ModelKind::Pacnet { n_steps * hd } else { 0 });
        let mut steps = Vec::with_capacity(n_steps);
        if cfg.kind == ModelKind::Cnn {
            for t in first..n_frames {
                top.extend_from_slice(feat(t, false));
            }
        } else {
            let mut h = vec![T::zero(); self.state_len()];
            for t in first..n_frames {
                let cell_id = self.cell_id(t);
                let cell = self.cell(cell_id);
                let mut sc = StepCache {
                    t,
                    cell: cell_id,
                    p: None,
                    c: None,
                };
                if let Some(p) = &cell.p {
                    let (h_new, cache) = p.gru.step(feat(t, true), &h, 1);
                    h = h_new;
                    sc.p = Some(cache);
                    if cfg.kind == ModelKind::Pacnet {
                        top_tilde.extend_from_slice(p.gru.top(&h, 1));
                    }
                }
                if let Some(c) = &cell.c {
                    let (h_new, cache) = c.gru.step(feat(t, false), &h, 1);
                    h = h_new;
                    sc.c = Some(cache);
                }
                let gru = cell.c.as_ref().or(cell.p.as_ref()).unwrap();
                top.extend_from_slice(gru.gru.top(&h, 1));
                steps.push(sc);
            }
        }

        let (y, dec_cache) = self.decoder.forward(&top, n_steps);
        let mut p_dec_cache = None;
        let p_positions = if cfg.kind == ModelKind::Pacnet {
            let dec = self.p_decoder.as_ref().unwrap_or(&self.decoder);
            let (yp, cache) = dec.forward(&top_tilde, n_steps);
            if self.p_decoder.is_some() {
                p_dec_cache = Some(cache);
            }
            Some(yp)
        } else {
            None
        };

        let out = match cfg.kind {
            ModelKind::Pacnet => ForwardOutput {
                positions: y,
                p_positions,
                first: None,
            },
            ModelKind::Cnet | ModelKind::Cnn => ForwardOutput {
                positions: y[2..].to_vec(),
                p_positions: None,
                first: Some([y[0], y[1]]),
            },
            ModelKind::Pnet => {
                let init = init.unwrap();
                let scale = T::of(cfg.displacement_scale);
                let mut pos = Vec::with_capacity(y.len());
                let mut cur = init;
                for d in y.chunks_exact(2) {
                    cur = [cur[0] + scale * d[0], cur[1] + scale * d[1]];
                    pos.extend_from_slice(&cur);
                }
                ForwardOutput {
                    positions: pos,
                    p_positions: None,
                    first: Some(init),
                }
            }
        };
        let cache = ForwardCache {
            n_frames,
            slots,
            feat_at,
            steps,
            dec: dec_cache,
            p_dec: p_dec_cache,
        };
        Ok((out, cache))
    }

    /// Accumulate parameter gradients given `d loss / d positions` (and, with
    /// a split decoder, `d loss / d p_positions`).
    pub fn backward(&self, cache: &ForwardCache<T>, d_pos: &[T], d_ppos: Option<&[T]>, grads: &mut Self) {
        let cfg = &self.config;
        let n = cache.n_frames;
        assert_eq!(d_pos.len(), (n - 1) * 2, "backward: gradient has the wrong length");
        let first = cfg.kind.first_step();
        let n_steps = n - first;
        let hd = cfg.hidden_dim;
        let fd = cfg.feature_dim;

        let dy: Vec<T> = match cfg.kind {
            ModelKind::Pacnet => d_pos.to_vec(),
            ModelKind::Cnet | ModelKind::Cnn => {
                let mut v = vec![T::zero(); 2];
                v.extend_from_slice(d_pos);
                v
            }
            ModelKind::Pnet => {
                // positions are a running sum of scaled displacements
                let scale = T::of(cfg.displacement_scale);
                let mut v = vec![T::zero(); d_pos.len()];
                let mut acc = [T::zero(), T::zero()];
                for s in (0..n - 1).rev() {
                    acc[0] += d_pos[2 * s];
                    acc[1] += d_pos[2 * s + 1];
                    v[2 * s] = acc[0] * scale;
                    v[2 * s + 1] = acc[1] * scale;
                }
                v
            }
        };
        let d_top = self.decoder.backward(&cache.dec, &dy, &mut grads.decoder);
        let d_top_tilde = match (&self.p_decoder, &cache.p_dec, d_ppos) {
            (Some(dec), Some(pc), Some(dp)) => Some(dec.backward(pc, dp, grads.p_decoder.as_mut().unwrap())),
            _ => None,
        };

        let mut dfeats: Vec<Vec<T>> = cache.slots.iter().map(|s| vec![T::zero(); s.steps.len() * fd]).collect();
        let mut put = |t: usize, p: bool, g: &[T]| {
            let (slot, row) = cache.feat_at[t][usize::from(!p)].unwrap();
            for (d, &v) in dfeats[slot][row * fd..][..fd].iter_mut().zip(g) {
                *d += v;
            }
        };

        if cfg.kind == ModelKind::Cnn {
            for (s, t) in (first..n).enumerate() {
                put(t, false, &d_top[s * hd..][..hd]);
            }
        } else {
            let layers = cfg.gru_layers;
            let top_off = (layers - 1) * hd;
            let mut carry = vec![T::zero(); self.state_len()];
            for s in (0..n_steps).rev() {
                let sc = &cache.steps[s];
                let cell = self.cell(sc.cell);
                let gcell = grads.cell_mut(sc.cell);
                for (d, &g) in carry[top_off..].iter_mut().zip(&d_top[s * hd..][..hd]) {
                    *d += g;
                }
                if let (Some(c), Some(cc)) = (&cell.c, &sc.c) {
                    let (dx, dstate) = c.gru.backward(cc, &carry, 1, &mut gcell.c.as_mut().unwrap().gru);
                    put(sc.t, false, &dx);
                    carry = dstate;
                }
                if let (Some(p), Some(pc)) = (&cell.p, &sc.p) {
                    if let Some(dt) = &d_top_tilde {
                        for (d, &g) in carry[top_off..].iter_mut().zip(&dt[s * hd..][..hd]) {
                            *d += g;
                        }
                    }
                    let (dx, dstate) = p.gru.backward(pc, &carry, 1, &mut gcell.p.as_mut().unwrap().gru);
                    put(sc.t, true, &dx);
                    carry = dstate;
                }
            }
        }

        for (slot, df) in cache.slots.iter().zip(&dfeats) {
            let cell = self.cell(slot.cell);
            let gcell = grads.cell_mut(slot.cell);
            let (pw, gpw) = if slot.is_p { (&cell.p, &mut gcell.p) } else { (&cell.c, &mut gcell.c) };
            pw.as_ref().unwrap().encoder.backward(&slot.cache, df, &mut gpw.as_mut().unwrap().encoder);
        }
    }
}

impl Network<f32> {
    /// Whole-clip tracking of a raw stream. `init` (room-normalised) is
    /// required by `pnet` and ignored otherwise.
    pub fn track(&self, stream: &FrameStream, init: Option<Point2>) -> Result<TrackOutput> {
        self.check_stream(stream)?;
        let init = init.map(|p| [p.x as f32, p.y as f32]);
        let (out, _) = self.forward(&stream.data, stream.frames, init)?;
        Ok(TrackOutput::from_forward(&out))
    }

    pub(crate) fn check_stream(&self, stream: &FrameStream) -> Result<()> {
        if stream.kind != StreamKind::Raw {
            return Err(Error::Contract("trackers consume raw streams".into()));
        }
        let shape = [stream.channels, stream.height, stream.width];
        if shape != self.config.frame_shape {
            return Err(Error::InvalidConfig(format!(
                "stream frames are {:?} but the model expects {:?}",
                shape, self.config.frame_shape
            )));
        }
        Ok(())
    }
}

/// Result of tracking one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    /// Positions for frames `1..T` (normalised room coordinates).
    pub positions: Vec<Point2>,
    /// `pacnet` only: the P-trajectory for frames `1..T`.
    pub p_positions: Option<Vec<Point2>>,
    /// Output for frame 0 when the model emits one.
    pub first: Option<Point2>,
}

fn to_points<T: Real>(v: &[T]) -> Vec<Point2> {
    v.chunks_exact(2).map(|c| Point2::new(c[0].f64(), c[1].f64())).collect()
}

impl TrackOutput {
    pub fn from_forward<T: Real>(out: &ForwardOutput<T>) -> Self {
        Self {
            positions: to_points(&out.positions),
            p_positions: out.p_positions.as_deref().map(to_points),
            first: out.first.map(|f| Point2::new(f[0].f64(), f[1].f64())),
        }
    }

    /// Every position the model emits, in frame order (`T - 1` for `pacnet`, `T` otherwise).
    pub fn emitted(&self) -> Vec<Point2> {
        self.first.iter().copied().chain(self.positions.iter().copied()).collect()
    }
}

#[cfg(test)]
mod tests;
