use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_grad, LossConfig};
use crate::nn::Params;
use crate::pacnet::{InputNorm, ModelConfig, ModelKind, Network};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub kind: ModelKind,
    pub hidden: usize,
    /// `[C, H, W]`
    pub frame_shape: [usize; 3],
    pub frames: usize,
    pub warmup_steps: usize,
    pub split_decoder: bool,
    pub loss: LossConfig,
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Name prefixes of frozen tensors; they are left out of the check.
    pub freeze: Vec<String>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Pacnet,
            hidden: 8,
            frame_shape: [1, 8, 8],
            frames: 4,
            warmup_steps: 1,
            split_decoder: false,
            loss: LossConfig::default(),
            step: 1e-6,
            tolerance: 1e-3,
            seed: 0,
            freeze: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: String,
    pub params: usize,
    /// `|g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|)` over the group.
    pub rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub loss: f64,
    pub groups: Vec<GroupError>,
    pub excluded: Vec<String>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GroupError> {
        self.groups.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// Compare analytic gradients of the total loss with central differences,
/// one parameter tensor at a time, on a small random model and clip (f64).
///
/// Returns the report when every group is within tolerance and a
/// [`Error::GradientCheck`] naming the worst group otherwise.
pub fn gradient_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let report = gradient_report(cfg)?;
    match report.worst() {
        Some(g) if !(g.rel_err <= cfg.tolerance) => Err(Error::GradientCheck {
            group: g.group.clone(),
            rel_err: g.rel_err,
            tolerance: cfg.tolerance,
        }),
        _ => Ok(report),
    }
}

/// The report without the pass/fail decision.
pub fn gradient_report(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut mc = ModelConfig::tiny(cfg.kind, cfg.frame_shape, cfg.hidden, cfg.warmup_steps);
    mc.shared_decoder = !(cfg.split_decoder && cfg.kind == ModelKind::Pacnet);
    let net = Network::<f64>::new(mc, InputNorm::default(), cfg.seed)?;
    let mut rng = seed::child_rng(cfg.seed, "gradcheck-data");
    let t = cfg.frames;
    let fl: usize = cfg.frame_shape.iter().product();
    let frames: Vec<f64> = (0..t * fl).map(|_| rng.random::<f64>()).collect();
    let gt: Vec<f64> = (0..2 * t).map(|_| rng.random_range(0.1..0.9)).collect();
    let init = Some([gt[0], gt[1]]);
    let target = &gt[2..];
    let w = cfg.warmup_steps;

    let total = |m: &Network<f64>| -> Result<f64> {
        let (out, _) = m.forward(&frames, t, init)?;
        let mut l = loss_and_grad(&out.positions, target, &cfg.loss, w)?.0.total;
        if m.p_decoder.is_some() {
            l += loss_and_grad(out.p_positions.as_ref().unwrap(), target, &cfg.loss, w)?.0.total;
        }
        Ok(l)
    };

    let (out, cache) = net.forward(&frames, t, init)?;
    let (lv, d_pos) = loss_and_grad(&out.positions, target, &cfg.loss, w)?;
    let mut loss = lv.total;
    let mut d_ppos = None;
    if net.p_decoder.is_some() {
        let (pv, g) = loss_and_grad(out.p_positions.as_ref().unwrap(), target, &cfg.loss, w)?;
        loss += pv.total;
        d_ppos = Some(g);
    }
    let mut grads = net.zeros_like();
    net.backward(&cache, &d_pos, d_ppos.as_deref(), &mut grads);
    let analytic = grads.flat();
    let base = net.flat();

    let mut groups = Vec::new();
    let mut excluded = Vec::new();
    let mut probe = net.clone();
    let mut values = base.clone();
    let mut offset = 0;
    for (name, len) in net.named_lengths() {
        let range = offset..offset + len;
        offset += len;
        if cfg.freeze.iter().any(|p| name.starts_with(p.as_str())) {
            excluded.push(name);
            continue;
        }
        let (mut diff2, mut a2, mut n2, mut max_abs) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in range {
            values[i] = base[i] + cfg.step;
            probe.set_flat(&values);
            let lp = total(&probe)?;
            values[i] = base[i] - cfg.step;
            probe.set_flat(&values);
            let lm = total(&probe)?;
            values[i] = base[i];
            let num = (lp - lm) / (2.0 * cfg.step);
            let a = analytic[i];
            diff2 += (a - num).powi(2);
            a2 += a * a;
            n2 += num * num;
            max_abs = max_abs.max((a - num).abs());
        }
        let scale = a2.sqrt().max(n2.sqrt());
        let rel_err = if scale < 1e-12 { diff2.sqrt() } else { diff2.sqrt() / scale };
        groups.push(GroupError {
            group: name,
            params: len,
            rel_err,
            max_abs_err: max_abs,
        });
    }
    Ok(GradCheckReport { loss, groups, excluded })
}
