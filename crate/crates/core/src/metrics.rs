//! Trajectory quality metrics.
//!
//! All metrics take the predicted curve first and the ground truth second, in
//! normalised room coordinates. Normalisation conventions:
//!
//! | metric | value |
//! |--------|-------|
//! | RMS_x  | root of the mean squared Euclidean point error |
//! | RMS_v  | root of the mean squared Euclidean error of per-frame displacements |
//! | Area   | quadrilateral-strip area between the curves / ground-truth arc length |
//! | DTW    | optimal monotone alignment cost / number of ground-truth points |
//! | PCM    | best arc-length-offset mean deviation / number of ground-truth points |

use serde::{Deserialize, Serialize};

use crate::trajgen::Point2;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rms_x: f64,
    pub rms_v: f64,
    pub area: f64,
    pub dtw: f64,
    pub pcm: f64,
    pub n_frames_evaluated: usize,
}

impl MetricsReport {
    pub const NAMES: [&'static str; 5] = ["rms_x", "rms_v", "area", "dtw", "pcm"];

    pub fn values(&self) -> [f64; 5] {
        [self.rms_x, self.rms_v, self.area, self.dtw, self.pcm]
    }

    /// Element-wise mean of several reports.
    pub fn mean(reports: &[MetricsReport]) -> MetricsReport {
        let n = reports.len().max(1) as f64;
        let mut m = MetricsReport::default();
        for r in reports {
            m.rms_x += r.rms_x / n;
            m.rms_v += r.rms_v / n;
            m.area += r.area / n;
            m.dtw += r.dtw / n;
            m.pcm += r.pcm / n;
            m.n_frames_evaluated += r.n_frames_evaluated;
        }
        m
    }

    /// Element-wise population standard deviation.
    pub fn std(reports: &[MetricsReport]) -> [f64; 5] {
        let mean = Self::mean(reports).values();
        let n = reports.len().max(1) as f64;
        let mut out = [0.0; 5];
        for r in reports {
            for (o, (v, m)) in out.iter_mut().zip(r.values().iter().zip(mean)) {
                *o += (v - m).powi(2) / n;
            }
        }
        out.map(f64::sqrt)
    }
}

fn check_equal(pred: &[Point2], gt: &[Point2], need: usize, what: &'static str) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what,
            left: pred.len(),
            right: gt.len(),
        });
    }
    if gt.len() < need {
        return Err(Error::TooShort {
            what,
            got: gt.len(),
            need,
        });
    }
    Ok(())
}

pub fn arc_length(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| w[0].dist(w[1])).sum()
}

pub fn rms_x(pred: &[Point2], gt: &[Point2]) -> Result<f64> {
    check_equal(pred, gt, 1, "rms_x")?;
    let sum: f64 = pred.iter().zip(gt).map(|(p, g)| (p.x - g.x).powi(2) + (p.y - g.y).powi(2)).sum();
    Ok((sum / gt.len() as f64).sqrt())
}

pub fn rms_v(pred: &[Point2], gt: &[Point2]) -> Result<f64> {
    check_equal(pred, gt, 2, "rms_v")?;
    let n = gt.len() - 1;
    let sum: f64 = (0..n)
        .map(|t| {
            let dp = pred[t + 1].sub(pred[t]);
            let dg = gt[t + 1].sub(gt[t]);
            (dp.x - dg.x).powi(2) + (dp.y - dg.y).powi(2)
        })
        .sum();
    Ok((sum / n as f64).sqrt())
}

/// Total cost of the optimal monotone alignment with Euclidean point cost.
pub fn dtw_cost(pred: &[Point2], gt: &[Point2]) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::TooShort {
            what: "dtw",
            got: pred.len().min(gt.len()),
            need: 1,
        });
    }
    let m = gt.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for (i, p) in pred.iter().enumerate() {
        for j in 0..m {
            let c = p.dist(gt[j]);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = c + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// DTW cost divided by the number of ground-truth points.
pub fn dtw(pred: &[Point2], gt: &[Point2]) -> Result<f64> {
    Ok(dtw_cost(pred, gt)? / gt.len() as f64)
}

/// Area of one strip quadrilateral `(p0, p1, g1, g0)`, computed from its
/// diagonals as `|AC x BD| / 2`. For a simple quadrilateral this is its area;
/// for a bow-tie (curves crossing inside the segment) the two lobes cancel.
fn quad_area(p0: Point2, p1: Point2, g1: Point2, g0: Point2) -> f64 {
    let ac = g1.sub(p0);
    let bd = g0.sub(p1);
    0.5 * (ac.x * bd.y - ac.y * bd.x).abs()
}

/// Sum of strip quadrilateral areas between corresponding segments.
pub fn area_between_raw(pred: &[Point2], gt: &[Point2]) -> Result<f64> {
    check_equal(pred, gt, 2, "area")?;
    Ok((0..gt.len() - 1).map(|i| quad_area(pred[i], pred[i + 1], gt[i + 1], gt[i])).sum())
}

/// Strip area divided by the ground-truth arc length.
pub fn area_between(pred: &[Point2], gt: &[Point2]) -> Result<f64> {
    let raw = area_between_raw(pred, gt)?;
    let len = arc_length(gt);
    if !(len > 0.0) {
        return Err(Error::UndefinedMetric("area: ground truth has zero arc length"));
    }
    Ok(raw / len)
}

/// A polyline parameterised by cumulative arc length.
struct ArcCurve<'a> {
    points: &'a [Point2],
    cum: Vec<f64>,
}

impl<'a> ArcCurve<'a> {
    fn new(points: &'a [Point2]) -> Self {
        let mut cum = Vec::with_capacity(points.len());
        let mut s = 0.0;
        cum.push(0.0);
        for w in points.windows(2) {
            s += w[0].dist(w[1]);
            cum.push(s);
        }
        Self { points, cum }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn at(&self, s: f64) -> Point2 {
        let n = self.points.len();
        if s <= 0.0 {
            return self.points[0];
        }
        if s >= self.length() {
            return self.points[n - 1];
        }
        // first index with cum > s
        let j = self.cum.partition_point(|&c| c <= s).clamp(1, n - 1);
        let (s0, s1) = (self.cum[j - 1], self.cum[j]);
        let t = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        self.points[j - 1].add(self.points[j].sub(self.points[j - 1]).scale(t))
    }
}

/// Mean distance between the points of `short` and the points at the same arc
/// position (shifted by `offset`) on `long`.
fn mapped_deviation(short: &ArcCurve, long: &ArcCurve, offset: f64) -> f64 {
    let n = short.points.len();
    short
        .points
        .iter()
        .zip(&short.cum)
        .map(|(p, &a)| p.dist(long.at(offset + a)))
        .sum::<f64>()
        / n as f64
}

/// Minimum over offsets of the deviation; also returns the arg-min.
fn best_offset(short: &ArcCurve, long: &ArcCurve) -> (f64, f64) {
    let span = (long.length() - short.length()).max(0.0);
    let f = |o: f64| mapped_deviation(short, long, o);
    if span == 0.0 {
        return (f(0.0), 0.0);
    }
    // Between consecutive breakpoints every mapped point stays on one segment
    // of `long`, so each distance and hence the mean is convex in the offset.
    let mut bps = vec![0.0, span];
    for &sj in &long.cum {
        for &ak in &short.cum {
            let o = sj - ak;
            if o > 0.0 && o < span {
                bps.push(o);
            }
        }
    }
    bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bps.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let vals: Vec<f64> = bps.iter().map(|&o| f(o)).collect();
    let (mut best, mut arg) = (f64::INFINITY, 0.0);
    for (&o, &v) in bps.iter().zip(&vals) {
        if v < best {
            best = v;
            arg = o;
        }
    }
    // f is 1-Lipschitz in the offset: refine only intervals whose lower bound can beat `best`.
    for i in 0..bps.len() - 1 {
        let (l, r) = (bps[i], bps[i + 1]);
        let bound = 0.5 * (vals[i] + vals[i + 1] - (r - l));
        if bound >= best {
            continue;
        }
        let (mut a, mut b) = (l, r);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..80 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = f(x2);
            }
            if b - a < 1e-13 {
                break;
            }
        }
        for (o, v) in [(x1, f1), (x2, f2)] {
            if v < best {
                best = v;
                arg = o;
            }
        }
    }
    (best, arg)
}

/// Partial curve mapping: the curve with the shorter arc length is laid onto
/// the longer one by arc length, at the offset minimising the mean
/// point-to-mapped-point deviation. Returns that minimum divided by the
/// number of ground-truth points.
pub fn pcm(pred: &[Point2], gt: &[Point2]) -> Result<f64> {
    for (c, what) in [(pred, "pcm prediction"), (gt, "pcm ground truth")] {
        if c.len() < 2 {
            return Err(Error::TooShort {
                what,
                got: c.len(),
                need: 2,
            });
        }
    }
    let p = ArcCurve::new(pred);
    let g = ArcCurve::new(gt);
    if !(g.length() > 0.0) {
        return Err(Error::UndefinedMetric("pcm: ground truth has zero arc length"));
    }
    let (short, long) = if p.length() <= g.length() { (&p, &g) } else { (&g, &p) };
    let (dev, _) = best_offset(short, long);
    Ok(dev / gt.len() as f64)
}

/// All five metrics on two aligned curves.
pub fn report(pred: &[Point2], gt: &[Point2]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        rms_x: rms_x(pred, gt)?,
        rms_v: rms_v(pred, gt)?,
        area: area_between(pred, gt)?,
        dtw: dtw(pred, gt)?,
        pcm: pcm(pred, gt)?,
        n_frames_evaluated: gt.len(),
    })
}

/// Metrics over the tracking stage only.
///
/// `gt` holds all `T` ground-truth frames; `pred` holds the `T - 1`
/// predictions for frames `1..T` (frame 0 has no prediction). The first `w`
/// predictions belong to the warm-up stage and are dropped together with
/// their ground truth.
pub fn evaluate_tracking(pred: &[Point2], gt: &[Point2], w: usize) -> Result<MetricsReport> {
    if pred.len() + 1 != gt.len() {
        return Err(Error::LengthMismatch {
            what: "predictions vs ground truth minus the first frame",
            left: pred.len(),
            right: gt.len().saturating_sub(1),
        });
    }
    if pred.len() < w + 2 {
        return Err(Error::TooShort {
            what: "tracking-stage evaluation",
            got: pred.len().saturating_sub(w),
            need: 2,
        });
    }
    report(&pred[w..], &gt[1 + w..])
}

/// Evaluate the P-trajectory and C-trajectory of one clip; returns `(C, P)`.
pub fn evaluate(pred_p: &[Point2], pred_c: &[Point2], gt: &[Point2], w: usize) -> Result<(MetricsReport, MetricsReport)> {
    Ok((evaluate_tracking(pred_c, gt, w)?, evaluate_tracking(pred_p, gt, w)?))
}
