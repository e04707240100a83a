//! Static PNG figures: trajectories in the unit square and difference frames.

use std::path::Path;

use anyhow::Context;
use image::{Rgb, RgbImage};
use nlos_core::Point2;

const MARGIN: u32 = 24;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const FRAME: Rgb<u8> = Rgb([60, 60, 60]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const GROUND_TRUTH: Rgb<u8> = Rgb([20, 20, 20]);
const WARMUP: Rgb<u8> = Rgb([150, 150, 150]);

/// A predicted trajectory; the first `warmup` points are drawn grey and dashed.
pub struct Series {
    pub points: Vec<Point2>,
    pub warmup: usize,
}

struct Canvas {
    img: RgbImage,
    size: u32,
}

impl Canvas {
    fn new(size: u32) -> Self {
        let full = size + 2 * MARGIN;
        Self {
            img: RgbImage::from_pixel(full, full, BACKGROUND),
            size,
        }
    }

    /// Unit-square coordinates to pixels; y grows upward.
    fn to_px(&self, p: Point2) -> (f64, f64) {
        let s = self.size as f64;
        (MARGIN as f64 + p.x * s, MARGIN as f64 + (1.0 - p.y) * s)
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    fn dot(&mut self, x: f64, y: f64, r: f64, c: Rgb<u8>) {
        let ri = r.ceil() as i64;
        let (cx, cy) = (x.round() as i64, y.round() as i64);
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if ((dx * dx + dy * dy) as f64) <= r * r {
                    self.put(cx + dx, cy + dy, c);
                }
            }
        }
    }

    /// Thick segment between two points; with `dash` only the "on" parts
    /// of a repeating pattern are drawn.
    fn segment(&mut self, a: Point2, b: Point2, width: f64, c: Rgb<u8>, dash: Option<(f64, f64)>) {
        let (x0, y0) = self.to_px(a);
        let (x1, y1) = self.to_px(b);
        let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        let n = (len.ceil() as usize).max(1);
        for i in 0..=n {
            let t = i as f64 / n as f64;
            if let Some((on, off)) = dash {
                if (t * len) % (on + off) > on {
                    continue;
                }
            }
            self.dot(x0 + t * (x1 - x0), y0 + t * (y1 - y0), width / 2.0, c);
        }
    }

    fn axes(&mut self) {
        for k in 0..=10 {
            let v = k as f64 / 10.0;
            let c = if k == 0 || k == 10 { FRAME } else { GRID };
            self.segment(Point2::new(v, 0.0), Point2::new(v, 1.0), 1.0, c, None);
            self.segment(Point2::new(0.0, v), Point2::new(1.0, v), 1.0, c, None);
        }
    }
}

/// Blue to red along time.
fn gradient(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0);
    Rgb([(40.0 + 215.0 * t) as u8, (90.0 * (1.0 - (2.0 * t - 1.0).abs())) as u8 + 40, (255.0 * (1.0 - t)) as u8])
}

/// Ground truth in black, predictions with a time colour gradient and their
/// warm-up prefix grey and dashed.
pub fn trajectory_figure(gt: Option<&[Point2]>, preds: &[Series], size: u32) -> RgbImage {
    let mut cv = Canvas::new(size);
    cv.axes();
    if let Some(g) = gt {
        for w in g.windows(2) {
            cv.segment(w[0], w[1], 3.0, GROUND_TRUTH, None);
        }
        if let Some(&p) = g.first() {
            let (x, y) = cv.to_px(p);
            cv.dot(x, y, 4.0, GROUND_TRUTH);
        }
    }
    for s in preds {
        let n = s.points.len().max(2) - 1;
        for (k, w) in s.points.windows(2).enumerate() {
            if k + 1 <= s.warmup {
                cv.segment(w[0], w[1], 2.0, WARMUP, Some((6.0, 4.0)));
            } else {
                cv.segment(w[0], w[1], 2.0, gradient(k as f64 / n as f64), None);
            }
        }
    }
    cv.img
}

/// `|I_t - I_{t-1}|` averaged over channels and min-max scaled to [0, 1].
pub fn difference_magnitude(cur: &[f32], prev: &[f32], channels: usize) -> Vec<f64> {
    let hw = cur.len() / channels;
    let mut out = vec![0.0; hw];
    for c in 0..channels {
        for i in 0..hw {
            out[i] += (cur[c * hw + i] as f64 - prev[c * hw + i] as f64).abs() / channels as f64;
        }
    }
    let lo = out.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in &mut out {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
    out
}

/// Greyscale image of values in [0, 1], each pixel enlarged `scale` times.
pub fn grey_image(values: &[f64], height: usize, width: usize, scale: u32) -> RgbImage {
    RgbImage::from_fn(width as u32 * scale, height as u32 * scale, |x, y| {
        let v = values[(y / scale) as usize * width + (x / scale) as usize];
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([g, g, g])
    })
}

pub fn save(img: &RgbImage, path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    img.save(path).with_context(|| format!("writing {}", path.display()))
}
