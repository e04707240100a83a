use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NoiseModel;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Raw,
    Difference,
}

/// A `T x C x H x W` video of the relay wall, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStream {
    pub data: Vec<f32>,
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kind: StreamKind,
    pub fps: f64,
}

impl FrameStream {
    pub fn new(
        data: Vec<f32>,
        frames: usize,
        channels: usize,
        height: usize,
        width: usize,
        kind: StreamKind,
        fps: f64,
    ) -> Result<Self> {
        let want = frames * channels * height * width;
        if data.len() != want {
            return Err(Error::LengthMismatch {
                what: "frame stream data vs T*C*H*W",
                left: data.len(),
                right: want,
            });
        }
        Ok(Self {
            data,
            frames,
            channels,
            height,
            width,
            kind,
            fps,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.frames, self.channels, self.height, self.width]
    }

    /// Contiguous window of `len` frames starting at `start`.
    pub fn window(&self, start: usize, len: usize) -> FrameStream {
        let n = self.frame_len();
        FrameStream {
            data: self.data[start * n..(start + len) * n].to_vec(),
            frames: len,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> FrameStream {
        FrameStream {
            data: Vec::new(),
            frames: 0,
            channels: self.channels,
            height: self.height,
            width: self.width,
            kind: self.kind,
            fps: self.fps,
        }
    }

    pub fn mean_std(&self) -> (f64, f64) {
        mean_std(&self.data)
    }
}

fn mean_std(data: &[f32]) -> (f64, f64) {
    let n = data.len().max(1) as f64;
    let mean = data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Frame `t` of the output is `raw[t + 1] - raw[t]`, with no rescaling.
pub fn difference_stream(raw: &FrameStream) -> Result<FrameStream> {
    if raw.kind != StreamKind::Raw {
        return Err(Error::Contract("difference_stream expects a raw stream".into()));
    }
    if raw.frames < 2 {
        return Err(Error::TooShort {
            what: "difference stream",
            got: raw.frames,
            need: 2,
        });
    }
    let n = raw.frame_len();
    let data: Vec<f32> = raw.data[n..].iter().zip(&raw.data[..raw.data.len() - n]).map(|(b, a)| b - a).collect();
    Ok(FrameStream {
        data,
        frames: raw.frames - 1,
        kind: StreamKind::Difference,
        ..raw.clone_header()
    })
}

pub(crate) fn add_gaussian(data: &mut [f32], std: f64, seed_value: u64) -> Result<()> {
    if std == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = seed::rng(seed_value);
    for v in data.iter_mut() {
        *v += normal.sample(&mut rng) as f32;
    }
    Ok(())
}

/// Add i.i.d. Gaussian pixel noise, then affinely align the clip's pixel mean
/// and standard deviation with the targets, then clip to [0, 1].
///
/// A clip with zero spread after the noise step can only be shifted to the
/// target mean.
pub fn add_noise(stream: &FrameStream, noise: &NoiseModel, seed_value: u64) -> Result<FrameStream> {
    noise.validate()?;
    if stream.kind != StreamKind::Raw {
        return Err(Error::Contract("noise is applied to raw streams only".into()));
    }
    let mut out = stream.clone();
    add_gaussian(&mut out.data, noise.gaussian_std, seed_value)?;
    let (mean, std) = mean_std(&out.data);
    let scale = if std > 0.0 { noise.target_std / std } else { 1.0 };
    for v in out.data.iter_mut() {
        let aligned = (*v as f64 - mean) * scale + noise.target_mean;
        *v = aligned.clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}

/// Round-trip values through 8-bit storage.
pub fn quantize_8bit(stream: &FrameStream) -> FrameStream {
    let mut out = stream.clone();
    for v in out.data.iter_mut() {
        *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
    }
    out
}
