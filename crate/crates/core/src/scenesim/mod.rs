//! Desk-scale forward model of the relay wall.
//!
//! The hidden room is the box `[0, width] x [0, depth] x [0, ceiling_height]`
//! and the relay wall is the plane `y = 0`, seen head-on through an
//! orthographic camera window. Each wall patch receives direct light from the
//! ceiling lights (optionally shadowed by the walker) plus one diffuse bounce
//! off the walker, modelled as a Lambertian vertical cylinder.

mod render;
mod sample;
mod stream;

pub use render::{render_clip, render_frame, Renderer};
pub use sample::{faintness, sample_scene, ImageShape, FAINTNESS_LIMIT, SAMPLING_FAINTNESS_TARGET};
pub use stream::{add_noise, difference_stream, quantize_8bit, FrameStream, StreamKind};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::trajgen::{Point2, RoomSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightKind {
    Point,
    Spot,
    Area,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightSource {
    pub kind: LightKind,
    /// Meters; `z` equals the ceiling height.
    pub position: [f64; 3],
    /// Unit emission axis (spot cone axis, area light normal).
    pub orientation: [f64; 3],
    pub power: f64,
    /// Area lights: rectangle side lengths in meters.
    pub extent: [f64; 2],
    /// Area lights: rotation of the rectangle about its normal, radians.
    pub rotation: f64,
    /// Spot lights: half-angle of the cone, radians.
    pub cone_angle: f64,
    /// Per-channel colour multiplier.
    pub tint: [f64; 3],
}

impl LightSource {
    pub fn point(position: [f64; 3], power: f64) -> Self {
        Self {
            kind: LightKind::Point,
            position,
            orientation: [0.0, 0.0, -1.0],
            power,
            extent: [0.0, 0.0],
            rotation: 0.0,
            cone_angle: 0.0,
            tint: [1.0; 3],
        }
    }

    pub fn area(position: [f64; 3], power: f64, extent: [f64; 2]) -> Self {
        Self {
            kind: LightKind::Area,
            extent,
            ..Self::point(position, power)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallMaterial {
    pub albedo: f64,
    /// Scales the procedural albedo texture; amplitude is `0.1 * roughness * albedo`.
    pub roughness: f64,
    pub texture_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterModel {
    pub height: f64,
    pub radius: f64,
    pub albedo: f64,
}

/// Axis-aligned rectangle on the wall plane imaged onto `rows x cols` pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraWindow {
    /// Left edge along the wall, meters.
    pub x0: f64,
    /// Bottom edge height, meters.
    pub z0: f64,
    pub width: f64,
    pub height: f64,
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
}

impl CameraWindow {
    pub fn frame_len(&self) -> usize {
        self.channels * self.rows * self.cols
    }

    /// Wall point `(x, z)` at the centre of pixel `(row, col)`; row 0 is the top.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.x0 + (col as f64 + 0.5) / self.cols as f64 * self.width;
        let z = self.z0 + self.height - (row as f64 + 0.5) / self.rows as f64 * self.height;
        (x, z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub gaussian_std: f64,
    pub target_mean: f64,
    pub target_std: f64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_std >= 0.0) {
            return Err(Error::InvalidConfig(format!("gaussian_std must be >= 0, got {}", self.gaussian_std)));
        }
        if !(self.target_std > 0.0) {
            return Err(Error::InvalidConfig(format!("target_std must be > 0, got {}", self.target_std)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    /// Linear tone-mapping constant applied before clipping to [0, 1].
    pub exposure: f64,
    /// Shadow the direct term by the walker.
    pub occlusion: bool,
    /// Stratified samples per area light.
    pub light_samples: usize,
    /// Surface samples on the walker cylinder for the bounce term.
    pub surface_samples: usize,
    /// Seeds the fixed jitter pattern of the light samples.
    pub sample_seed: u64,
    /// Round-trip frames through 8-bit quantization after noise.
    pub quantize: bool,
    /// Irradiance the walker never shadows, standing in for light reflected by
    /// the rest of the room; a multiple of the window's mean direct irradiance.
    #[serde(default)]
    pub ambient: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            exposure: 1.0,
            occlusion: true,
            light_samples: 16,
            surface_samples: 64,
            sample_seed: 0,
            quantize: false,
            ambient: 0.0,
        }
    }
}

/// Everything needed to render a clip of the relay wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub room: RoomSpec,
    pub ceiling_height: f64,
    pub lights: Vec<LightSource>,
    pub wall: WallMaterial,
    pub character: CharacterModel,
    pub camera: CameraWindow,
    pub noise: NoiseModel,
    pub render: RenderSettings,
}

pub const DEFAULT_CEILING_HEIGHT: f64 = 2.8;

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.ceiling_height > 0.0) {
            return bad(format!("ceiling height must be positive, got {}", self.ceiling_height));
        }
        if self.lights.is_empty() || self.lights.len() > 3 {
            return bad(format!("expected 1 to 3 lights, got {}", self.lights.len()));
        }
        for (i, l) in self.lights.iter().enumerate() {
            if !(l.power > 0.0) {
                return bad(format!("light {i}: power must be positive"));
            }
            if l.kind == LightKind::Area && !(l.extent[0] > 0.0 && l.extent[1] > 0.0) {
                return bad(format!("light {i}: area light needs a positive extent"));
            }
            if (l.position[2] - self.ceiling_height).abs() > 1e-9 {
                return bad(format!("light {i}: not on the ceiling plane"));
            }
        }
        if !(self.wall.albedo > 0.0 && self.wall.albedo <= 1.0) || !(0.0..=1.0).contains(&self.wall.roughness) {
            return bad("wall albedo must be in (0, 1] and roughness in [0, 1]".into());
        }
        if !(self.render.ambient >= 0.0) {
            return bad(format!("ambient must be >= 0, got {}", self.render.ambient));
        }
        let c = &self.character;
        if !(c.radius > 0.0) || !(c.height > 0.0) || c.height > self.ceiling_height || !(0.0..=1.0).contains(&c.albedo) {
            return bad(format!("character does not fit the room: {c:?}"));
        }
        let w = &self.camera;
        if w.rows == 0 || w.cols == 0 || w.channels == 0 {
            return bad("camera resolution must be nonzero".into());
        }
        if w.x0 < 0.0 || w.z0 < 0.0 || w.x0 + w.width > self.room.width + 1e-9 || w.z0 + w.height > self.ceiling_height + 1e-9
            || !(w.width > 0.0 && w.height > 0.0)
        {
            return bad(format!("camera window lies outside the wall: {w:?}"));
        }
        if !(self.noise.gaussian_std >= 0.0) {
            return bad("gaussian_std must be >= 0".into());
        }
        if !(self.render.exposure > 0.0) || self.render.light_samples == 0 || self.render.surface_samples == 0 {
            return bad("render settings must be positive".into());
        }
        Ok(())
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.room.contains(p)
    }

    pub fn frame_shape(&self) -> [usize; 3] {
        [self.camera.channels, self.camera.rows, self.camera.cols]
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: SceneConfig = toml::from_str(text)?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
