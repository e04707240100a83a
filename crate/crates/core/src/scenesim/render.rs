use std::f64::consts::{PI, TAU};

use rand::Rng;
use rayon::prelude::*;

use super::{FrameStream, LightKind, LightSource, SceneConfig, StreamKind};
use crate::trajgen::{Point2, Trajectory};
use crate::{seed, Error, Result};

/// Squared-distance floor for light-to-surface transport.
const LIGHT_R2_MIN: f64 = 0.01;
/// Squared-distance floor for walker-to-wall transport; the walker surface can
/// come within centimetres of the wall and the point-to-point kernel is singular there.
const BOUNCE_R2_MIN: f64 = 0.0625;
const SPOT_EXPONENT: i32 = 4;
const TEXTURE_WAVES: usize = 4;

type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(a: Vec3) -> Vec3 {
    let n = dot(a, a).sqrt();
    if n > 0.0 {
        [a[0] / n, a[1] / n, a[2] / n]
    } else {
        [0.0, 0.0, -1.0]
    }
}

/// One emission point of a light: the light itself for point/spot lights,
/// a stratified rectangle sample for area lights.
#[derive(Debug, Clone, Copy)]
struct LightSample {
    light: usize,
    pos: Vec3,
    /// Area represented by the sample (area lights only).
    weight: f64,
}

fn light_samples(lights: &[LightSource], per_area: usize, sample_seed: u64) -> Vec<LightSample> {
    let mut rng = seed::rng(sample_seed);
    let mut out = Vec::new();
    for (li, l) in lights.iter().enumerate() {
        match l.kind {
            LightKind::Point | LightKind::Spot => out.push(LightSample {
                light: li,
                pos: l.position,
                weight: 1.0,
            }),
            LightKind::Area => {
                let axis = unit(l.orientation);
                let helper = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
                let t1 = unit(cross(axis, helper));
                let t2 = cross(axis, t1);
                let (s, c) = l.rotation.sin_cos();
                let u_dir = [c * t1[0] + s * t2[0], c * t1[1] + s * t2[1], c * t1[2] + s * t2[2]];
                let v_dir = cross(axis, u_dir);
                let grid = (per_area as f64).sqrt().ceil() as usize;
                let area = l.extent[0] * l.extent[1];
                for k in 0..per_area {
                    let (gi, gj) = (k % grid, k / grid);
                    let u = (gi as f64 + rng.random::<f64>()) / grid as f64 - 0.5;
                    let v = (gj as f64 + rng.random::<f64>()) / grid as f64 - 0.5;
                    let (du, dv) = (u * l.extent[0], v * l.extent[1]);
                    let pos = [
                        l.position[0] + du * u_dir[0] + dv * v_dir[0],
                        l.position[1] + du * u_dir[1] + dv * v_dir[1],
                        l.position[2] + du * u_dir[2] + dv * v_dir[2],
                    ];
                    out.push(LightSample {
                        light: li,
                        pos,
                        weight: area / per_area as f64,
                    });
                }
            }
        }
    }
    out
}

/// Irradiance at `x` (normal `n`) due to one light sample, ignoring occlusion.
fn sample_irradiance(light: &LightSource, s: &LightSample, x: Vec3, n: Vec3) -> f64 {
    let d = sub(s.pos, x);
    let dist2 = dot(d, d);
    let dist = dist2.sqrt();
    if dist == 0.0 {
        return 0.0;
    }
    let cos_r = dot(n, d) / dist;
    if cos_r <= 0.0 {
        return 0.0;
    }
    let r2 = dist2.max(LIGHT_R2_MIN);
    let axis = unit(light.orientation);
    let cos_e = -dot(axis, d) / dist;
    match light.kind {
        LightKind::Point => light.power / (4.0 * PI) * cos_r / r2,
        LightKind::Spot => {
            if cos_e < light.cone_angle.cos() || cos_e <= 0.0 {
                0.0
            } else {
                light.power / (4.0 * PI) * cos_e.powi(SPOT_EXPONENT) * cos_r / r2
            }
        }
        LightKind::Area => {
            if cos_e <= 0.0 {
                return 0.0;
            }
            let radiance = light.power / (PI * light.extent[0] * light.extent[1]);
            radiance * s.weight * cos_e * cos_r / r2
        }
    }
}

/// Does the segment `a -> b` pass through the vertical cylinder?
fn segment_hits_cylinder(a: Vec3, b: Vec3, center: Point2, radius: f64, height: f64) -> bool {
    if a[2].min(b[2]) > height {
        return false;
    }
    let (ox, oy) = (a[0] - center.x, a[1] - center.y);
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let qa = dx * dx + dy * dy;
    let qb = 2.0 * (ox * dx + oy * dy);
    let qc = ox * ox + oy * oy - radius * radius;
    let (t0, t1) = if qa < 1e-18 {
        if qc > 0.0 {
            return false;
        }
        (0.0, 1.0)
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc <= 0.0 {
            return false;
        }
        let sq = disc.sqrt();
        ((-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa))
    };
    let lo = t0.max(0.0);
    let hi = t1.min(1.0);
    if lo > hi {
        return false;
    }
    let z_lo = a[2] + lo * (b[2] - a[2]);
    let z_hi = a[2] + hi * (b[2] - a[2]);
    z_lo.min(z_hi) <= height && z_lo.max(z_hi) >= 0.0
}

fn wall_texture(seed_value: u64) -> Vec<[f64; 3]> {
    let mut rng = seed::rng(seed_value);
    (0..TEXTURE_WAVES)
        .map(|_| {
            [
                rng.random_range(2.0..12.0) * if rng.random::<bool>() { 1.0 } else { -1.0 },
                rng.random_range(2.0..12.0),
                rng.random_range(0.0..TAU),
            ]
        })
        .collect()
}

/// Precomputed wall geometry and unshadowed direct illumination for one scene.
///
/// Rendering a frame only recomputes what depends on the walker position:
/// shadowing of the direct term and the bounce off the walker.
#[derive(Debug, Clone)]
pub struct Renderer {
    scene: SceneConfig,
    samples: Vec<LightSample>,
    /// Wall point per pixel, row-major.
    wall_points: Vec<Vec3>,
    /// Textured diffuse reflectance per pixel.
    reflectance: Vec<f64>,
    /// Unshadowed irradiance per (pixel, light sample).
    direct: Vec<f64>,
    /// Walker surface samples relative to the walker axis: (dx, dy, z, nx, ny).
    surface: Vec<[f64; 5]>,
    /// Ambient irradiance per channel.
    ambient: Vec<f64>,
}

impl Renderer {
    pub fn new(scene: &SceneConfig) -> Result<Self> {
        scene.validate()?;
        let cam = &scene.camera;
        let samples = light_samples(&scene.lights, scene.render.light_samples, scene.render.sample_seed);
        let waves = wall_texture(scene.wall.texture_seed);
        let amp = 0.1 * scene.wall.roughness;
        let mut wall_points = Vec::with_capacity(cam.rows * cam.cols);
        let mut reflectance = Vec::with_capacity(cam.rows * cam.cols);
        for r in 0..cam.rows {
            for c in 0..cam.cols {
                let (x, z) = cam.pixel_center(r, c);
                wall_points.push([x, 0.0, z]);
                let t: f64 = waves.iter().map(|w| (w[0] * x + w[1] * z + w[2]).sin()).sum::<f64>() / TEXTURE_WAVES as f64;
                reflectance.push(scene.wall.albedo * (1.0 + amp * t));
            }
        }
        let normal = [0.0, 1.0, 0.0];
        let mut direct = Vec::with_capacity(wall_points.len() * samples.len());
        for &q in &wall_points {
            for s in &samples {
                direct.push(sample_irradiance(&scene.lights[s.light], s, q, normal));
            }
        }
        let ns = samples.len();
        let ambient = (0..cam.channels)
            .map(|c| {
                let sum: f64 = (0..wall_points.len() * ns)
                    .map(|i| direct[i] * scene.lights[samples[i % ns].light].tint[c.min(2)])
                    .sum();
                scene.render.ambient * sum / wall_points.len() as f64
            })
            .collect();
        let m = scene.render.surface_samples;
        let n_az = ((m as f64).sqrt().round() as usize).max(1);
        let n_h = m.div_ceil(n_az);
        let ch = &scene.character;
        let surface = (0..m)
            .map(|i| {
                let phi = TAU * ((i % n_az) as f64 + 0.5) / n_az as f64;
                let z = ch.height * ((i / n_az) as f64 + 0.5) / n_h as f64;
                let (s, c) = phi.sin_cos();
                [ch.radius * c, ch.radius * s, z, c, s]
            })
            .collect();
        Ok(Self {
            scene: scene.clone(),
            samples,
            wall_points,
            reflectance,
            direct,
            surface,
            ambient,
        })
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn frame_len(&self) -> usize {
        self.scene.camera.frame_len()
    }

    /// Render the wall with the walker standing at `position` (C x H x W, values in [0, 1]).
    pub fn render(&self, position: Point2) -> Result<Vec<f32>> {
        let mut out = vec![0.0f32; self.frame_len()];
        self.render_into(position, &mut out)?;
        Ok(out)
    }

    pub fn render_into(&self, position: Point2, out: &mut [f32]) -> Result<()> {
        if !self.scene.room.contains(position) {
            return Err(Error::OutsideRoom {
                x: position.x,
                y: position.y,
            });
        }
        let sc = &self.scene;
        let channels = sc.camera.channels;
        let npix = self.wall_points.len();
        let nl = sc.lights.len();
        let ch = &sc.character;
        let tint = |l: usize, c: usize| sc.lights[l].tint[c.min(2)];

        // Outgoing radiance of each walker surface sample, per channel.
        let bounce_on = ch.albedo > 0.0;
        let mut surf_radiance = vec![0.0; self.surface.len() * channels];
        if bounce_on {
            for (m, s) in self.surface.iter().enumerate() {
                let x = [position.x + s[0], position.y + s[1], s[2]];
                let n = [s[3], s[4], 0.0];
                let mut per_light = vec![0.0; nl];
                for ls in &self.samples {
                    per_light[ls.light] += sample_irradiance(&sc.lights[ls.light], ls, x, n);
                }
                for c in 0..channels {
                    let e: f64 = (0..nl).map(|l| per_light[l] * tint(l, c)).sum();
                    surf_radiance[m * channels + c] = ch.albedo / PI * e;
                }
            }
        }
        let d_area = TAU * ch.radius * ch.height / self.surface.len() as f64;
        let exposure = sc.render.exposure;
        let ns = self.samples.len();
        let mut e_light = vec![0.0; nl];
        let mut e_chan = vec![0.0; channels];
        for p in 0..npix {
            let q = self.wall_points[p];
            e_light.iter_mut().for_each(|v| *v = 0.0);
            let shadows = sc.render.occlusion && q[2] <= ch.height;
            for (k, ls) in self.samples.iter().enumerate() {
                let e = self.direct[p * ns + k];
                if e == 0.0 {
                    continue;
                }
                if shadows && segment_hits_cylinder(q, ls.pos, position, ch.radius, ch.height) {
                    continue;
                }
                e_light[ls.light] += e;
            }
            for (c, ec) in e_chan.iter_mut().enumerate() {
                *ec = self.ambient[c] + (0..nl).map(|l| e_light[l] * tint(l, c)).sum::<f64>();
            }
            if bounce_on {
                for (m, s) in self.surface.iter().enumerate() {
                    let sx = position.x + s[0];
                    let sy = position.y + s[1];
                    let v = [q[0] - sx, q[1] - sy, q[2] - s[2]];
                    let d2 = dot(v, v);
                    let d = d2.sqrt();
                    if d == 0.0 {
                        continue;
                    }
                    let cos_m = (s[3] * v[0] + s[4] * v[1]) / d;
                    let cos_w = sy / d;
                    if cos_m <= 0.0 || cos_w <= 0.0 {
                        continue;
                    }
                    let g = cos_m * cos_w * d_area / d2.max(BOUNCE_R2_MIN);
                    for (c, ec) in e_chan.iter_mut().enumerate() {
                        *ec += surf_radiance[m * channels + c] * g;
                    }
                }
            }
            let rho = self.reflectance[p] / PI;
            for (c, ec) in e_chan.iter().enumerate() {
                out[c * npix + p] = (exposure * rho * ec).clamp(0.0, 1.0) as f32;
            }
        }
        Ok(())
    }

    /// Mean of the direct and ambient terms at unit exposure, ignoring the walker.
    pub fn mean_unshadowed_intensity(&self) -> f64 {
        let sc = &self.scene;
        let ns = self.samples.len();
        let npix = self.wall_points.len();
        let mut total = 0.0;
        for p in 0..npix {
            let rho = self.reflectance[p] / PI;
            for c in 0..sc.camera.channels {
                let e: f64 = self
                    .samples
                    .iter()
                    .enumerate()
                    .map(|(k, ls)| self.direct[p * ns + k] * sc.lights[ls.light].tint[c.min(2)])
                    .sum();
                total += rho * (e + self.ambient[c]);
            }
        }
        total / (npix * sc.camera.channels) as f64
    }
}

/// Render a single frame of the wall for a walker at `position`.
pub fn render_frame(scene: &SceneConfig, position: Point2) -> Result<Vec<f32>> {
    Renderer::new(scene)?.render(position)
}

/// Render one frame per trajectory point. Frames are rendered in parallel.
pub fn render_clip(scene: &SceneConfig, traj: &Trajectory) -> Result<FrameStream> {
    let renderer = Renderer::new(scene)?;
    let len = renderer.frame_len();
    let mut data = vec![0.0f32; len * traj.len()];
    data.par_chunks_mut(len)
        .zip(traj.points.par_iter())
        .try_for_each(|(frame, &p)| renderer.render_into(p, frame))?;
    let [c, h, w] = scene.frame_shape();
    FrameStream::new(data, traj.len(), c, h, w, StreamKind::Raw, traj.fps)
}
