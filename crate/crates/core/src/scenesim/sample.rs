use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    CameraWindow, CharacterModel, LightKind, LightSource, NoiseModel, RenderSettings, Renderer, SceneConfig,
    WallMaterial, DEFAULT_CEILING_HEIGHT,
};
use crate::trajgen::{Point2, RoomSpec, TrajectoryParams};
use crate::{seed, Result};

/// Largest walker-induced per-pixel change allowed, as a fraction of mean intensity.
pub const FAINTNESS_LIMIT: f64 = 0.2;
/// Stricter bound enforced on the probe grid while sampling, leaving headroom
/// for positions between probes.
pub const SAMPLING_FAINTNESS_TARGET: f64 = 0.15;
const MAX_ATTEMPTS: usize = 64;
const TARGET_MEAN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageShape {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ImageShape {
    pub const fn new(channels: usize, rows: usize, cols: usize) -> Self {
        Self { channels, rows, cols }
    }
}

/// Maximum per-pixel spread of the rendered wall over `positions`, relative
/// to the mean intensity of those renders.
pub fn faintness(renderer: &Renderer, positions: &[Point2]) -> Result<f64> {
    let n = renderer.frame_len();
    let mut lo = vec![f32::INFINITY; n];
    let mut hi = vec![f32::NEG_INFINITY; n];
    let mut sum = 0.0f64;
    for &p in positions {
        let img = renderer.render(p)?;
        for (i, &v) in img.iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
            sum += v as f64;
        }
    }
    let mean = sum / (n * positions.len()) as f64;
    let spread = lo.iter().zip(&hi).map(|(a, b)| (b - a) as f64).fold(0.0, f64::max);
    Ok(if mean > 0.0 { spread / mean } else { f64::INFINITY })
}

/// Probe grid over the walkable part of the room.
fn probe_positions(room: RoomSpec) -> Vec<Point2> {
    let m = TrajectoryParams::default().wall_margin;
    let xs: Vec<f64> = (0..7).map(|i| m + (room.width - 2.0 * m) * i as f64 / 6.0).collect();
    let ys = [m, m + 0.3, 1.0, 0.5 * room.depth, room.depth - m];
    xs.iter().flat_map(|&x| ys.iter().map(move |&y| Point2::new(x, y))).collect()
}

fn draw_light(rng: &mut ChaCha8Rng, room: RoomSpec, ceiling: f64) -> LightSource {
    let kind = match rng.random_range(0..3) {
        0 => LightKind::Point,
        1 => LightKind::Spot,
        _ => LightKind::Area,
    };
    let position = [
        rng.random_range(0.3..room.width - 0.3),
        rng.random_range(0.3..room.depth - 0.3),
        ceiling,
    ];
    let tint = [
        1.0 + rng.random_range(-0.1..0.1),
        1.0 + rng.random_range(-0.1..0.1),
        1.0 + rng.random_range(-0.1..0.1),
    ];
    let power = rng.random_range(40.0..120.0);
    let mut light = LightSource {
        kind,
        position,
        orientation: [0.0, 0.0, -1.0],
        power,
        extent: [0.0, 0.0],
        rotation: 0.0,
        cone_angle: 0.0,
        tint,
    };
    match kind {
        LightKind::Point => {}
        LightKind::Spot => {
            let target = [rng.random_range(0.0..room.width), rng.random_range(0.0..room.depth), 0.0];
            let d = [target[0] - position[0], target[1] - position[1], target[2] - position[2]];
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            light.orientation = [d[0] / n, d[1] / n, d[2] / n];
            light.cone_angle = rng.random_range(30.0f64..60.0).to_radians();
        }
        LightKind::Area => {
            light.extent = [rng.random_range(0.3..1.2), rng.random_range(0.3..1.2)];
            light.rotation = rng.random_range(0.0..PI);
        }
    }
    light
}

/// With `low_window` the window reaches below head height, where the walker
/// casts soft shadows; otherwise it starts above the head and only the bounce
/// off the walker reaches it.
fn draw_scene(rng: &mut ChaCha8Rng, room: RoomSpec, shape: ImageShape, low_window: bool) -> SceneConfig {
    let ceiling = DEFAULT_CEILING_HEIGHT;
    let lights = (0..3).map(|_| draw_light(rng, room, ceiling)).collect();
    let wall = WallMaterial {
        albedo: rng.random_range(0.5..0.9),
        roughness: rng.random_range(0.0..1.0),
        texture_seed: rng.random::<u64>() >> 1,
    };
    let character = CharacterModel {
        height: rng.random_range(1.55..1.9),
        radius: rng.random_range(0.18..0.25),
        albedo: rng.random_range(0.5..0.9),
    };
    let side = rng.random_range(1.2..1.8f64).min(room.width - 0.2);
    let z0 = if low_window { rng.random_range(0.2..1.0) } else { character.height + rng.random_range(0.0..0.1) };
    let camera = CameraWindow {
        x0: rng.random_range(0.1..room.width - side - 0.1 + 1e-9),
        z0,
        width: side,
        height: side.min(ceiling - 0.05 - z0),
        rows: shape.rows,
        cols: shape.cols,
        channels: shape.channels,
    };
    let noise = NoiseModel {
        gaussian_std: rng.random_range(0.0002..0.001),
        target_mean: rng.random_range(0.35..0.55),
        target_std: rng.random_range(0.06..0.12),
    };
    let render = RenderSettings {
        sample_seed: rng.random::<u64>() >> 1,
        // Shadows below head height stay faint only when most of the light
        // reaching the wall comes indirectly from the rest of the room.
        ambient: if low_window { rng.random_range(4.0..10.0) } else { rng.random_range(0.5..1.5) },
        ..Default::default()
    };
    SceneConfig {
        room,
        ceiling_height: ceiling,
        lights,
        wall,
        character,
        camera,
        noise,
        render,
    }
}

/// Set the exposure so the unshadowed wall averages 0.5 and report the
/// probe-grid faintness. `None` if the window receives no light.
fn calibrate(scene: &mut SceneConfig) -> Option<f64> {
    scene.render.exposure = 1.0;
    let mean = Renderer::new(scene).ok()?.mean_unshadowed_intensity();
    if !(mean > 1e-12) {
        return None;
    }
    scene.render.exposure = TARGET_MEAN / mean;
    let renderer = Renderer::new(scene).ok()?;
    faintness(&renderer, &probe_positions(scene.room)).ok()
}

/// Draw a random scene: room sides from U(3, 7), three ceiling lights of random
/// kind, wall material, walker, camera window and noise statistics.
///
/// Draws whose walker-induced change on the probe grid exceeds
/// [`SAMPLING_FAINTNESS_TARGET`] are rejected. Windows reaching below head
/// height are tried first; if none is faint enough the window moves above the
/// head. The room is drawn once, so rejection does not bias room sizes.
pub fn sample_scene(seed_value: u64, shape: ImageShape) -> SceneConfig {
    let mut rng = seed::child_rng(seed_value, "scene");
    let room = RoomSpec::sample(&mut rng);
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS {
        let mut scene = draw_scene(&mut rng, room, shape, attempt < MAX_ATTEMPTS / 2);
        match calibrate(&mut scene) {
            Some(f) if f <= SAMPLING_FAINTNESS_TARGET => return scene,
            Some(_) => last = Some(scene),
            None => {}
        }
    }
    // Fallback: dim the walker until the bounce is faint enough.
    let mut scene = last.unwrap_or_else(|| {
        let mut s = draw_scene(&mut rng, room, shape, false);
        for l in &mut s.lights {
            l.kind = LightKind::Point;
        }
        s
    });
    for _ in 0..32 {
        match calibrate(&mut scene) {
            Some(f) if f <= SAMPLING_FAINTNESS_TARGET => break,
            _ => scene.character.albedo *= 0.5,
        }
    }
    scene
}
