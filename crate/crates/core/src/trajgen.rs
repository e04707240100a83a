//! Smooth random walking trajectories, gap repair and room normalisation.
//!
//! The walker keeps a unit heading that is nudged every frame by an isotropic
//! Gaussian perturbation scaled by the turning rate, and advances by a step
//! length drawn uniformly from `[step_min, step_max]`. Near a wall the heading
//! is blended toward the room centre so the walk stays inside the room without
//! hard reflections.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

/// A planar point in meters (or in normalised room units).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Point2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self.scale(1.0 / n))
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(a: [f64; 2]) -> Self {
        Point2::new(a[0], a[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// Floor plan of the hidden room. The relay wall is the side `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub width: f64,
    pub depth: f64,
}

impl RoomSpec {
    pub const SAMPLE_MIN: f64 = 3.0;
    pub const SAMPLE_MAX: f64 = 7.0;

    pub fn new(width: f64, depth: f64) -> Result<Self> {
        let room = Self { width, depth };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.depth > 0.0) || !self.width.is_finite() || !self.depth.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "room dimensions must be positive, got {} x {}",
                self.width, self.depth
            )));
        }
        Ok(())
    }

    /// Room with both sides drawn from U(3, 7) meters.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            width: rng.random_range(Self::SAMPLE_MIN..=Self::SAMPLE_MAX),
            depth: rng.random_range(Self::SAMPLE_MIN..=Self::SAMPLE_MAX),
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.depth
    }

    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * self.width, 0.5 * self.depth)
    }

    /// Signed distance to the nearest wall (negative outside).
    pub fn wall_distance(&self, p: Point2) -> f64 {
        p.x.min(self.width - p.x).min(p.y).min(self.depth - p.y)
    }

    pub fn normalize(&self, p: Point2) -> Point2 {
        Point2::new(p.x / self.width, p.y / self.depth)
    }

    pub fn denormalize(&self, p: Point2) -> Point2 {
        Point2::new(p.x * self.width, p.y * self.depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    /// Scale of the per-frame heading perturbation.
    pub turning_rate: f64,
    pub step_min: f64,
    pub step_max: f64,
    /// Distance from the walls at which the heading starts bending toward the centre.
    pub wall_margin: f64,
    pub frame_count: usize,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            turning_rate: 0.15,
            step_min: 0.03,
            step_max: 0.04,
            wall_margin: 0.2,
            frame_count: 320,
        }
    }
}

impl TrajectoryParams {
    pub fn with_frames(frame_count: usize) -> Self {
        Self {
            frame_count,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.turning_rate >= 0.0
            && self.step_min > 0.0
            && self.step_min <= self.step_max
            && self.wall_margin >= 0.0
            && self.step_max.is_finite()
            && self.turning_rate.is_finite();
        if !ok {
            return Err(Error::InvalidConfig(format!("invalid trajectory parameters {self:?}")));
        }
        if self.frame_count < 2 {
            return Err(Error::TooShort {
                what: "trajectory",
                got: self.frame_count,
                need: 2,
            });
        }
        Ok(())
    }
}

/// Time-ordered positions in meters, sampled at a fixed frame rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<Point2>,
    pub fps: f64,
    pub room: RoomSpec,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-frame displacement vectors `p[t+1] - p[t]`.
    pub fn displacements(&self) -> Vec<Point2> {
        self.points.windows(2).map(|w| w[1].sub(w[0])).collect()
    }

    pub fn normalized(&self) -> Vec<Point2> {
        normalize_trajectory(self)
    }

    pub fn slice(&self, start: usize, len: usize) -> Trajectory {
        Trajectory {
            points: self.points[start..start + len].to_vec(),
            fps: self.fps,
            room: self.room,
        }
    }

    /// Plain-text export with header `frame_index,x,y`.
    pub fn to_csv(&self) -> String {
        points_to_csv(&self.points)
    }
}

pub fn points_to_csv(points: &[Point2]) -> String {
    let mut s = String::from("frame_index,x,y\n");
    for (i, p) in points.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", p.x, p.y);
    }
    s
}

/// Parse the `frame_index,x,y` format written by [`points_to_csv`].
pub fn points_from_csv(text: &str) -> Result<Vec<Point2>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("frame_index")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Serde(format!("line {}: {e}", lineno + 1)))
        };
        if fields.len() != 3 {
            return Err(Error::Serde(format!("line {}: expected 3 fields", lineno + 1)));
        }
        out.push(Point2::new(parse(fields[1])?, parse(fields[2])?));
    }
    Ok(out)
}

/// Generate a walking trajectory inside `room`.
///
/// The start point is uniform in the room shrunk by `wall_margin` and the
/// initial heading is uniform on the circle.
pub fn generate_trajectory(room: RoomSpec, params: &TrajectoryParams, seed: u64) -> Result<Trajectory> {
    room.validate()?;
    params.validate()?;
    let m = params.wall_margin;
    if room.width <= 2.0 * m || room.depth <= 2.0 * m {
        return Err(Error::InvalidConfig(format!(
            "room {} x {} cannot hold a wall margin of {m}",
            room.width, room.depth
        )));
    }
    let mut rng = seed::rng(seed);
    let start = Point2::new(
        rng.random_range(m..=room.width - m),
        rng.random_range(m..=room.depth - m),
    );
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let heading = Point2::new(angle.cos(), angle.sin());
    let points = walk(room, params, start, heading, &mut rng);
    Ok(Trajectory {
        points,
        fps: 30.0,
        room,
    })
}

/// Walk from a given start point and heading. `heading` need not be unit length.
pub fn walk_from<R: Rng + ?Sized>(
    room: RoomSpec,
    params: &TrajectoryParams,
    start: Point2,
    heading: Point2,
    rng: &mut R,
) -> Result<Vec<Point2>> {
    room.validate()?;
    params.validate()?;
    if !room.contains(start) {
        return Err(Error::OutsideRoom { x: start.x, y: start.y });
    }
    let heading = heading
        .normalized()
        .ok_or_else(|| Error::InvalidConfig("initial heading must be nonzero".into()))?;
    Ok(walk(room, params, start, heading, rng))
}

fn walk<R: Rng + ?Sized>(
    room: RoomSpec,
    params: &TrajectoryParams,
    start: Point2,
    mut heading: Point2,
    rng: &mut R,
) -> Vec<Point2> {
    let mut points = Vec::with_capacity(params.frame_count);
    let mut p = start;
    points.push(p);
    let center = room.center();
    while points.len() < params.frame_count {
        let step = if params.step_min == params.step_max {
            params.step_min
        } else {
            rng.random_range(params.step_min..=params.step_max)
        };
        let inward = center.sub(p).normalized().unwrap_or(heading);

        let mut dir = heading;
        let candidate = p.add(dir.scale(step));
        let clearance = room.wall_distance(candidate);
        if params.wall_margin > 0.0 && clearance < params.wall_margin {
            let w = (1.0 - clearance / params.wall_margin).clamp(0.0, 1.0);
            dir = dir.scale(1.0 - w).add(inward.scale(w)).normalized().unwrap_or(inward);
        }
        let mut next = p.add(dir.scale(step));
        if !room.contains(next) {
            dir = inward;
            next = p.add(dir.scale(step));
        }
        p = next;
        points.push(p);

        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        let perturbed = dir.add(Point2::new(dx, dy).scale(params.turning_rate));
        heading = perturbed.normalized().unwrap_or(dir);
    }
    points
}

/// Fill missing points by linear interpolation between the recorded points
/// bracketing each gap.
///
/// For a gap between recorded `p0` and `pN` (so `N - 1` missing points), the
/// point at offset `i` becomes `p0 + (i / N) (pN - p0)`. A gap with
/// `N > max_gap` cannot be completed and the clip has to be discarded.
pub fn interpolate_gaps(points: &[Option<Point2>], max_gap: usize) -> Result<Vec<Point2>> {
    if points.is_empty() {
        return Err(Error::TooShort {
            what: "gap interpolation",
            got: 0,
            need: 1,
        });
    }
    if points[0].is_none() || points[points.len() - 1].is_none() {
        return Err(Error::Contract(
            "first and last points must be present for gap interpolation".into(),
        ));
    }
    let mut out = Vec::with_capacity(points.len());
    let mut i = 0;
    while i < points.len() {
        match points[i] {
            Some(p) => {
                out.push(p);
                i += 1;
            }
            None => {
                let before = i - 1;
                let mut after = i;
                while points[after].is_none() {
                    after += 1;
                }
                let span = after - before;
                if span > max_gap {
                    return Err(Error::UncompletableGap {
                        start: i,
                        missing: span - 1,
                        span,
                        max_gap,
                    });
                }
                let p0 = points[before].unwrap();
                let pn = points[after].unwrap();
                let delta = pn.sub(p0);
                for k in 1..span {
                    out.push(p0.add(delta.scale(k as f64 / span as f64)));
                }
                i = after;
            }
        }
    }
    Ok(out)
}

/// Divide each coordinate by the corresponding room dimension.
pub fn normalize_trajectory(traj: &Trajectory) -> Vec<Point2> {
    traj.points.iter().map(|&p| traj.room.normalize(p)).collect()
}

pub fn denormalize_points(points: &[Point2], room: RoomSpec) -> Vec<Point2> {
    points.iter().map(|&p| room.denormalize(p)).collect()
}
