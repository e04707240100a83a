//! Clip storage, manifests, dataset building and sub-clip sampling.
//!
//! Each clip is one file `clips/<id>.nltclip`:
//!
//! ```text
//! offset  size   content
//! 0       8      magic "NLTCLIP\0"
//! 8       4      format version, u32 LE
//! 12      8      header length L, u64 LE
//! 20      L      TOML header (id, shape, fps, scene)
//! 20+L    4*N    frames, f32 LE, T x C x H x W
//! ...     16*T   trajectory in meters, f64 LE pairs (x, y)
//! ```
//!
//! The manifest (`manifest.json`) lists clip ids, relative paths, split tags,
//! a SHA-256 of every clip file and a hash of the build configuration.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scenesim::{add_noise, quantize_8bit, render_clip, sample_scene, FrameStream, ImageShape, SceneConfig, StreamKind};
use crate::trajgen::{generate_trajectory, Point2, Trajectory, TrajectoryParams};
use crate::{seed, Error, Result};

const MAGIC: &[u8; 8] = b"NLTCLIP\0";
const VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_TEST_FRACTION: f64 = 0.1;

/// Named dataset scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Tiny,
    Small,
    PaperSynthetic,
    PaperReal,
}

impl Profile {
    pub const ALL: [Profile; 4] = [Profile::Tiny, Profile::Small, Profile::PaperSynthetic, Profile::PaperReal];

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Tiny => "tiny",
            Profile::Small => "small",
            Profile::PaperSynthetic => "paper-synthetic",
            Profile::PaperReal => "paper-real",
        }
    }

    pub fn shape(self) -> ImageShape {
        match self {
            Profile::Tiny => ImageShape::new(1, 16, 16),
            Profile::Small => ImageShape::new(3, 32, 32),
            Profile::PaperSynthetic | Profile::PaperReal => ImageShape::new(3, 128, 128),
        }
    }

    pub fn frames(self) -> usize {
        match self {
            Profile::Tiny => 64,
            Profile::Small => 96,
            Profile::PaperSynthetic => 320,
            Profile::PaperReal => 250,
        }
    }

    pub fn fps(self) -> f64 {
        match self {
            Profile::PaperReal => 25.0,
            _ => 30.0,
        }
    }

    /// Store frames at camera bit depth.
    pub fn quantize(self) -> bool {
        self == Profile::PaperReal
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Profile::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown profile '{s}' (expected tiny, small, paper-synthetic or paper-real)")))
    }
}

/// One rendered video with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub id: String,
    pub raw: FrameStream,
    /// Walker positions in meters, one per frame.
    pub trajectory: Trajectory,
    pub scene: SceneConfig,
}

impl Clip {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::InvalidConfig(format!("clip id '{}' must be non-empty [A-Za-z0-9_-]", self.id)));
        }
        if self.raw.kind != StreamKind::Raw {
            return Err(Error::Contract("clips store raw streams".into()));
        }
        if self.raw.frames != self.trajectory.len() {
            return Err(Error::LengthMismatch {
                what: "clip frames vs trajectory points",
                left: self.raw.frames,
                right: self.trajectory.len(),
            });
        }
        let shape = [self.raw.channels, self.raw.height, self.raw.width];
        if shape != self.scene.frame_shape() {
            return Err(Error::InvalidConfig(format!(
                "clip {}: frames are {shape:?} but the scene camera renders {:?}",
                self.id,
                self.scene.frame_shape()
            )));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.raw.frames
    }

    /// Trajectory in room-normalised coordinates.
    pub fn normalized(&self) -> Vec<Point2> {
        self.trajectory.normalized()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ClipHeader {
    id: String,
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    fps: f64,
    scene: SceneConfig,
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptContainer {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn shape_mismatch(path: &Path, reason: impl Into<String>) -> Error {
    Error::ShapeMismatch {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn encode_clip(clip: &Clip) -> Result<Vec<u8>> {
    clip.validate()?;
    let header = ClipHeader {
        id: clip.id.clone(),
        frames: clip.raw.frames,
        channels: clip.raw.channels,
        height: clip.raw.height,
        width: clip.raw.width,
        fps: clip.raw.fps,
        scene: clip.scene.clone(),
    };
    let text = toml::to_string(&header)?;
    let mut buf = Vec::with_capacity(20 + text.len() + 4 * clip.raw.data.len() + 16 * clip.trajectory.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(text.len() as u64).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    for v in &clip.raw.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for p in &clip.trajectory.points {
        buf.extend_from_slice(&p.x.to_le_bytes());
        buf.extend_from_slice(&p.y.to_le_bytes());
    }
    Ok(buf)
}

/// Write one clip container to `path`.
pub fn write_clip(path: &Path, clip: &Clip) -> Result<()> {
    write_atomic(path, &encode_clip(clip)?)
}

/// Read one clip container.
pub fn read_clip(path: &Path) -> Result<Clip> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt(path, "not a clip container (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(path, format!("unsupported clip version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let Some(end) = usize::try_from(len).ok().and_then(|l| l.checked_add(20)).filter(|&e| e <= bytes.len()) else {
        return Err(corrupt(path, "truncated header"));
    };
    let text = std::str::from_utf8(&bytes[20..end]).map_err(|_| corrupt(path, "header is not UTF-8"))?;
    let h: ClipHeader = toml::from_str(text).map_err(|e| corrupt(path, format!("header: {e}")))?;
    let n_values = h.frames * h.channels * h.height * h.width;
    let payload = &bytes[end..];
    let want = 4 * n_values + 16 * h.frames;
    if payload.len() != want {
        return Err(corrupt(path, format!("payload holds {} bytes, header implies {want}", payload.len())));
    }
    if [h.channels, h.height, h.width] != h.scene.frame_shape() {
        return Err(shape_mismatch(
            path,
            format!("frames are {:?} but the stored scene renders {:?}", [h.channels, h.height, h.width], h.scene.frame_shape()),
        ));
    }
    let (fb, tb) = payload.split_at(4 * n_values);
    let data: Vec<f32> = fb.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let coords: Vec<f64> = tb.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let points = coords.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect();
    let raw = FrameStream::new(data, h.frames, h.channels, h.height, h.width, StreamKind::Raw, h.fps)?;
    Ok(Clip {
        id: h.id,
        raw,
        trajectory: Trajectory {
            points,
            fps: h.fps,
            room: h.scene.room,
        },
        scene: h.scene,
    })
}

fn clip_rel_path(id: &str) -> String {
    format!("clips/{id}.nltclip")
}

/// Save under `root/clips/` and return the id.
pub fn save_clip(clip: &Clip, root: &Path) -> Result<String> {
    write_clip(&root.join(clip_rel_path(&clip.id)), clip)?;
    Ok(clip.id.clone())
}

pub fn load_clip(root: &Path, id: &str) -> Result<Clip> {
    read_clip(&root.join(clip_rel_path(id)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub split: Split,
    /// SHA-256 of the clip file.
    pub sha256: String,
}

/// Parameters of [`build_dataset`]; hashed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub n_clips: usize,
    pub profile: Profile,
    pub seed: u64,
    pub test_fraction: f64,
}

impl BuildConfig {
    pub fn new(n_clips: usize, profile: Profile, seed: u64) -> Self {
        Self {
            n_clips,
            profile,
            seed,
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clips == 0 {
            return Err(Error::InvalidConfig("n_clips must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::InvalidConfig(format!("test_fraction must be in [0, 1), got {}", self.test_fraction)));
        }
        Ok(())
    }

    /// Hex SHA-256 of the configuration together with the container version.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("build config serializes"));
        h.update(VERSION.to_le_bytes());
        hex::encode(h.finalize())
    }

    /// Number of clips tagged `test`.
    pub fn n_test(&self) -> usize {
        if self.n_clips < 2 || self.test_fraction == 0.0 {
            return 0;
        }
        ((self.n_clips as f64 * self.test_fraction).round() as usize).clamp(1, self.n_clips - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub build: BuildConfig,
    pub config_hash: String,
    /// `[C, H, W]`
    pub frame_shape: [usize; 3],
    pub frames_per_clip: usize,
    pub clips: Vec<ManifestEntry>,
    /// Directory holding the manifest; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn path(root: &Path) -> PathBuf {
        root.join(MANIFEST_FILE)
    }

    pub fn save(&self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&Self::path(&self.root), text.as_bytes())
    }

    /// Load `manifest.json` from a dataset directory, or a manifest file path.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { Self::path(path) } else { path.to_path_buf() };
        if !file.exists() {
            return Err(Error::MissingFile(file));
        }
        let text = std::fs::read_to_string(&file)?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| corrupt(&file, format!("manifest: {e}")))?;
        m.root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        m.check_ids()?;
        Ok(m)
    }

    fn check_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.clips {
            if !seen.insert(&e.id) {
                return Err(Error::InvalidConfig(format!("manifest lists clip id '{}' twice", e.id)));
            }
        }
        Ok(())
    }

    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.clips.iter().filter(|e| e.split == split).map(|e| e.id.as_str()).collect()
    }

    pub fn entry(&self, id: &str) -> Result<&ManifestEntry> {
        self.clips
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::InvalidConfig(format!("clip '{id}' is not in the manifest")))
    }

    /// Load a clip and check it against the manifest's shape.
    pub fn load_clip(&self, id: &str) -> Result<Clip> {
        let e = self.entry(id)?;
        let path = self.root.join(&e.path);
        let clip = read_clip(&path).map_err(|err| Error::Clip {
            id: id.to_string(),
            source: Box::new(err),
        })?;
        let shape = [clip.raw.channels, clip.raw.height, clip.raw.width];
        if shape != self.frame_shape || clip.frames() != self.frames_per_clip {
            return Err(shape_mismatch(
                &path,
                format!(
                    "clip is {} x {shape:?}, manifest declares {} x {:?}",
                    clip.frames(),
                    self.frames_per_clip,
                    self.frame_shape
                ),
            ));
        }
        Ok(clip)
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Clip>> {
        self.ids(split).into_iter().map(|id| self.load_clip(id)).collect()
    }

    /// Every listed file exists, loads, and hashes to the recorded digest.
    pub fn verify(&self) -> Result<()> {
        self.check_ids()?;
        for e in &self.clips {
            let path = self.root.join(&e.path);
            self.load_clip(&e.id)?;
            let digest = hex::encode(Sha256::digest(std::fs::read(&path)?));
            if digest != e.sha256 {
                return Err(corrupt(&path, "content hash differs from the manifest"));
            }
        }
        Ok(())
    }

    /// Total size of the listed clip files in bytes.
    pub fn disk_size(&self) -> Result<u64> {
        let mut total = 0;
        for e in &self.clips {
            total += std::fs::metadata(self.root.join(&e.path))?.len();
        }
        Ok(total)
    }
}

/// Sample, render and noise one clip. Deterministic in `(profile, clip_seed)`.
pub fn generate_clip(id: &str, profile: Profile, clip_seed: u64) -> Result<Clip> {
    let mut scene = sample_scene(seed::derive(clip_seed, "scene"), profile.shape());
    scene.render.quantize = profile.quantize();
    let mut trajectory = generate_trajectory(scene.room, &TrajectoryParams::with_frames(profile.frames()), seed::derive(clip_seed, "trajectory"))?;
    trajectory.fps = profile.fps();
    let clean = render_clip(&scene, &trajectory)?;
    let mut raw = add_noise(&clean, &scene.noise, seed::derive(clip_seed, "noise"))?;
    if scene.render.quantize {
        raw = quantize_8bit(&raw);
    }
    Ok(Clip {
        id: id.to_string(),
        raw,
        trajectory,
        scene,
    })
}

/// Generate `n_clips` clips under `root`, split them and write the manifest.
pub fn build_dataset(cfg: &BuildConfig, root: &Path) -> Result<DatasetManifest> {
    build_dataset_with(cfg, root, |_, _| {})
}

/// As [`build_dataset`], calling `progress(done, total)` after each clip.
pub fn build_dataset_with(cfg: &BuildConfig, root: &Path, mut progress: impl FnMut(usize, usize)) -> Result<DatasetManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(root.join("clips"))?;
    let mut order: Vec<usize> = (0..cfg.n_clips).collect();
    order.shuffle(&mut seed::child_rng(cfg.seed, "split"));
    let test: HashSet<usize> = order[..cfg.n_test()].iter().copied().collect();

    let mut clips = Vec::with_capacity(cfg.n_clips);
    for i in 0..cfg.n_clips {
        let id = format!("clip{i:05}");
        let wrap = |e: Error| Error::Clip {
            id: id.clone(),
            source: Box::new(e),
        };
        let clip = generate_clip(&id, cfg.profile, seed::derive(cfg.seed, &id)).map_err(wrap)?;
        let bytes = encode_clip(&clip).map_err(wrap)?;
        let rel = clip_rel_path(&id);
        write_atomic(&root.join(&rel), &bytes).map_err(wrap)?;
        clips.push(ManifestEntry {
            id,
            path: rel,
            split: if test.contains(&i) { Split::Test } else { Split::Train },
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        progress(i + 1, cfg.n_clips);
    }
    let shape = cfg.profile.shape();
    let manifest = DatasetManifest {
        version: VERSION,
        build: cfg.clone(),
        config_hash: cfg.hash(),
        frame_shape: [shape.channels, shape.rows, shape.cols],
        frames_per_clip: cfg.profile.frames(),
        clips,
        root: root.to_path_buf(),
    };
    manifest.save()?;
    Ok(manifest)
}

/// A contiguous window of a clip.
#[derive(Debug, Clone, Copy)]
pub struct ClipWindow<'a> {
    pub clip: &'a Clip,
    pub start: usize,
    pub len: usize,
}

impl<'a> ClipWindow<'a> {
    pub fn frames(&self) -> &'a [f32] {
        let n = self.clip.raw.frame_len();
        &self.clip.raw.data[self.start * n..(self.start + self.len) * n]
    }

    pub fn points(&self) -> &'a [Point2] {
        &self.clip.trajectory.points[self.start..self.start + self.len]
    }

    /// Room-normalised trajectory slice; point `t` belongs to frame `t`.
    pub fn normalized(&self) -> Vec<Point2> {
        let room = self.clip.trajectory.room;
        self.points().iter().map(|&p| room.normalize(p)).collect()
    }

    pub fn stream(&self) -> FrameStream {
        self.clip.raw.window(self.start, self.len)
    }
}

/// Window of `t_prime` frames with a start drawn uniformly from the valid range.
pub fn random_window<'a, R: Rng + ?Sized>(clip: &'a Clip, t_prime: usize, rng: &mut R) -> Result<ClipWindow<'a>> {
    let t = clip.frames();
    if t_prime < 2 || t_prime > t {
        return Err(Error::InvalidConfig(format!("sub-clip length {t_prime} must be in [2, {t}]")));
    }
    Ok(ClipWindow {
        clip,
        start: rng.random_range(0..=t - t_prime),
        len: t_prime,
    })
}

pub fn random_subclip(clip: &Clip, t_prime: usize, seed_value: u64) -> Result<ClipWindow<'_>> {
    random_window(clip, t_prime, &mut seed::child_rng(seed_value, "subclip"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenesim::{difference_stream, ImageShape};

    fn synthetic_clip(frames: usize) -> Clip {
        let scene = sample_scene(3, ImageShape::new(2, 4, 5));
        let data: Vec<f32> = (0..frames * 40).map(|i| (i as f32 * 0.618).fract()).collect();
        let points = (0..frames).map(|t| Point2::new(1.0 + 0.03 * t as f64, 1.5 + 1e-13 * t as f64)).collect();
        Clip {
            id: "c1".into(),
            raw: FrameStream::new(data, frames, 2, 4, 5, StreamKind::Raw, 30.0).unwrap(),
            trajectory: Trajectory {
                points,
                fps: 30.0,
                room: scene.room,
            },
            scene,
        }
    }

    #[test]
    fn profiles_parse() {
        for p in Profile::ALL {
            assert_eq!(p.as_str().parse::<Profile>().unwrap(), p);
        }
        assert!(matches!("huge".parse::<Profile>(), Err(Error::InvalidConfig(_))));
        assert_eq!(Profile::PaperSynthetic.frames(), 320);
        assert_eq!(Profile::PaperReal.frames(), 250);
    }

    #[test]
    fn container_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let clip = synthetic_clip(7);
        let id = save_clip(&clip, dir.path()).unwrap();
        let back = load_clip(dir.path(), &id).unwrap();
        assert_eq!(back, clip);
        let bits = |c: &Clip| c.raw.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&clip));
        assert_eq!(back.scene.to_toml().unwrap(), clip.scene.to_toml().unwrap());
    }

    #[test]
    fn distinct_load_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_clip(dir.path(), "nope"), Err(Error::MissingFile(_))));

        let clip = synthetic_clip(5);
        save_clip(&clip, dir.path()).unwrap();
        let path = dir.path().join(clip_rel_path("c1"));
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_clip(&path), Err(Error::CorruptContainer { .. })));
        std::fs::write(&path, b"PNG....").unwrap();
        assert!(matches!(read_clip(&path), Err(Error::CorruptContainer { .. })));

        // consistent payload, but the scene renders a different frame shape
        let mut bad = clip.clone();
        bad.scene.camera.rows = 5;
        bad.scene.camera.cols = 4;
        let header = ClipHeader {
            id: bad.id.clone(),
            frames: 5,
            channels: 2,
            height: 4,
            width: 5,
            fps: 30.0,
            scene: bad.scene.clone(),
        };
        let text = toml::to_string(&header).unwrap();
        let mut buf = MAGIC.to_vec();
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(text.len() as u64).to_le_bytes());
        buf.extend_from_slice(text.as_bytes());
        buf.extend_from_slice(&bytes[bytes.len() - 4 * 200 - 16 * 5..]);
        std::fs::write(&path, buf).unwrap();
        assert!(matches!(read_clip(&path), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn invalid_clips_are_not_saved() {
        let dir = tempfile::tempdir().unwrap();
        let mut clip = synthetic_clip(5);
        clip.trajectory.points.pop();
        assert!(matches!(save_clip(&clip, dir.path()), Err(Error::LengthMismatch { .. })));
        let mut clip = synthetic_clip(5);
        clip.id = "../x".into();
        assert!(save_clip(&clip, dir.path()).is_err());
    }

    #[test]
    fn subclip_identity_and_alignment() {
        let clip = synthetic_clip(12);
        let w = random_subclip(&clip, 12, 5).unwrap();
        assert_eq!((w.start, w.len), (0, 12));
        assert_eq!(w.frames(), &clip.raw.data[..]);
        for s in 0..20 {
            let w = random_subclip(&clip, 4, s).unwrap();
            assert_eq!(w.frames().len(), 4 * 40);
            for t in 0..4 {
                assert_eq!(&w.frames()[t * 40..(t + 1) * 40], clip.raw.frame(w.start + t));
                assert_eq!(w.points()[t], clip.trajectory.points[w.start + t]);
            }
            assert_eq!(random_subclip(&clip, 4, s).unwrap().start, w.start);
        }
        assert!(matches!(random_subclip(&clip, 13, 0), Err(Error::InvalidConfig(_))));
        assert!(random_subclip(&clip, 1, 0).is_err());
    }

    #[test]
    fn subclip_starts_are_uniform() {
        let mut clip = synthetic_clip(1);
        clip.raw = FrameStream::new(vec![0.0; 320], 320, 1, 1, 1, StreamKind::Raw, 30.0).unwrap();
        clip.trajectory.points = vec![Point2::new(1.0, 1.0); 320];
        let bins = 320 - 96 + 1;
        let mut counts = vec![0usize; bins];
        let draws = 10_000;
        for s in 0..draws {
            counts[random_subclip(&clip, 96, s).unwrap().start] += 1;
        }
        let expect = draws as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        // 224 degrees of freedom: the 0.999 quantile is about 296
        assert!(chi2 < 296.0, "chi-square {chi2}");
        assert!(counts[0] > 0 && counts[bins - 1] > 0);
    }

    #[test]
    fn build_is_deterministic_and_loadable() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = BuildConfig::new(4, Profile::Tiny, 11);
        let ma = build_dataset(&cfg, a.path()).unwrap();
        let mb = build_dataset(&cfg, b.path()).unwrap();
        assert_eq!(ma.clips, mb.clips);
        assert_eq!(ma.clips.len(), 4);
        assert_eq!(std::fs::read(DatasetManifest::path(a.path())).unwrap(), std::fs::read(DatasetManifest::path(b.path())).unwrap());

        let loaded = DatasetManifest::load(a.path()).unwrap();
        loaded.verify().unwrap();
        let train = loaded.ids(Split::Train);
        let test = loaded.ids(Split::Test);
        assert_eq!(train.len() + test.len(), 4);
        assert_eq!(test.len(), 1);
        assert!(train.iter().all(|id| !test.contains(id)));
        for e in &loaded.clips {
            let c = loaded.load_clip(&e.id).unwrap();
            assert_eq!(c.raw.shape(), [64, 1, 16, 16]);
            assert!(c.trajectory.points.iter().all(|&p| c.scene.room.contains(p)));
            assert!(c.raw.data.iter().all(|v| (0.0..=1.0).contains(v)));
            // the clip varies in time
            let d = difference_stream(&c.raw).unwrap();
            assert!(d.data.iter().any(|&v| v != 0.0));
        }
        let other = build_dataset(&BuildConfig::new(4, Profile::Tiny, 12), tempfile::tempdir().unwrap().path()).unwrap();
        assert_ne!(other.config_hash, ma.config_hash);
        assert_ne!(other.clips[0].sha256, ma.clips[0].sha256);
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_dataset(&BuildConfig::new(2, Profile::Tiny, 1), dir.path()).unwrap();
        let path = dir.path().join(&m.clips[0].path);
        let mut clip = read_clip(&path).unwrap();
        clip.raw.data[0] = 1.0 - clip.raw.data[0];
        write_clip(&path, &clip).unwrap();
        assert!(matches!(m.verify(), Err(Error::CorruptContainer { .. })));

        let mut dup = m.clone();
        dup.clips[1].id = dup.clips[0].id.clone();
        dup.save().unwrap();
        assert!(matches!(DatasetManifest::load(dir.path()), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn split_sizes() {
        let cases = [(1, 0), (2, 1), (4, 1), (10, 1), (16, 2), (128, 13)];
        for (n, want) in cases {
            assert_eq!(BuildConfig::new(n, Profile::Tiny, 0).n_test(), want, "n = {n}");
        }
        assert!(BuildConfig::new(0, Profile::Tiny, 0).validate().is_err());
    }
}
