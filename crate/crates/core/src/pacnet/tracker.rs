use serde::{Deserialize, Serialize};

use super::{ModelKind, Network, PacCell};
use crate::nn::Real;
use crate::trajgen::Point2;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Warmup,
    Tracking,
}

/// Recurrent state carried between frames of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState<T = f32> {
    /// Stacked GRU state, `layers x hidden`.
    pub h: Vec<T>,
    pub frames_seen: usize,
    pub stage: Stage,
}

impl<T: Real> TrackerState<T> {
    /// Fresh state at the start of a stream: `h` is exactly zero.
    pub fn zeros(len: usize, stage: Stage) -> Self {
        Self {
            h: vec![T::zero(); len],
            frames_seen: 0,
            stage,
        }
    }
}

/// One propagate/calibrate cell seen as two state updates.
pub trait FrameCell<T> {
    fn frame_len(&self) -> usize;
    /// `h~ = P(h, dI)`
    fn propagate(&self, h: &[T], diff: &[T]) -> Vec<T>;
    /// `h = C(h~, I)`
    fn calibrate(&self, h: &[T], raw: &[T]) -> Vec<T>;
}

/// Propagate with the difference frame, then calibrate with the raw frame.
/// Returns the new state and the propagated intermediate `h~`.
pub fn pac_step<T: Real, C: FrameCell<T>>(state: &TrackerState<T>, diff: &[T], raw: &[T], cell: &C) -> Result<(TrackerState<T>, Vec<T>)> {
    let n = cell.frame_len();
    if diff.len() != n || raw.len() != n {
        return Err(Error::Contract(format!(
            "pac_step: frames have {} and {} values, the cell expects {n}",
            diff.len(),
            raw.len()
        )));
    }
    let h_tilde = cell.propagate(&state.h, diff);
    let h = cell.calibrate(&h_tilde, raw);
    let next = TrackerState {
        h,
        frames_seen: state.frames_seen + 1,
        stage: state.stage,
    };
    Ok((next, h_tilde))
}

/// A network cell bound to the network's input normalisation.
pub struct NormalizedCell<'a, T> {
    pub net: &'a Network<T>,
    pub cell: &'a PacCell<T>,
}

impl<T: Real> FrameCell<T> for NormalizedCell<'_, T> {
    fn frame_len(&self) -> usize {
        self.net.config.frame_len()
    }

    fn propagate(&self, h: &[T], diff: &[T]) -> Vec<T> {
        let p = self.cell.p.as_ref().expect("cell has no propagation pathway");
        let s = T::of(1.0 / self.net.norm.diff_std);
        let x: Vec<T> = diff.iter().map(|&v| v * s).collect();
        let (f, _) = p.encoder.forward(&x, 1);
        p.gru.step(&f, h, 1).0
    }

    fn calibrate(&self, h: &[T], raw: &[T]) -> Vec<T> {
        let c = self.cell.c.as_ref().expect("cell has no calibration pathway");
        let (f, _) = c.encoder.forward(&self.net.normalize_raw(raw), 1);
        c.gru.step(&f, h, 1).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub frame_index: usize,
    pub position: Point2,
    /// `pacnet`: decoded from the propagated state.
    pub p_position: Option<Point2>,
    pub stage: Stage,
}

/// Online tracker: one frame in, at most one position out, constant memory.
pub struct Tracker<'a, T = f32> {
    net: &'a Network<T>,
    state: TrackerState<T>,
    prev: Option<Vec<T>>,
    position: Option<[T; 2]>,
}

impl<'a, T: Real> Tracker<'a, T> {
    pub fn new(net: &'a Network<T>) -> Self {
        Self {
            net,
            state: TrackerState::zeros(net.state_len(), net.stage_of(1)),
            prev: None,
            position: None,
        }
    }

    /// `pnet` integrates displacements from this (room-normalised) position.
    pub fn with_initial_position(net: &'a Network<T>, init: Point2) -> Self {
        Self {
            position: Some([T::of(init.x), T::of(init.y)]),
            ..Self::new(net)
        }
    }

    pub fn state(&self) -> &TrackerState<T> {
        &self.state
    }

    fn decode(&self, top: &[T], p_path: bool) -> [T; 2] {
        let dec = if p_path { self.net.p_decoder.as_ref().unwrap_or(&self.net.decoder) } else { &self.net.decoder };
        let (y, _) = dec.forward(top, 1);
        [y[0], y[1]]
    }

    fn top<'b>(&self, h: &'b [T]) -> &'b [T] {
        let hd = self.net.config.hidden_dim;
        &h[h.len() - hd..]
    }

    fn point(v: [T; 2]) -> Point2 {
        Point2::new(v[0].f64(), v[1].f64())
    }

    pub fn push(&mut self, frame: &[T]) -> Result<Option<StepOutput>> {
        let net = self.net;
        let fl = net.config.frame_len();
        if frame.len() != fl {
            return Err(Error::Contract(format!("frame has {} values, the model expects {fl}", frame.len())));
        }
        let t = self.state.frames_seen;
        let stage = net.stage_of(t);
        let cell = net.cell(if stage == Stage::Warmup { 1 } else { 0 });
        let out = match net.config.kind {
            ModelKind::Pacnet => match self.prev.take() {
                None => {
                    self.state.frames_seen = 1;
                    None
                }
                Some(prev) => {
                    let diff: Vec<T> = frame.iter().zip(&prev).map(|(&a, &b)| a - b).collect();
                    self.state.stage = stage;
                    let nc = NormalizedCell { net, cell };
                    let (next, h_tilde) = pac_step(&self.state, &diff, frame, &nc)?;
                    self.state = next;
                    let position = Self::point(self.decode(self.top(&self.state.h), false));
                    let p_position = Some(Self::point(self.decode(self.top(&h_tilde), true)));
                    Some(StepOutput {
                        frame_index: t,
                        position,
                        p_position,
                        stage,
                    })
                }
            },
            ModelKind::Cnet | ModelKind::Cnn => {
                let c = cell.c.as_ref().unwrap();
                let (f, _) = c.encoder.forward(&net.normalize_raw(frame), 1);
                let top = if net.config.kind == ModelKind::Cnet {
                    self.state.h = c.gru.step(&f, &self.state.h, 1).0;
                    self.top(&self.state.h).to_vec()
                } else {
                    f
                };
                self.state.stage = stage;
                self.state.frames_seen += 1;
                Some(StepOutput {
                    frame_index: t,
                    position: Self::point(self.decode(&top, false)),
                    p_position: None,
                    stage,
                })
            }
            ModelKind::Pnet => {
                let Some(pos) = self.position else {
                    return Err(Error::Contract("pnet needs the true initial position".into()));
                };
                let new_pos = match self.prev.take() {
                    None => pos,
                    Some(prev) => {
                        let p = cell.p.as_ref().unwrap();
                        let (f, _) = p.encoder.forward(&net.normalize_diff(frame, &prev), 1);
                        self.state.h = p.gru.step(&f, &self.state.h, 1).0;
                        let d = self.decode(self.top(&self.state.h), false);
                        let s = T::of(net.config.displacement_scale);
                        [pos[0] + s * d[0], pos[1] + s * d[1]]
                    }
                };
                self.position = Some(new_pos);
                self.state.frames_seen += 1;
                Some(StepOutput {
                    frame_index: t,
                    position: Self::point(new_pos),
                    p_position: None,
                    stage,
                })
            }
        };
        if matches!(net.config.kind, ModelKind::Pacnet | ModelKind::Pnet) {
            self.prev = Some(frame.to_vec());
        }
        Ok(out)
    }
}
