//! Passive non-line-of-sight tracking of a walker behind a relay wall.
//!
//! The crate is organised bottom-up:
//!
//! - [`trajgen`]: smooth random walks inside a room, gap repair, room normalisation.
//! - [`scenesim`]: a one-bounce Lambertian renderer of the relay wall, difference
//!   streams and noise alignment.
//! - [`datasets`]: clip containers, manifests, dataset building and sub-clip sampling.
//! - [`nn`]: the small tensor/layer toolkit (convolution, GRU, MLP) with explicit
//!   backward passes used by the models.
//! - [`pacnet`]: the propagate/calibrate tracker and its ablations.
//! - [`training`]: loss, AdamW with cosine annealing, training loop, gradient check,
//!   ablation harness.
//! - [`metrics`]: RMS, Area, DTW and PCM trajectory metrics.

pub mod datasets;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pacnet;
pub mod scenesim;
pub mod seed;
pub mod trajgen;
pub mod training;

pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use pacnet::{ModelKind, TrackerState};
pub use scenesim::{FrameStream, SceneConfig, StreamKind};
pub use trajgen::{Point2, RoomSpec, Trajectory, TrajectoryParams};
