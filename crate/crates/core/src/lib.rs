//! Planar-scene monocular initialization.
//!
//! Estimates camera translations and the scene plane of a sliding window of
//! frames with known rotations by minimizing homography transfer error over
//! the plane normal and all scaled translations jointly ([`gpo`]). Two-view
//! aggregation and bundle-adjustment initializers ([`baselines`]), a
//! synthetic planar-scene generator ([`synth`]) and trajectory/plane metrics
//! ([`eval`]) complete the toolkit.

// `!(x > tol)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod constants;
pub mod error;
pub mod estimation;
pub mod eval;
pub mod geometry;
pub mod gpo;
pub mod methods;
pub mod solver;
pub mod synth;
pub mod window;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, Homography, Landmark, PlaneParams, Pose, Rotation};
pub use solver::{RobustLoss, SolverConfig};
pub use window::{Frame, FrameWindow, InitializationResult, Timing, TrackId};
