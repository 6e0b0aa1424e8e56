//! Sliding-window input and the common output of every initializer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Duration;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Landmark, PlaneParams, Pose, Rotation};

/// Feature track identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackId(pub u32);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One frame: known world-to-camera rotation and tracked pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub rotation: Rotation,
    pub observations: BTreeMap<TrackId, Vector2<f64>>,
}

impl Frame {
    pub fn new(rotation: Rotation, observations: BTreeMap<TrackId, Vector2<f64>>) -> Self {
        Self {
            rotation,
            observations,
        }
    }
}

/// Frames of the initialization window. Frame 0 is the reference and seeds
/// every track.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameWindow {
    intrinsics: CameraIntrinsics,
    frames: Vec<Frame>,
}

impl FrameWindow {
    pub fn new(intrinsics: CameraIntrinsics, frames: Vec<Frame>) -> Result<Self> {
        intrinsics.validate()?;
        if frames.len() < 2 {
            return Err(Error::InvalidWindow(format!(
                "need at least 2 frames, got {}",
                frames.len()
            )));
        }
        let reference = &frames[0].observations;
        for (i, frame) in frames.iter().enumerate().skip(1) {
            if let Some(id) = frame.observations.keys().find(|id| !reference.contains_key(id)) {
                return Err(Error::InvalidWindow(format!(
                    "track {id} in frame {i} is not seeded in the reference frame"
                )));
            }
        }
        for frame in &frames {
            if frame.observations.values().any(|p| !p.iter().all(|v| v.is_finite())) {
                return Err(Error::InvalidWindow("non-finite observation".into()));
            }
        }
        Ok(Self { intrinsics, frames })
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn reference(&self) -> &Frame {
        &self.frames[0]
    }

    pub fn rotations(&self) -> Vec<Rotation> {
        self.frames.iter().map(|f| f.rotation).collect()
    }

    /// Track ids in ascending order (all are seeded in the reference frame).
    pub fn track_ids(&self) -> impl Iterator<Item = TrackId> + '_ {
        self.frames[0].observations.keys().copied()
    }

    /// `(id, pixel in reference, pixel in frame i)` for tracks observed in
    /// both, sorted by id.
    pub fn shared(&self, i: usize) -> impl Iterator<Item = (TrackId, Vector2<f64>, Vector2<f64>)> + '_ {
        let reference = &self.frames[0].observations;
        self.frames[i]
            .observations
            .iter()
            .filter_map(move |(id, pi)| reference.get(id).map(|p1| (*id, *p1, *pi)))
    }

    /// First `m` frames.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        Self::new(self.intrinsics, self.frames[..m.min(self.frames.len())].to_vec())
    }

    /// Same window restricted to `keep`.
    pub fn retain_tracks(&self, keep: &BTreeSet<TrackId>) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|f| Frame {
                rotation: f.rotation,
                observations: f
                    .observations
                    .iter()
                    .filter(|(id, _)| keep.contains(id))
                    .map(|(id, p)| (*id, *p))
                    .collect(),
            })
            .collect();
        Self {
            intrinsics: self.intrinsics,
            frames,
        }
    }

    /// Same window with every frame rotation replaced.
    pub fn with_rotations(&self, rotations: &[Rotation]) -> Result<Self> {
        if rotations.len() != self.frames.len() {
            return Err(Error::InvalidWindow("rotation count does not match frame count".into()));
        }
        let mut out = self.clone();
        for (f, r) in out.frames.iter_mut().zip(rotations) {
            f.rotation = *r;
        }
        Ok(out)
    }
}

/// Wall-clock phases of one initialization run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timing {
    pub total: Duration,
    pub optimization: Duration,
}

/// Output shared by GPO and every baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct InitializationResult {
    pub method: String,
    /// One pose per window frame, frame 0 at the origin.
    pub poses: Vec<Pose>,
    pub plane: Option<PlaneParams>,
    pub landmarks: Vec<Landmark>,
    pub dropped_tracks: Vec<TrackId>,
    pub timing: Timing,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the motion gives too little parallax to observe the plane.
    pub low_confidence: bool,
}

impl InitializationResult {
    pub fn positions(&self) -> Vec<nalgebra::Vector3<f64>> {
        self.poses.iter().map(|p| p.position).collect()
    }
}
