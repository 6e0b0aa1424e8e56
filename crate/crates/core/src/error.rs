use thiserror::Error;

use crate::window::TrackId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point has (near) zero depth, cannot normalize")]
    DegenerateDepth,
    #[error("point lies behind the camera (depth {0})")]
    BehindCamera(f64),
    #[error("plane distance is (near) zero")]
    DegeneratePlane,
    #[error("viewing ray is parallel to the plane")]
    RayParallelToPlane,
    #[error("recovered depth is not positive ({0})")]
    NegativeDepth(f64),
    #[error("frame window is empty")]
    EmptyWindow,
    #[error("invalid frame window: {0}")]
    InvalidWindow(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("too few inliers: {found} (need {required})")]
    InsufficientInliers { found: usize, required: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(&'static str),
    #[error("no decomposition solution passes the cheirality test")]
    NoValidSolution,
    #[error("solver diverged (non-finite cost)")]
    SolverDiverged,
    #[error("frame {frame} shares only {found} tracks with the reference frame (need {required})")]
    InsufficientTracks {
        frame: usize,
        found: usize,
        required: usize,
    },
    #[error("rays have insufficient parallax for triangulation")]
    InsufficientParallax,
    #[error("density clustering found no cluster")]
    NoCluster,
    #[error("fewer than 4 tracks visible in frame {0}")]
    InvisibleScene(usize),
    #[error("trajectory is degenerate (too short, collinear or coincident)")]
    DegenerateTrajectory,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("track {0:?} is missing")]
    MissingTrack(TrackId),
}

pub type Result<T> = std::result::Result<T, Error>;
