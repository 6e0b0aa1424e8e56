//! Numerical thresholds shared across the crate.

/// Smallest |z| accepted by the perspective division.
pub const MIN_HOMOGENEOUS_Z: f64 = 1e-12;
/// Smallest camera-frame depth for a valid projection.
pub const MIN_PROJECTION_DEPTH: f64 = 1e-9;
/// Smallest |d| for a plane used to build a homography.
pub const MIN_PLANE_DISTANCE: f64 = 1e-12;
/// Smallest |nᵀ·ray| for planar depth recovery.
pub const MIN_RAY_PLANE_COSINE: f64 = 1e-12;
/// Unit-norm tolerance for quaternions and normals.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;
/// Smallest |det| of a normalized homography.
pub const MIN_HOMOGRAPHY_DET: f64 = 1e-12;
/// Minimum angle between two rays for triangulation (radians).
pub const MIN_TRIANGULATION_ANGLE: f64 = 1e-6;
/// Relative singular-value floor below which a linear system is treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Residual substituted for a transfer whose homogeneous z collapses.
pub const CAPPED_RESIDUAL: f64 = 1e4;
/// Minimal sample of the homography estimator.
pub const HOMOGRAPHY_SAMPLE_SIZE: usize = 4;
/// Floor on the RANSAC inlier count (twice the minimal sample).
pub const MIN_HOMOGRAPHY_INLIERS: usize = 8;
/// Minimum shared tracks per frame pair for GPO and PnP.
pub const MIN_SHARED_TRACKS: usize = 4;
/// Median rotation-compensated parallax below which a GPO result is low confidence (pixels).
pub const MIN_PARALLAX_PX: f64 = 0.5;
