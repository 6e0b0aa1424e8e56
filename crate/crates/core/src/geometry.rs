//! Pinhole geometry, plane-induced homographies and planar depth recovery.
//!
//! Conventions used throughout the crate:
//!
//! * A [`Rotation`] maps world coordinates into the camera frame (`R_cw`).
//! * A [`Pose`] stores that rotation together with the camera centre `C`
//!   expressed in the world frame, so a world point `P` has camera
//!   coordinates `R_cw (P - C)`.
//! * A plane is `nᵀP + d = 0` with unit `n`; the canonical sign keeps `d <= 0`.

use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::*;
use crate::error::{Error, Result};
use crate::window::{FrameWindow, TrackId};

/// Pinhole intrinsics (pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "intrinsics need finite values and positive focal lengths, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// `K⁻¹ [u, v, 1]ᵀ`, a camera-frame ray with unit z.
    pub fn unproject(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            1.0,
        )
    }

    /// Pixel of a camera-frame ray with unit z.
    pub fn pixel_of_normalized(&self, xy: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * xy.x + self.cx, self.fy * xy.y + self.cy)
    }
}

/// World-to-camera rotation stored as a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Builds a rotation from quaternion components, rejecting inputs whose
    /// norm is not 1 within the unit-norm tolerance.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        if !q.coords.iter().all(|c| c.is_finite())
            || (q.norm() - 1.0).abs() > UNIT_NORM_TOLERANCE
        {
            return Err(Error::InvalidConfig(format!(
                "quaternion ({w}, {x}, {y}, {z}) is not unit norm"
            )));
        }
        Ok(Self(UnitQuaternion::new_normalize(q)))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self(q)
    }

    /// Closest rotation to `m` (re-orthonormalized).
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self(UnitQuaternion::from_matrix(m))
    }

    pub fn from_scaled_axis(axis_angle: Vector3<f64>) -> Self {
        Self(UnitQuaternion::from_scaled_axis(axis_angle))
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    /// `self · other`.
    pub fn compose(&self, other: &Rotation) -> Self {
        Self(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.0.angle_to(&other.0)
    }
}

/// Camera pose: world-to-camera rotation and camera centre in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Rotation,
    pub position: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, position: Vector3<f64>) -> Self {
        Self { rotation, position }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vector3::zeros())
    }

    /// Builds a pose from the world-to-camera translation `t_cw` (`X_c = R P + t_cw`).
    pub fn from_rotation_translation(rotation: Rotation, t_cw: Vector3<f64>) -> Self {
        let position = -(rotation.inverse().rotate(&t_cw));
        Self { rotation, position }
    }

    /// `t_cw = -R C`.
    pub fn translation_cw(&self) -> Vector3<f64> {
        -self.rotation.rotate(&self.position)
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(&(p - self.position))
    }

    pub fn camera_to_world(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse().rotate(x) + self.position
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.rotation.quaternion().coords.iter().all(|v| v.is_finite())
    }
}

/// Plane `nᵀP + d = 0` with unit normal, stored with `d <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneParams {
    normal: Vector3<f64>,
    distance: f64,
}

impl PlaneParams {
    /// Normalizes `normal` (rescaling `distance` accordingly) and applies the
    /// canonical sign.
    pub fn new(normal: Vector3<f64>, distance: f64) -> Result<Self> {
        let norm = normal.norm();
        if !norm.is_finite() || norm < 1e-15 || !distance.is_finite() {
            return Err(Error::DegenerateConfiguration("plane normal is zero or non-finite"));
        }
        Ok(Self {
            normal: normal / norm,
            distance: distance / norm,
        }
        .canonical())
    }

    /// Same plane with the sign convention `d <= 0`; for `d == 0` the
    /// largest-magnitude normal component is made positive.
    pub fn canonical(self) -> Self {
        let flip = if self.distance != 0.0 {
            self.distance > 0.0
        } else {
            let imax = self.normal.iamax();
            self.normal[imax] < 0.0
        };
        if flip {
            Self {
                normal: -self.normal,
                distance: -self.distance,
            }
        } else {
            self
        }
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.distance
    }
}

/// Scale-normalized 3×3 homography: Frobenius norm √3, `H[(2,2)] >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let norm = m.norm();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(Error::DegenerateConfiguration("homography is zero or non-finite"));
        }
        let mut h = m * (3f64.sqrt() / norm);
        let pivot = if h[(2, 2)] != 0.0 {
            h[(2, 2)]
        } else {
            // row-major scan for the first nonzero entry
            (0..9)
                .map(|k| h[(k / 3, k % 3)])
                .find(|v| *v != 0.0)
                .unwrap_or(1.0)
        };
        if pivot < 0.0 {
            h = -h;
        }
        if h.determinant().abs() <= MIN_HOMOGRAPHY_DET {
            return Err(Error::DegenerateConfiguration("homography is singular"));
        }
        Ok(Self(h))
    }

    pub fn identity() -> Self {
        Self::from_matrix(Matrix3::identity()).expect("identity is regular")
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .0
            .try_inverse()
            .ok_or(Error::DegenerateConfiguration("homography is singular"))?;
        Self::from_matrix(inv)
    }

    /// `self · other`.
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Self::from_matrix(self.0 * other.0)
    }

    /// `π(H·[p, 1])`.
    pub fn transfer(&self, p: &Vector2<f64>) -> Result<Vector2<f64>> {
        normalize_pi(&(self.0 * p.push(1.0)))
    }

    /// Largest absolute entry difference against `other`.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        (self.0 - other.0).amax()
    }
}

/// 3D point tied to a feature track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: TrackId,
    pub position: Vector3<f64>,
}

/// Perspective division `(x/z, y/z)`.
pub fn normalize_pi(v: &Vector3<f64>) -> Result<Vector2<f64>> {
    if !(v.z.abs() > MIN_HOMOGENEOUS_Z) {
        return Err(Error::DegenerateDepth);
    }
    Ok(Vector2::new(v.x / v.z, v.y / v.z))
}

/// Projects a world point; returns the pixel and its camera-frame depth.
pub fn project(k: &CameraIntrinsics, pose: &Pose, p: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
    let x = pose.world_to_camera(p);
    if !(x.z > MIN_PROJECTION_DEPTH) {
        return Err(Error::BehindCamera(x.z));
    }
    let pixel = normalize_pi(&(k.matrix() * x))?;
    Ok((pixel, x.z))
}

/// `K (R₂₁ − t₂₁ nᵀ / d) K⁻¹` for the plane `nᵀX₁ + d = 0` in camera 1 and
/// `X₂ = R₂₁ X₁ + t₂₁`.
pub fn homography_from_pose_plane(
    k: &CameraIntrinsics,
    r_21: &Rotation,
    t_21: &Vector3<f64>,
    n_c1: &Vector3<f64>,
    d_c1: f64,
) -> Result<Homography> {
    if !(d_c1.abs() > MIN_PLANE_DISTANCE) {
        return Err(Error::DegeneratePlane);
    }
    let inner = r_21.matrix() - t_21 * n_c1.transpose() / d_c1;
    Homography::from_matrix(k.matrix() * inner * k.inverse_matrix())
}

/// Unnormalized `K Rᵢ (I − t nᵀ) R₁ᵀ K⁻¹`, where `t = (C₁ − Cᵢ) / d₁` is the
/// distance-scaled world-frame offset and `d₁ = nᵀC₁ + d`.
pub fn world_form_matrix(
    k: &CameraIntrinsics,
    r_i: &Rotation,
    r_1: &Rotation,
    t_i1: &Vector3<f64>,
    n_world: &Vector3<f64>,
) -> Matrix3<f64> {
    let inner = Matrix3::identity() - t_i1 * n_world.transpose();
    k.matrix() * r_i.matrix() * inner * r_1.matrix().transpose() * k.inverse_matrix()
}

/// Normalized [`world_form_matrix`].
pub fn homography_world_form(
    k: &CameraIntrinsics,
    r_i: &Rotation,
    r_1: &Rotation,
    t_i1: &Vector3<f64>,
    n_world: &Vector3<f64>,
) -> Result<Homography> {
    Homography::from_matrix(world_form_matrix(k, r_i, r_1, t_i1, n_world))
}

/// Depth along the pixel ray at which it meets the plane:
/// `m = (−d − nᵀC) / (nᵀ R_wc K⁻¹ p)`.
pub fn recover_depth(
    k: &CameraIntrinsics,
    pose: &Pose,
    plane: &PlaneParams,
    pixel: &Vector2<f64>,
) -> Result<f64> {
    let ray = pose.rotation.inverse().rotate(&k.unproject(pixel));
    let n = plane.normal();
    let denom = n.dot(&ray);
    if !(denom.abs() > MIN_RAY_PLANE_COSINE) {
        return Err(Error::RayParallelToPlane);
    }
    let m = (-plane.distance() - n.dot(&pose.position)) / denom;
    if !(m > 0.0) {
        return Err(Error::NegativeDepth(m));
    }
    Ok(m)
}

/// Landmarks recovered from the plane plus the tracks that had no valid
/// back-projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub landmarks: Vec<Landmark>,
    pub dropped: Vec<TrackId>,
}

/// Intersects every observation ray with `plane` and averages the resulting
/// world points per track.
pub fn reconstruct_landmarks(
    window: &FrameWindow,
    poses: &[Pose],
    plane: &PlaneParams,
) -> Result<Reconstruction> {
    if poses.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if poses.len() != window.len() {
        return Err(Error::InvalidWindow(format!(
            "{} poses for {} frames",
            poses.len(),
            window.len()
        )));
    }
    let k = window.intrinsics();
    let mut landmarks = Vec::new();
    let mut dropped = Vec::new();
    for id in window.track_ids() {
        let mut sum = Vector3::zeros();
        let mut count = 0usize;
        for (frame, pose) in window.frames().iter().zip(poses) {
            let Some(pixel) = frame.observations.get(&id) else {
                continue;
            };
            if let Ok(m) = recover_depth(k, pose, plane, pixel) {
                sum += pose.camera_to_world(&(k.unproject(pixel) * m));
                count += 1;
            }
        }
        if count == 0 {
            dropped.push(id);
        } else {
            landmarks.push(Landmark {
                id,
                position: sum / count as f64,
            });
        }
    }
    Ok(Reconstruction { landmarks, dropped })
}

/// Rotation taking `+z` onto `n` (deterministic for antiparallel input).
pub fn quaternion_from_normal(n: &Vector3<f64>) -> UnitQuaternion<f64> {
    let z = Vector3::z();
    UnitQuaternion::rotation_between(&z, n).unwrap_or_else(|| {
        UnitQuaternion::from_axis_angle(&Unit::new_unchecked(Vector3::x()), std::f64::consts::PI)
    })
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
