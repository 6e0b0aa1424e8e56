//! Trajectory alignment and accuracy metrics: absolute translation error,
//! plane normal error and plane distance error.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_plane_ransac, RansacConfig};
use crate::geometry::{Landmark, PlaneParams, Rotation};
use crate::synth::GroundTruth;
use crate::window::InitializationResult;

/// Alignment `p ↦ (R p + T) / s` of an estimate into the ground-truth frame,
/// the minimizer of `Σ ‖(R p + T) − s g‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Rotation::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (self.rotation.rotate(p) + self.translation) / self.scale
    }

    /// Image of the plane `nᵀP + d = 0` under [`Self::apply`].
    pub fn apply_plane(&self, plane: &PlaneParams) -> Result<PlaneParams> {
        let n = self.rotation.rotate(&plane.normal());
        PlaneParams::new(n, (plane.distance() - n.dot(&self.translation)) / self.scale)
    }
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().fold(Vector3::zeros(), |a, p| a + p) / points.len() as f64
}

/// Closed-form similarity aligning `traj` onto `traj_gt`.
pub fn umeyama_align(traj: &[Vector3<f64>], traj_gt: &[Vector3<f64>]) -> Result<SimilarityTransform> {
    if traj.len() != traj_gt.len() || traj.len() < 3 {
        return Err(Error::DegenerateTrajectory);
    }
    let mp = centroid(traj);
    let mg = centroid(traj_gt);
    let mut cov = Matrix3::zeros();
    let mut gt_spread = 0.0;
    for (p, g) in traj.iter().zip(traj_gt) {
        let gc = g - mg;
        cov += gc * (p - mp).transpose();
        gt_spread += gc.norm_squared();
    }
    let svd = cov.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::NumericalFailure("alignment SVD failed"));
    };
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= 1e-10 * sv[0] || !(gt_spread > 0.0) {
        return Err(Error::DegenerateTrajectory);
    }
    let mut fix = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = u * fix * v_t;
    let aligned: f64 = traj
        .iter()
        .zip(traj_gt)
        .map(|(p, g)| (r * (p - mp)).dot(&(g - mg)))
        .sum();
    let scale = aligned / gt_spread;
    if !(scale > 0.0) {
        return Err(Error::DegenerateTrajectory);
    }
    Ok(SimilarityTransform {
        scale,
        rotation: Rotation::from_matrix(&r),
        translation: mg * scale - r * mp,
    })
}

/// RMS distance between aligned positions and ground truth.
pub fn ate_aligned(transform: &SimilarityTransform, traj: &[Vector3<f64>], traj_gt: &[Vector3<f64>]) -> f64 {
    let sum: f64 = traj
        .iter()
        .zip(traj_gt)
        .map(|(p, g)| (transform.apply(p) - g).norm_squared())
        .sum();
    (sum / traj.len() as f64).sqrt()
}

pub fn ate(traj: &[Vector3<f64>], traj_gt: &[Vector3<f64>]) -> Result<f64> {
    let t = umeyama_align(traj, traj_gt)?;
    Ok(ate_aligned(&t, traj, traj_gt))
}

/// Angle between plane normals in degrees, sign-agnostic.
pub fn pne(plane: &PlaneParams, plane_gt: &PlaneParams) -> f64 {
    let c = plane.normal().dot(&plane_gt.normal()).abs().min(1.0);
    c.acos().to_degrees()
}

/// `|d − d_GT|` with the estimated normal oriented like the ground truth.
/// Both planes must already be in the same frame.
pub fn pde(plane: &PlaneParams, plane_gt: &PlaneParams) -> f64 {
    let d = if plane.normal().dot(&plane_gt.normal()) < 0.0 {
        -plane.distance()
    } else {
        plane.distance()
    };
    (d - plane_gt.distance()).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Inlier distance of the evaluation plane fit, ground-truth units.
    pub plane_threshold: f64,
    pub plane_iterations: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            plane_threshold: 0.02,
            plane_iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub frames: usize,
    pub seed: u64,
    pub ate: f64,
    pub pne_deg: f64,
    pub pde: f64,
    /// Total wall time divided by the frame count.
    pub avg_time_ms: f64,
    pub optim_time_ms: f64,
}

/// Aligns the estimate, fits a plane to its aligned landmarks and scores it.
///
/// Falls back to the method's own plane when the landmark fit is impossible.
pub fn evaluate(
    result: &InitializationResult,
    truth: &GroundTruth,
    config: &EvalConfig,
    seed: u64,
) -> Result<MetricsReport> {
    let gt_positions = truth.positions();
    if gt_positions.len() < result.poses.len() {
        return Err(Error::InvalidWindow("more estimated poses than ground-truth frames".into()));
    }
    let gt_positions = &gt_positions[..result.poses.len()];
    let positions = result.positions();
    let transform = umeyama_align(&positions, gt_positions)?;
    let ate = ate_aligned(&transform, &positions, gt_positions);

    let aligned: Vec<Landmark> = result
        .landmarks
        .iter()
        .map(|l| Landmark {
            id: l.id,
            position: transform.apply(&l.position),
        })
        .collect();
    let ransac = RansacConfig {
        threshold: config.plane_threshold,
        max_iterations: config.plane_iterations,
        ..RansacConfig::default()
    };
    let plane = match fit_plane_ransac(&aligned, &ransac, seed) {
        Ok(fit) => fit.model,
        Err(e) => match &result.plane {
            Some(p) => transform.apply_plane(p)?,
            None => return Err(e),
        },
    };
    let frames = result.poses.len();
    Ok(MetricsReport {
        method: result.method.clone(),
        frames,
        seed,
        ate,
        pne_deg: pne(&plane, &truth.plane),
        pde: pde(&plane, &truth.plane),
        avg_time_ms: result.timing.total.as_secs_f64() * 1e3 / frames as f64,
        optim_time_ms: result.timing.optimization.as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, SymmetricEigen, UnitQuaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    /// Horn's quaternion solution of the rotation mapping centred `p` onto `g`.
    fn horn_rotation(p: &[Vector3<f64>], g: &[Vector3<f64>]) -> Matrix3<f64> {
        let (mp, mg) = (centroid(p), centroid(g));
        let mut s = Matrix3::zeros();
        for (a, b) in p.iter().zip(g) {
            s += (a - mp) * (b - mg).transpose();
        }
        let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
        let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
        let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
        let n = Matrix4::new(
            sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
            syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
            szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
            sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
        );
        let eig = SymmetricEigen::new(n);
        let i = eig.eigenvalues.imax();
        let q = eig.eigenvectors.column(i);
        UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
            .to_rotation_matrix()
            .into_inner()
    }

    #[test]
    fn identity_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = random_points(&mut rng, 10);
        let t = umeyama_align(&pts, &pts).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.rotation.angle_to(&Rotation::identity()) < 1e-7);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn recovers_known_similarity_and_matches_horn() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let gt = random_points(&mut rng, 12);
            let r0 = Rotation::from_scaled_axis(Vector3::new(0.3, -1.2, 0.7));
            let shift = Vector3::new(1.0, -2.0, 0.5);
            let est: Vec<Vector3<f64>> = gt.iter().map(|g| r0.rotate(g) * 2.0 + shift).collect();
            let t = umeyama_align(&est, &gt).unwrap();
            assert!((t.scale - 2.0).abs() < 1e-12);
            assert!((t.rotation.matrix() - horn_rotation(&est, &gt)).amax() < 1e-9);
            for (e, g) in est.iter().zip(&gt) {
                assert!((t.apply(e) - g).norm() < 1e-12);
            }
            assert!(ate(&est, &gt).unwrap() < 1e-12);
        }
    }

    #[test]
    fn single_offset_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = random_points(&mut rng, 8);
        let mut est = gt.clone();
        est[3] += Vector3::new(0.01, 0.0, 0.0);
        let t = umeyama_align(&est, &gt).unwrap();
        let direct: f64 = est.iter().zip(&gt).map(|(p, g)| (t.apply(p) - g).norm_squared()).sum::<f64>() / 8.0;
        let value = ate(&est, &gt).unwrap();
        assert!((value - direct.sqrt()).abs() < 1e-15);
        assert!(value > 0.0 && value < 0.01);
    }

    #[test]
    fn degenerate_trajectories() {
        let two = vec![Vector3::zeros(), Vector3::x()];
        assert_eq!(umeyama_align(&two, &two), Err(Error::DegenerateTrajectory));
        let line: Vec<Vector3<f64>> = (0..5).map(|i| Vector3::x() * i as f64).collect();
        assert_eq!(umeyama_align(&line, &line), Err(Error::DegenerateTrajectory));
    }

    #[test]
    fn plane_metrics() {
        let p = PlaneParams::new(Vector3::z(), -1.0).unwrap();
        assert_eq!(pne(&p, &p), 0.0);
        let flipped = PlaneParams::new(-Vector3::z(), 1.0).unwrap();
        assert_eq!(pne(&flipped, &p), 0.0);
        let a = PlaneParams::new(Vector3::x(), -1.0).unwrap();
        let b = PlaneParams::new(Vector3::y(), -1.0).unwrap();
        assert!((pne(&a, &b) - 90.0).abs() < 1e-12);
        assert_eq!(pde(&p, &p), 0.0);
        let shifted = PlaneParams::new(Vector3::z(), -1.1).unwrap();
        assert!((pde(&shifted, &p) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn plane_follows_alignment() {
        let t = SimilarityTransform {
            scale: 0.25,
            rotation: Rotation::from_scaled_axis(Vector3::new(0.2, 0.4, -0.1)),
            translation: Vector3::new(0.3, 0.1, -0.7),
        };
        let plane = PlaneParams::new(Vector3::new(0.1, 0.2, 1.0), -2.0).unwrap();
        let moved = t.apply_plane(&plane).unwrap();
        let on_plane = -plane.normal() * plane.distance() + plane.normal().cross(&Vector3::x());
        assert!(plane.signed_distance(&on_plane).abs() < 1e-12);
        assert!(moved.signed_distance(&t.apply(&on_plane)).abs() < 1e-12);
    }
}
