//! Comparison initializers: a two-view PnP chain, density clustering of
//! decomposed plane normals, and bundle adjustment with free points (BA),
//! points on an optimized plane (PBA) or on a fixed plane (FPBA).
//!
//! All of them work in the same gauge as the plane optimizer: the reference
//! camera at the world origin and, where a plane is known, the plane at unit
//! distance from it.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::{CAPPED_RESIDUAL, MIN_HOMOGENEOUS_Z, MIN_TRIANGULATION_ANGLE};
use crate::error::{Error, Result};
use crate::estimation::{
    correspondences, decompose_homography, fit_plane_ransac, pair_homographies, passes_cheirality,
    plane_consistent_tracks,
    select_decomposition, translation_given_normal, Correspondence, DecompositionSolution, ExtraView,
    RansacConfig, RansacResult,
};
use crate::geometry::{
    quaternion_from_normal, reconstruct_landmarks, skew, CameraIntrinsics, Homography, Landmark, PlaneParams,
    Pose, Rotation,
};
use crate::gpo::GAUGE_DISTANCE;
use crate::solver::{self, LeastSquaresProblem, ResidualBlock, SchurSplit, SolverConfig};
use crate::window::{FrameWindow, InitializationResult, Timing, TrackId};

/// Plane-fit inlier distance relative to the median landmark distance from
/// the reference camera.
pub const RELATIVE_PLANE_THRESHOLD: f64 = 0.02;

/// Linear triangulation from two or more views, checked for parallax and
/// positive depth in every view.
pub fn triangulate_views(k: &CameraIntrinsics, views: &[(Pose, Vector2<f64>)]) -> Result<Vector3<f64>> {
    if views.len() < 2 {
        return Err(Error::DegenerateConfiguration("triangulation needs two views"));
    }
    let rays: Vec<Vector3<f64>> = views
        .iter()
        .map(|(pose, p)| pose.rotation.inverse().rotate(&k.unproject(p)).normalize())
        .collect();
    let mut max_angle: f64 = 0.0;
    for a in 0..rays.len() {
        for b in a + 1..rays.len() {
            if (views[a].0.position - views[b].0.position).norm() > 1e-12 {
                max_angle = max_angle.max(rays[a].cross(&rays[b]).norm().atan2(rays[a].dot(&rays[b])));
            }
        }
    }
    if !(max_angle > MIN_TRIANGULATION_ANGLE) {
        return Err(Error::InsufficientParallax);
    }
    let mut a = DMatrix::zeros(2 * views.len(), 4);
    for (v, (pose, p)) in views.iter().enumerate() {
        let x = k.unproject(p);
        let r = pose.rotation.matrix();
        let t = pose.translation_cw();
        for c in 0..3 {
            a[(2 * v, c)] = x.x * r[(2, c)] - r[(0, c)];
            a[(2 * v + 1, c)] = x.y * r[(2, c)] - r[(1, c)];
        }
        a[(2 * v, 3)] = x.x * t.z - t.x;
        a[(2 * v + 1, 3)] = x.y * t.z - t.y;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::NumericalFailure("triangulation SVD failed"))?;
    let smallest = svd.singular_values.imin();
    let h = v_t.row(smallest);
    if !(h[3].abs() > 1e-300) {
        return Err(Error::InsufficientParallax);
    }
    let point = Vector3::new(h[0], h[1], h[2]) / h[3];
    for (pose, _) in views {
        let depth = pose.world_to_camera(&point).z;
        if !(depth > 0.0) {
            return Err(Error::NegativeDepth(depth));
        }
    }
    Ok(point)
}

pub fn triangulate(
    k: &CameraIntrinsics,
    pose1: &Pose,
    p1: &Vector2<f64>,
    pose2: &Pose,
    p2: &Vector2<f64>,
) -> Result<Vector3<f64>> {
    triangulate_views(k, &[(*pose1, *p1), (*pose2, *p2)])
}

const PNP_REFINE_ITERATIONS: usize = 10;

/// Camera position from 2D–3D matches with the rotation known: linear least
/// squares on `x̂ × (R P + t) = 0`, then Gauss–Newton on pixel error.
pub fn pnp_pose(
    k: &CameraIntrinsics,
    rotation: &Rotation,
    matches: &[(Vector3<f64>, Vector2<f64>)],
) -> Result<Pose> {
    if matches.len() < 4 {
        return Err(Error::DegenerateConfiguration("pose needs at least 4 correspondences"));
    }
    let r = rotation.matrix();
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (p, pixel) in matches {
        let s = skew(&k.unproject(pixel));
        ata += s.transpose() * s;
        atb -= s.transpose() * s * r * p;
    }
    let eig = ata.symmetric_eigenvalues();
    if !(eig.min() > 1e-12 * eig.max()) {
        return Err(Error::DegenerateConfiguration("pose system is rank deficient"));
    }
    let mut t = ata
        .cholesky()
        .ok_or(Error::DegenerateConfiguration("pose system is not positive definite"))?
        .solve(&atb);

    let km = k.matrix();
    let cost_of = |t: &Vector3<f64>| -> f64 {
        matches
            .iter()
            .map(|(p, pixel)| {
                crate::geometry::normalize_pi(&(km * (r * p + t)))
                    .map(|q| (q - pixel).norm_squared())
                    .unwrap_or(f64::INFINITY)
            })
            .sum()
    };
    let mut cost = cost_of(&t);
    for _ in 0..PNP_REFINE_ITERATIONS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (p, pixel) in matches {
            let h = km * (r * p + t);
            if !(h.z.abs() > MIN_HOMOGENEOUS_Z) {
                continue;
            }
            let iz = 1.0 / h.z;
            let res = Vector2::new(h.x * iz, h.y * iz) - pixel;
            let j = Matrix2x3::new(iz, 0.0, -h.x * iz * iz, 0.0, iz, -h.y * iz * iz) * km;
            jtj += j.transpose() * j;
            jtr += j.transpose() * res;
        }
        let Some(chol) = jtj.cholesky() else { break };
        let candidate = t - chol.solve(&jtr);
        let candidate_cost = cost_of(&candidate);
        if !(candidate_cost < cost) {
            break;
        }
        let gain = cost - candidate_cost;
        t = candidate;
        cost = candidate_cost;
        if gain <= 1e-14 * (1.0 + cost) {
            break;
        }
    }
    let pose = Pose::from_rotation_translation(*rotation, t);
    if !pose.is_finite() {
        return Err(Error::NumericalFailure("pose is not finite"));
    }
    Ok(pose)
}

/// Plane fitted to landmarks with a threshold scaled to the scene.
pub fn fit_landmark_plane(landmarks: &[Landmark], reference: &Vector3<f64>, seed: u64) -> Result<PlaneParams> {
    let mut dist: Vec<f64> = landmarks.iter().map(|l| (l.position - reference).norm()).collect();
    if dist.len() < 3 {
        return Err(Error::DegenerateConfiguration("plane fit needs at least 3 points"));
    }
    dist.sort_by(f64::total_cmp);
    let config = RansacConfig {
        threshold: RELATIVE_PLANE_THRESHOLD * dist[dist.len() / 2],
        ..RansacConfig::default()
    };
    Ok(fit_plane_ransac(landmarks, &config, seed)?.model)
}

fn inlier_correspondences(window: &FrameWindow, i: usize, fit: &RansacResult<Homography>) -> Vec<Correspondence> {
    let inliers: BTreeSet<TrackId> = fit.inliers.iter().copied().collect();
    correspondences(window, i)
        .into_iter()
        .filter(|c| inliers.contains(&c.id))
        .collect()
}

fn relative_rotation(window: &FrameWindow, i: usize) -> Rotation {
    window.frames()[i].rotation.compose(&window.reference().rotation.inverse())
}

/// Position of frame `i` from a reference-camera `t/d` with `d = −1`.
fn position_from(window: &FrameWindow, i: usize, t_over_d: &Vector3<f64>) -> Vector3<f64> {
    window.frames()[i].rotation.inverse().rotate(t_over_d)
}

/// Two-view decomposition followed by frame-by-frame PnP and triangulation.
///
/// With `filter_tracks` only tracks that are homography inliers in every pair
/// are used.
pub fn init_pnp_chain(
    window: &FrameWindow,
    ransac: &RansacConfig,
    filter_tracks: bool,
    seed: u64,
) -> Result<InitializationResult> {
    let start = Instant::now();
    let k = *window.intrinsics();
    let fits = pair_homographies(window, ransac, seed)?;
    let all_tracks: Vec<TrackId> = window.track_ids().collect();
    let filtered;
    let window = if filter_tracks {
        filtered = window.retain_tracks(&plane_consistent_tracks(window, &fits, ransac));
        &filtered
    } else {
        window
    };

    let pair = inlier_correspondences(window, 1, &fits[0]);
    let solutions = decompose_homography(&fits[0].model, &k)?;
    let extra_corrs = (window.len() > 2).then(|| inlier_correspondences(window, 2, &fits[1]));
    let extra = extra_corrs.as_deref().map(|c| ExtraView {
        correspondences: c,
        relative_rotation: relative_rotation(window, 2),
    });
    let chosen = select_decomposition(&solutions, &k, &pair, &relative_rotation(window, 1), extra)?;

    let mut poses = vec![Pose::new(window.reference().rotation, Vector3::zeros())];
    poses.push(Pose::new(window.frames()[1].rotation, position_from(window, 1, &chosen.t_over_d)));

    let reference = &window.reference().observations;
    let mut points: BTreeMap<TrackId, Vector3<f64>> = BTreeMap::new();
    for (id, p1, p2) in window.shared(1) {
        if let Ok(p) = triangulate(&k, &poses[0], &p1, &poses[1], &p2) {
            points.insert(id, p);
        }
    }
    for i in 2..window.len() {
        let frame = &window.frames()[i];
        let matches: Vec<(Vector3<f64>, Vector2<f64>)> = frame
            .observations
            .iter()
            .filter_map(|(id, p)| points.get(id).map(|x| (*x, *p)))
            .collect();
        let pose = pnp_pose(&k, &frame.rotation, &matches)?;
        for (id, p) in &frame.observations {
            if !points.contains_key(id) {
                if let Ok(x) = triangulate(&k, &poses[0], &reference[id], &pose, p) {
                    points.insert(*id, x);
                }
            }
        }
        poses.push(pose);
    }

    let landmarks: Vec<Landmark> = points.iter().map(|(id, p)| Landmark { id: *id, position: *p }).collect();
    let dropped = all_tracks.into_iter().filter(|id| !points.contains_key(id)).collect();
    let plane = fit_landmark_plane(&landmarks, &Vector3::zeros(), seed).ok();
    Ok(InitializationResult {
        method: "PNP_CHAIN".to_string(),
        poses,
        plane,
        landmarks,
        dropped_tracks: dropped,
        timing: Timing {
            total: start.elapsed(),
            optimization: Duration::ZERO,
        },
        iterations: 0,
        converged: true,
        low_confidence: false,
    })
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

fn neighbours(normals: &[Vector3<f64>], i: usize, eps: f64) -> Vec<usize> {
    (0..normals.len())
        .filter(|&j| angle_between(&normals[i], &normals[j]) <= eps)
        .collect()
}

/// DBSCAN over unit vectors with angular distance; returns the normalized
/// mean of the largest cluster.
pub fn cluster_normals_dbscan(normals: &[Vector3<f64>], eps_deg: f64, min_pts: usize) -> Result<Vector3<f64>> {
    let eps = eps_deg.to_radians();
    const UNVISITED: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let mut label = vec![UNVISITED; normals.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..normals.len() {
        if label[i] != UNVISITED {
            continue;
        }
        let seeds = neighbours(normals, i, eps);
        if seeds.len() < min_pts {
            label[i] = NOISE;
            continue;
        }
        let c = clusters.len();
        let mut members = vec![i];
        label[i] = c;
        let mut queue = seeds;
        let mut q = 0;
        while q < queue.len() {
            let j = queue[q];
            q += 1;
            if label[j] == NOISE {
                label[j] = c;
                members.push(j);
            }
            if label[j] != UNVISITED {
                continue;
            }
            label[j] = c;
            members.push(j);
            let more = neighbours(normals, j, eps);
            if more.len() >= min_pts {
                queue.extend(more);
            }
        }
        clusters.push(members);
    }
    let largest = clusters
        .iter()
        .fold(None::<&Vec<usize>>, |best, c| match best {
            Some(b) if b.len() >= c.len() => Some(b),
            _ => Some(c),
        })
        .ok_or(Error::NoCluster)?;
    let sum = largest.iter().fold(Vector3::zeros(), |a, &i| a + normals[i]);
    if !(sum.norm() > 0.0) {
        return Err(Error::NoCluster);
    }
    Ok(sum.normalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanConfig {
    pub eps_deg: f64,
    pub min_pts: usize,
}

impl Default for DbscanConfig {
    fn default() -> Self {
        Self {
            eps_deg: 5.0,
            min_pts: 4,
        }
    }
}

struct PairCandidates {
    frame: usize,
    /// Cheirality-valid solutions with their world-frame normals.
    solutions: Vec<(DecompositionSolution, Vector3<f64>)>,
}

/// Plane normal by clustering the decomposition normals of every
/// reference/current pair, translations from each pair's solution closest to
/// it, landmarks by ray–plane intersection.
pub fn init_dbscan(
    window: &FrameWindow,
    ransac: &RansacConfig,
    dbscan: &DbscanConfig,
    filter_tracks: bool,
    seed: u64,
) -> Result<InitializationResult> {
    let start = Instant::now();
    let k = *window.intrinsics();
    let fits = pair_homographies(window, ransac, seed)?;
    let r1t = window.reference().rotation.inverse();

    let mut pairs = Vec::with_capacity(fits.len());
    for (f, fit) in fits.iter().enumerate() {
        let i = f + 1;
        let inliers = inlier_correspondences(window, i, fit);
        let solutions = decompose_homography(&fit.model, &k)
            .map(|sols| {
                sols.into_iter()
                    .filter(|s| s.normal_observable && passes_cheirality(s, &k, &inliers))
                    .map(|s| (s, r1t.rotate(&s.normal)))
                    .collect()
            })
            .unwrap_or_default();
        pairs.push(PairCandidates { frame: i, solutions });
    }
    let candidates: Vec<Vector3<f64>> = pairs.iter().flat_map(|p| p.solutions.iter().map(|s| s.1)).collect();
    if candidates.is_empty() {
        return Err(Error::NoValidSolution);
    }
    let normal = match cluster_normals_dbscan(&candidates, dbscan.eps_deg, dbscan.min_pts) {
        Ok(n) => n,
        Err(Error::NoCluster) => {
            // too few candidates to form a cluster: take the best-supported one
            let eps = dbscan.eps_deg.to_radians();
            let best = (0..candidates.len())
                .max_by(|&a, &b| {
                    neighbours(&candidates, a, eps)
                        .len()
                        .cmp(&neighbours(&candidates, b, eps).len())
                        .then(b.cmp(&a))
                })
                .unwrap_or(0);
            candidates[best]
        }
        Err(e) => return Err(e),
    };

    let all_tracks: Vec<TrackId> = window.track_ids().collect();
    let filtered;
    let window = if filter_tracks {
        filtered = window.retain_tracks(&plane_consistent_tracks(window, &fits, ransac));
        &filtered
    } else {
        window
    };
    let normal_c1 = window.reference().rotation.rotate(&normal);
    let mut poses = vec![Pose::new(window.reference().rotation, Vector3::zeros())];
    for pair in &pairs {
        let i = pair.frame;
        let closest = pair
            .solutions
            .iter()
            .min_by(|a, b| angle_between(&a.1, &normal).total_cmp(&angle_between(&b.1, &normal)));
        let t_over_d = match closest {
            Some((s, _)) => s.t_over_d,
            None => translation_given_normal(
                &k,
                &normal_c1,
                &relative_rotation(window, i),
                &correspondences(window, i),
            )?,
        };
        poses.push(Pose::new(window.frames()[i].rotation, position_from(window, i, &t_over_d)));
    }
    let plane = PlaneParams::new(normal, GAUGE_DISTANCE)?;
    let recon = reconstruct_landmarks(window, &poses, &plane)?;
    let mut dropped: Vec<TrackId> = all_tracks.into_iter().filter(|id| !window.reference().observations.contains_key(id)).collect();
    dropped.extend(recon.dropped);
    dropped.sort();
    dropped.dedup();
    Ok(InitializationResult {
        method: "DBSCAN".to_string(),
        poses,
        plane: Some(plane),
        landmarks: recon.landmarks,
        dropped_tracks: dropped,
        timing: Timing {
            total: start.elapsed(),
            optimization: Duration::ZERO,
        },
        iterations: 0,
        converged: true,
        low_confidence: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BaMode {
    /// Free 3D landmarks.
    Ba,
    /// Landmarks on a plane whose normal is optimized.
    Pba,
    /// Landmarks on a fixed plane.
    Fpba,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaInit {
    Pnp,
    Dbscan,
}

/// Bundle-adjustment state; rotations stay fixed throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct BaState {
    /// Positions of frames 2..m; frame 1 is held at its initial position.
    pub positions: Vec<Vector3<f64>>,
    /// Full 3D points (BA) or in-plane coordinates in the first two
    /// components (PBA/FPBA).
    pub landmarks: Vec<Vector3<f64>>,
    /// Rotation taking `+z` onto the plane normal (PBA/FPBA).
    pub plane_rotation: UnitQuaternion<f64>,
}

struct BaObservation {
    frame: usize,
    landmark: usize,
    pixel: Vector2<f64>,
}

/// Reprojection-error problem shared by the three variants.
///
/// Tangent layout: `[plane δ (PBA only, 3) | C₂ … C_m | landmarks]`.
pub struct BaProblem {
    mode: BaMode,
    k: Matrix3<f64>,
    rotations: Vec<Matrix3<f64>>,
    reference_position: Vector3<f64>,
    /// Plane distance, the scale gauge for PBA and FPBA.
    distance: f64,
    observations: Vec<BaObservation>,
    landmark_count: usize,
}

impl BaProblem {
    fn plane_dim(&self) -> usize {
        if self.mode == BaMode::Pba {
            3
        } else {
            0
        }
    }

    fn landmark_dim(&self) -> usize {
        if self.mode == BaMode::Ba {
            3
        } else {
            2
        }
    }

    fn landmark_offset(&self) -> usize {
        self.plane_dim() + 3 * (self.rotations.len() - 1)
    }

    /// World point of landmark `j` and, for planar modes, the in-plane
    /// local vector `(u, v, −d)`.
    fn point(&self, state: &BaState, j: usize) -> (Vector3<f64>, Vector3<f64>) {
        let l = state.landmarks[j];
        match self.mode {
            BaMode::Ba => (l, l),
            BaMode::Pba | BaMode::Fpba => {
                let local = Vector3::new(l.x, l.y, -self.distance);
                (state.plane_rotation * local, local)
            }
        }
    }

    fn position(&self, state: &BaState, frame: usize) -> Vector3<f64> {
        if frame == 0 {
            self.reference_position
        } else {
            state.positions[frame - 1]
        }
    }

    pub fn residual_count(&self) -> usize {
        2 * self.observations.len()
    }
}

impl LeastSquaresProblem for BaProblem {
    type State = BaState;

    fn tangent_dim(&self) -> usize {
        self.landmark_offset() + self.landmark_dim() * self.landmark_count
    }

    fn linearize(&self, state: &BaState, jacobians: bool) -> Result<Vec<ResidualBlock>> {
        let plane_r = state.plane_rotation.to_rotation_matrix().into_inner();
        let lm_offset = self.landmark_offset();
        let lm_dim = self.landmark_dim();
        let mut blocks = Vec::with_capacity(self.observations.len());
        for o in &self.observations {
            let (point, local) = self.point(state, o.landmark);
            let c = self.position(state, o.frame);
            let kr = self.k * self.rotations[o.frame];
            let h = kr * (point - c);
            if !(h.z.abs() > MIN_HOMOGENEOUS_Z) || !h.iter().all(|v| v.is_finite()) {
                blocks.push(ResidualBlock::new(Vector2::repeat(CAPPED_RESIDUAL)));
                continue;
            }
            let iz = 1.0 / h.z;
            let mut block = ResidualBlock::new(Vector2::new(h.x * iz, h.y * iz) - o.pixel);
            if jacobians {
                let dr_dh = Matrix2x3::new(iz, 0.0, -h.x * iz * iz, 0.0, iz, -h.y * iz * iz);
                let dr_dp = dr_dh * kr;
                if o.frame > 0 {
                    block.push(self.plane_dim() + 3 * (o.frame - 1), 3, -dr_dp);
                }
                let off = lm_offset + lm_dim * o.landmark;
                match self.mode {
                    BaMode::Ba => block.push(off, 3, dr_dp),
                    BaMode::Pba | BaMode::Fpba => {
                        let mut d_uv = Matrix2x3::zeros();
                        let dp = dr_dp * plane_r;
                        d_uv.set_column(0, &dp.column(0));
                        d_uv.set_column(1, &dp.column(1));
                        block.push(off, 2, d_uv);
                        if self.mode == BaMode::Pba {
                            block.push(0, 3, -(dr_dp * plane_r * skew(&local)));
                        }
                    }
                }
            }
            blocks.push(block);
        }
        Ok(blocks)
    }

    fn retract(&self, state: &BaState, delta: &DVector<f64>) -> BaState {
        let plane_rotation = if self.mode == BaMode::Pba {
            state.plane_rotation * UnitQuaternion::from_scaled_axis(Vector3::new(delta[0], delta[1], delta[2]))
        } else {
            state.plane_rotation
        };
        let p0 = self.plane_dim();
        let positions = state
            .positions
            .iter()
            .enumerate()
            .map(|(f, c)| c + Vector3::new(delta[p0 + 3 * f], delta[p0 + 3 * f + 1], delta[p0 + 3 * f + 2]))
            .collect();
        let off = self.landmark_offset();
        let dim = self.landmark_dim();
        let landmarks = state
            .landmarks
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let b = off + dim * j;
                if dim == 3 {
                    l + Vector3::new(delta[b], delta[b + 1], delta[b + 2])
                } else {
                    l + Vector3::new(delta[b], delta[b + 1], 0.0)
                }
            })
            .collect();
        BaState {
            positions,
            landmarks,
            plane_rotation,
        }
    }

    fn state_norm(&self, state: &BaState) -> f64 {
        (1.0 + state.positions.iter().map(|c| c.norm_squared()).sum::<f64>()
            + state.landmarks.iter().map(|l| l.norm_squared()).sum::<f64>())
        .sqrt()
    }

    fn schur_split(&self) -> Option<SchurSplit> {
        Some(SchurSplit {
            start: self.landmark_offset(),
            block: self.landmark_dim(),
        })
    }
}

/// Problem and initial state built from an initializer's output. Only tracks
/// with an initial landmark take part.
pub fn build_ba_problem(window: &FrameWindow, init: &InitializationResult, mode: BaMode) -> Result<(BaProblem, BaState, Vec<TrackId>)> {
    if init.poses.len() != window.len() {
        return Err(Error::InvalidWindow(format!(
            "{} initial poses for {} frames",
            init.poses.len(),
            window.len()
        )));
    }
    let (plane_rotation, distance) = match mode {
        BaMode::Ba => (UnitQuaternion::identity(), 0.0),
        BaMode::Pba | BaMode::Fpba => {
            let plane = init
                .plane
                .ok_or(Error::InvalidConfig("planar bundle adjustment needs an initial plane".into()))?;
            if !(plane.distance().abs() > crate::constants::MIN_PLANE_DISTANCE) {
                return Err(Error::DegeneratePlane);
            }
            (quaternion_from_normal(&plane.normal()), plane.distance())
        }
    };
    let index: BTreeMap<TrackId, usize> = init.landmarks.iter().enumerate().map(|(j, l)| (l.id, j)).collect();
    let ids: Vec<TrackId> = init.landmarks.iter().map(|l| l.id).collect();
    let landmarks = init
        .landmarks
        .iter()
        .map(|l| match mode {
            BaMode::Ba => l.position,
            BaMode::Pba | BaMode::Fpba => {
                let local = plane_rotation.inverse() * l.position;
                Vector3::new(local.x, local.y, 0.0)
            }
        })
        .collect();
    let mut observations = Vec::new();
    for (f, frame) in window.frames().iter().enumerate() {
        for (id, pixel) in &frame.observations {
            if let Some(&j) = index.get(id) {
                observations.push(BaObservation {
                    frame: f,
                    landmark: j,
                    pixel: *pixel,
                });
            }
        }
    }
    let problem = BaProblem {
        mode,
        k: window.intrinsics().matrix(),
        rotations: window.frames().iter().map(|f| f.rotation.matrix()).collect(),
        reference_position: init.poses[0].position,
        distance,
        observations,
        landmark_count: init.landmarks.len(),
    };
    let state = BaState {
        positions: init.poses[1..].iter().map(|p| p.position).collect(),
        landmarks,
        plane_rotation,
    };
    Ok((problem, state, ids))
}

/// Refines an initialization by minimizing reprojection error.
pub fn bundle_adjust(
    window: &FrameWindow,
    init: &InitializationResult,
    mode: BaMode,
    config: &SolverConfig,
) -> Result<InitializationResult> {
    let start = Instant::now();
    let (problem, state, ids) = build_ba_problem(window, init, mode)?;
    let summary = solver::solve(&problem, state, config)?;
    let optimization = start.elapsed();
    let s = &summary.state;
    let poses = window
        .frames()
        .iter()
        .enumerate()
        .map(|(f, frame)| Pose::new(frame.rotation, problem.position(s, f)))
        .collect();
    let landmarks = ids
        .iter()
        .enumerate()
        .map(|(j, id)| Landmark {
            id: *id,
            position: problem.point(s, j).0,
        })
        .collect();
    let plane = match mode {
        BaMode::Ba => None,
        BaMode::Pba | BaMode::Fpba => Some(PlaneParams::new(s.plane_rotation * Vector3::z(), problem.distance)?),
    };
    Ok(InitializationResult {
        method: init.method.clone(),
        poses,
        plane,
        landmarks,
        dropped_tracks: init.dropped_tracks.clone(),
        timing: Timing {
            total: init.timing.total + start.elapsed(),
            optimization,
        },
        iterations: summary.iterations,
        converged: summary.converged(),
        low_confidence: init.low_confidence,
    })
}
