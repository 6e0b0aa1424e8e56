//! Global plane optimization: the plane normal and every scaled frame
//! translation are estimated jointly by minimizing the transfer error of the
//! plane-induced homographies between the reference frame and each other
//! frame of the window.
//!
//! Gauge: the reference camera sits at the world origin and the plane is
//! `nᵀP − 1 = 0`, so the optimized offsets are camera positions directly.

use std::time::Instant;

use nalgebra::{DVector, Matrix2x3, Matrix3, UnitQuaternion, Vector2, Vector3};

use crate::constants::{CAPPED_RESIDUAL, MIN_HOMOGENEOUS_Z, MIN_PARALLAX_PX, MIN_SHARED_TRACKS};
use crate::error::{Error, Result};
use crate::estimation::{pair_homographies, plane_consistent_tracks, RansacConfig};
use crate::geometry::{quaternion_from_normal, reconstruct_landmarks, skew, PlaneParams, Pose};
use crate::solver::{self, LeastSquaresProblem, ResidualBlock, SchurSplit, SolverConfig, Termination};
use crate::window::{FrameWindow, InitializationResult, Timing, TrackId};

/// Plane distance in the optimization gauge.
pub const GAUGE_DISTANCE: f64 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GpoState {
    /// Rotation taking `+z` onto the world plane normal.
    pub normal_rotation: UnitQuaternion<f64>,
    /// Scaled world-frame offsets of frames 2..m; frame 1 is fixed at zero.
    pub translations: Vec<Vector3<f64>>,
}

impl GpoState {
    pub fn from_normal(normal: &Vector3<f64>, translations: Vec<Vector3<f64>>) -> Result<Self> {
        let norm = normal.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegeneratePlane);
        }
        Ok(Self {
            normal_rotation: quaternion_from_normal(&(normal / norm)),
            translations,
        })
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal_rotation * Vector3::z()
    }

    /// Offset of frame `i` (0-based), zero for the reference.
    pub fn translation(&self, i: usize) -> Vector3<f64> {
        if i == 0 {
            Vector3::zeros()
        } else {
            self.translations[i - 1]
        }
    }

    /// Camera positions of every frame, reference first.
    pub fn positions(&self) -> Vec<Vector3<f64>> {
        std::iter::once(Vector3::zeros())
            .chain(self.translations.iter().copied())
            .collect()
    }

    pub fn plane(&self) -> Result<PlaneParams> {
        PlaneParams::new(self.normal(), GAUGE_DISTANCE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpoResult {
    pub state: GpoState,
    pub initial_cost: f64,
    /// `½ Σ ‖r‖²` at the returned state.
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Number of scalar residuals, `2 Σ nᵢ` over frames 2..m.
    pub residual_count: usize,
    /// Transfers that hit the homogeneous-depth guard at the final state.
    pub degenerate_transfers: usize,
    /// Median rotation-compensated parallax is below the observability bound.
    pub low_confidence: bool,
    pub cost_history: Vec<f64>,
}

/// Zero translations and the reference camera's optical axis as normal.
pub fn initial_state(window: &FrameWindow) -> GpoState {
    let normal = window.reference().rotation.inverse().rotate(&Vector3::z());
    GpoState {
        normal_rotation: quaternion_from_normal(&normal),
        translations: vec![Vector3::zeros(); window.len() - 1],
    }
}

struct Observation {
    /// `R₁ᵀ K⁻¹ p₁`.
    ray: Vector3<f64>,
    pixel: Vector2<f64>,
}

/// Transfer-error problem over `[δ normal (3) | t₂ | … | t_m]`.
pub struct GpoProblem {
    /// `K Rᵢ` for frames 2..m.
    projections: Vec<Matrix3<f64>>,
    observations: Vec<Vec<Observation>>,
}

impl GpoProblem {
    pub fn new(window: &FrameWindow) -> Result<Self> {
        let k = window.intrinsics();
        let r1t = window.reference().rotation.inverse();
        let mut projections = Vec::with_capacity(window.len() - 1);
        let mut observations = Vec::with_capacity(window.len() - 1);
        for i in 1..window.len() {
            let obs: Vec<Observation> = window
                .shared(i)
                .map(|(_, p1, pi)| Observation {
                    ray: r1t.rotate(&k.unproject(&p1)),
                    pixel: pi,
                })
                .collect();
            if obs.len() < MIN_SHARED_TRACKS {
                return Err(Error::InsufficientTracks {
                    frame: i,
                    found: obs.len(),
                    required: MIN_SHARED_TRACKS,
                });
            }
            projections.push(k.matrix() * window.frames()[i].rotation.matrix());
            observations.push(obs);
        }
        Ok(Self {
            projections,
            observations,
        })
    }

    pub fn residual_count(&self) -> usize {
        2 * self.observations.iter().map(Vec::len).sum::<usize>()
    }

    fn check_state(&self, state: &GpoState) -> Result<()> {
        if state.translations.len() != self.projections.len() {
            return Err(Error::InvalidWindow(format!(
                "state has {} translations for {} non-reference frames",
                state.translations.len(),
                self.projections.len()
            )));
        }
        Ok(())
    }

    /// Residual blocks plus the number of capped (degenerate) transfers.
    fn evaluate(&self, state: &GpoState, jacobians: bool) -> (Vec<ResidualBlock>, usize) {
        let n = state.normal();
        // dn/dδ for n = q Exp(δ) e_z
        let dn = -(state.normal_rotation.to_rotation_matrix().matrix() * skew(&Vector3::z()));
        let mut blocks = Vec::with_capacity(self.residual_count() / 2);
        let mut degenerate = 0;
        for (f, (proj, obs)) in self.projections.iter().zip(&self.observations).enumerate() {
            let t = state.translations[f];
            let offset = 3 + 3 * f;
            let proj_t = proj * t;
            for o in obs {
                let s = n.dot(&o.ray);
                let h = proj * (o.ray - t * s);
                if !(h.z.abs() > MIN_HOMOGENEOUS_Z) || !h.iter().all(|v| v.is_finite()) {
                    degenerate += 1;
                    blocks.push(ResidualBlock::new(Vector2::repeat(CAPPED_RESIDUAL)));
                    continue;
                }
                let iz = 1.0 / h.z;
                let r = o.pixel - Vector2::new(h.x * iz, h.y * iz);
                let mut block = ResidualBlock::new(r);
                if jacobians {
                    let dr_dh = Matrix2x3::new(-iz, 0.0, h.x * iz * iz, 0.0, -iz, h.y * iz * iz);
                    // dh/dn = −K Rᵢ t aᵀ, dh/dt = −s K Rᵢ
                    let dh_dn = -proj_t * o.ray.transpose();
                    block.push(0, 3, dr_dh * dh_dn * dn);
                    block.push(offset, 3, dr_dh * proj * (-s));
                }
                blocks.push(block);
            }
        }
        (blocks, degenerate)
    }
}

impl LeastSquaresProblem for GpoProblem {
    type State = GpoState;

    fn tangent_dim(&self) -> usize {
        3 + 3 * self.projections.len()
    }

    fn linearize(&self, state: &GpoState, jacobians: bool) -> Result<Vec<ResidualBlock>> {
        self.check_state(state)?;
        Ok(self.evaluate(state, jacobians).0)
    }

    fn retract(&self, state: &GpoState, delta: &DVector<f64>) -> GpoState {
        let dq = UnitQuaternion::from_scaled_axis(Vector3::new(delta[0], delta[1], delta[2]));
        GpoState {
            normal_rotation: state.normal_rotation * dq,
            translations: state
                .translations
                .iter()
                .enumerate()
                .map(|(f, t)| t + Vector3::new(delta[3 + 3 * f], delta[4 + 3 * f], delta[5 + 3 * f]))
                .collect(),
        }
    }

    fn state_norm(&self, state: &GpoState) -> f64 {
        (1.0 + state.translations.iter().map(|t| t.norm_squared()).sum::<f64>()).sqrt()
    }

    fn schur_split(&self) -> Option<SchurSplit> {
        Some(SchurSplit { start: 3, block: 3 })
    }
}

/// Stacked transfer residuals, frames outer and tracks (by id) inner.
pub fn gpo_residuals(state: &GpoState, window: &FrameWindow) -> Result<DVector<f64>> {
    let problem = GpoProblem::new(window)?;
    Ok(solver::residual_vector(&problem.linearize(state, false)?))
}

/// Median over tracks of the distance between the last observation and the
/// rotation-only transfer of the reference pixel.
pub fn median_parallax(window: &FrameWindow) -> f64 {
    let k = window.intrinsics();
    let r1t = window.reference().rotation.inverse().matrix();
    let mut last = std::collections::BTreeMap::new();
    for (i, frame) in window.frames().iter().enumerate().skip(1) {
        for id in frame.observations.keys() {
            last.insert(*id, i);
        }
    }
    let mut parallax: Vec<f64> = last
        .iter()
        .filter_map(|(id, &i)| {
            let frame = &window.frames()[i];
            let p1 = window.reference().observations[id];
            let h = k.matrix() * frame.rotation.matrix() * r1t * k.unproject(&p1);
            crate::geometry::normalize_pi(&h)
                .ok()
                .map(|p| (p - frame.observations[id]).norm())
        })
        .collect();
    if parallax.is_empty() {
        return 0.0;
    }
    parallax.sort_by(f64::total_cmp);
    let mid = parallax.len() / 2;
    if parallax.len() % 2 == 1 {
        parallax[mid]
    } else {
        0.5 * (parallax[mid - 1] + parallax[mid])
    }
}

pub fn solve_gpo(window: &FrameWindow, config: &SolverConfig) -> Result<GpoResult> {
    solve_gpo_from(window, initial_state(window), config)
}

pub fn solve_gpo_from(window: &FrameWindow, initial: GpoState, config: &SolverConfig) -> Result<GpoResult> {
    let problem = GpoProblem::new(window)?;
    problem.check_state(&initial)?;
    let summary = solver::solve(&problem, initial, config)?;
    let (_, degenerate) = problem.evaluate(&summary.state, false);
    Ok(GpoResult {
        residual_count: problem.residual_count(),
        degenerate_transfers: degenerate,
        low_confidence: median_parallax(window) < MIN_PARALLAX_PX,
        converged: summary.converged(),
        termination: summary.termination,
        initial_cost: summary.initial_cost,
        final_cost: summary.final_cost,
        iterations: summary.iterations,
        cost_history: summary.cost_history,
        state: summary.state,
    })
}

/// Full initializer: optional RANSAC track filtering, plane optimization and
/// planar landmark recovery.
pub fn run_gpo_pipeline(
    window: &FrameWindow,
    ransac: Option<&RansacConfig>,
    config: &SolverConfig,
    seed: u64,
) -> Result<InitializationResult> {
    let start = Instant::now();
    let filtered;
    let (window, mut dropped) = match ransac {
        Some(rc) => {
            let fits = pair_homographies(window, rc, seed)?;
            let keep = plane_consistent_tracks(window, &fits, rc);
            let dropped: Vec<TrackId> = window.track_ids().filter(|id| !keep.contains(id)).collect();
            filtered = window.retain_tracks(&keep);
            (&filtered, dropped)
        }
        None => (window, Vec::new()),
    };
    let optim_start = Instant::now();
    let result = solve_gpo(window, config)?;
    let optimization = optim_start.elapsed();

    let poses: Vec<Pose> = window
        .frames()
        .iter()
        .zip(result.state.positions())
        .map(|(f, c)| Pose::new(f.rotation, c))
        .collect();
    let plane = result.state.plane()?;
    let recon = reconstruct_landmarks(window, &poses, &plane)?;
    dropped.extend(recon.dropped);
    dropped.sort();
    Ok(InitializationResult {
        method: if ransac.is_some() { "GPO" } else { "GPO_noRANSAC" }.to_string(),
        poses,
        plane: Some(plane),
        landmarks: recon.landmarks,
        dropped_tracks: dropped,
        timing: Timing {
            total: start.elapsed(),
            optimization,
        },
        iterations: result.iterations,
        converged: result.converged,
        low_confidence: result.low_confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use crate::synth::{generate_scene, GroundTruth, SceneConfig, Trajectory};
    use crate::window::Frame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn truth_state(gt: &GroundTruth) -> GpoState {
        let (n, t) = gt.scaled_translations();
        GpoState::from_normal(&n, t[1..].to_vec()).unwrap()
    }

    fn scene(seed: u64, frames: usize) -> (FrameWindow, GroundTruth) {
        generate_scene(&SceneConfig {
            frames,
            seed,
            ..SceneConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn initial_state_follows_reference_axis() {
        let (window, _) = scene(0, 4);
        let s = initial_state(&window);
        assert_eq!(s.translations.len(), 3);
        assert!(s.translations.iter().all(|t| *t == Vector3::zeros()));
        let expected = window.reference().rotation.inverse().rotate(&Vector3::z());
        assert!((s.normal() - expected).norm() < 1e-12);

        let rot = Rotation::from_scaled_axis(Vector3::x() * std::f64::consts::FRAC_PI_2);
        let frames: Vec<Frame> = window.frames().iter().map(|f| Frame::new(rot, f.observations.clone())).collect();
        let w = FrameWindow::new(*window.intrinsics(), frames).unwrap();
        assert!((initial_state(&w).normal() - rot.inverse().rotate(&Vector3::z())).norm() < 1e-12);
    }

    #[test]
    fn truth_has_zero_residuals_and_expected_length() {
        let (window, gt) = scene(1, 8);
        let r = gpo_residuals(&truth_state(&gt), &window).unwrap();
        let expected: usize = (1..window.len()).map(|i| 2 * window.shared(i).count()).sum();
        assert_eq!(r.len(), expected);
        assert!(r.amax() < 1e-9, "{}", r.amax());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let (window, gt) = scene(2, 6);
        let problem = GpoProblem::new(&window).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = truth_state(&gt);
        for _ in 0..20 {
            let mut delta = DVector::zeros(problem.tangent_dim());
            for v in delta.iter_mut() {
                *v = rng.random_range(-0.05..0.05);
            }
            let state = problem.retract(&base, &delta);
            let blocks = problem.linearize(&state, true).unwrap();
            let analytic = solver::dense_jacobian(&blocks, problem.tangent_dim());
            let mut numeric = analytic.clone() * 0.0;
            let eps = 1e-6;
            for c in 0..problem.tangent_dim() {
                let mut e = DVector::zeros(problem.tangent_dim());
                e[c] = eps;
                let plus = solver::residual_vector(&problem.linearize(&problem.retract(&state, &e), false).unwrap());
                let minus = solver::residual_vector(&problem.linearize(&problem.retract(&state, &-e), false).unwrap());
                numeric.set_column(c, &((plus - minus) / (2.0 * eps)));
            }
            let err = (&analytic - &numeric).norm() / numeric.norm();
            assert!(err < 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn recovers_noise_free_scene() {
        let (window, gt) = scene(3, 10);
        let result = solve_gpo(&window, &SolverConfig::default()).unwrap();
        let (n, t) = gt.scaled_translations();
        assert!(result.state.normal().angle(&n) < 1e-6);
        for (est, truth) in result.state.translations.iter().zip(&t[1..]) {
            assert!((est - truth).norm() < 1e-8);
        }
        assert!(result.converged);
        assert!(!result.low_confidence);
    }

    #[test]
    fn stationary_at_truth() {
        let (window, gt) = scene(4, 6);
        let result = solve_gpo_from(&window, truth_state(&gt), &SolverConfig::default()).unwrap();
        assert!(result.iterations <= 2);
        assert!(result.final_cost < 1e-18);
    }

    #[test]
    fn pure_rotation_is_flagged() {
        let (window, _) = generate_scene(&SceneConfig {
            frames: 6,
            trajectory: Trajectory::PureRotation,
            ..SceneConfig::default()
        })
        .unwrap();
        let init = initial_state(&window);
        let result = solve_gpo(&window, &SolverConfig::default()).unwrap();
        assert!(result.low_confidence);
        assert!(result.state.translations.iter().all(|t| t.norm() < 1e-9));
        assert!(result.state.normal().angle(&init.normal()) < 1e-9);
    }

    #[test]
    fn duplicate_reference_frame_gets_zero_translation() {
        let (window, _) = scene(5, 6);
        let mut frames = window.frames().to_vec();
        frames.push(window.reference().clone());
        let w = FrameWindow::new(*window.intrinsics(), frames).unwrap();
        let result = solve_gpo(&w, &SolverConfig::default()).unwrap();
        assert!(result.state.translations.last().unwrap().norm() <= 1e-6);
    }

    #[test]
    fn scaling_needs_matching_distance() {
        let (window, gt) = scene(6, 6);
        let problem = GpoProblem::new(&window).unwrap();
        let cost_of = |s: &GpoState| solver::cost(&problem.linearize(s, false).unwrap(), &Default::default());

        // scene scaled about the reference camera: same scaled translations
        let mut scaled = gt.clone();
        for p in &mut scaled.poses {
            p.position *= 2.5;
        }
        scaled.plane = PlaneParams::new(gt.plane.normal(), gt.plane.distance() * 2.5).unwrap();
        let a = truth_state(&gt);
        let b = truth_state(&scaled);
        assert!((cost_of(&a) - cost_of(&b)).abs() < 1e-12);

        // translations scaled with the distance held fixed
        let mut c = a.clone();
        for t in &mut c.translations {
            *t *= 1.5;
        }
        assert!(cost_of(&c) > cost_of(&a) + 1e-6);
    }

    #[test]
    fn deterministic() {
        let (window, _) = generate_scene(&SceneConfig {
            frames: 8,
            noise_px: 1.0,
            seed: 7,
            ..SceneConfig::default()
        })
        .unwrap();
        let a = solve_gpo(&window, &SolverConfig::default()).unwrap();
        let b = solve_gpo(&window, &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_tracks() {
        let (window, _) = scene(8, 3);
        let keep: std::collections::BTreeSet<TrackId> = window.track_ids().take(3).collect();
        let w = window.retain_tracks(&keep);
        assert!(matches!(
            solve_gpo(&w, &SolverConfig::default()),
            Err(Error::InsufficientTracks { frame: 1, found: 3, .. })
        ));
    }

    #[test]
    fn pipeline_with_ransac_keeps_plane_points() {
        let (window, gt) = generate_scene(&SceneConfig {
            frames: 10,
            clutter_points: 20,
            noise_px: 0.5,
            seed: 9,
            ..SceneConfig::default()
        })
        .unwrap();
        let result = run_gpo_pipeline(&window, Some(&RansacConfig::default()), &SolverConfig::default(), 0).unwrap();
        let plane_ids = gt.on_plane_ids();
        assert!(result.landmarks.iter().all(|l| plane_ids.contains(&l.id)));
        assert_eq!(result.poses.len(), 10);
        assert_eq!(result.method, "GPO");
    }
}
