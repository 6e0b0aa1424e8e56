//! Synthetic planar scenes with ground truth.
//!
//! A chessboard-like grid of points lies on a tilted plane roughly one metre
//! in front of the first camera; optional clutter floats above it. Cameras
//! follow one of a few motion patterns while looking at the grid. Noise,
//! outliers and rotation errors each draw from their own random stream, so
//! changing one of them leaves the others (and the geometry) untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, PlaneParams, Pose, Rotation};
use crate::window::{Frame, FrameWindow, TrackId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    Orbit,
    Lateral,
    Forward,
    PureRotation,
    RandomWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Number of frames `m`.
    pub frames: usize,
    /// Points on the plane grid.
    pub plane_points: usize,
    /// Off-plane points above the grid.
    pub clutter_points: usize,
    /// Side length of the square grid (metres).
    pub grid_extent: f64,
    pub trajectory: Trajectory,
    /// Camera travel per frame (metres).
    pub step: f64,
    /// Range of the initial camera-to-plane distance (metres).
    pub min_distance: f64,
    pub max_distance: f64,
    /// Largest tilt of the plane away from the first optical axis (degrees).
    pub max_tilt_deg: f64,
    /// Gaussian pixel noise sigma.
    pub noise_px: f64,
    /// Fraction of observations replaced by uniform random pixels.
    pub outlier_ratio: f64,
    /// Sigma of the rotation perturbation applied to frames after the first (degrees).
    pub rotation_noise_deg: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub intrinsics: CameraIntrinsics,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            frames: 10,
            plane_points: 100,
            clutter_points: 0,
            grid_extent: 0.5,
            trajectory: Trajectory::Orbit,
            step: 0.01,
            min_distance: 0.5,
            max_distance: 1.5,
            max_tilt_deg: 30.0,
            noise_px: 0.0,
            outlier_ratio: 0.0,
            rotation_noise_deg: 0.0,
            image_width: 640,
            image_height: 480,
            intrinsics: CameraIntrinsics {
                fx: 500.0,
                fy: 500.0,
                cx: 320.0,
                cy: 240.0,
            },
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.frames < 2 {
            return bad("scene needs at least 2 frames");
        }
        if self.plane_points < 4 {
            return bad("scene needs at least 4 plane points");
        }
        if !(self.noise_px >= 0.0) || !(self.rotation_noise_deg >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if !(0.0..1.0).contains(&self.outlier_ratio) {
            return bad("outlier ratio must lie in [0, 1)");
        }
        if !(self.grid_extent > 0.0) || !(self.step >= 0.0) {
            return bad("grid extent must be positive and step non-negative");
        }
        if !(self.min_distance > 0.0 && self.min_distance <= self.max_distance) {
            return bad("distance range must be positive and ordered");
        }
        if self.image_width == 0 || self.image_height == 0 {
            return bad("image size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthLandmark {
    pub id: TrackId,
    pub position: Vector3<f64>,
    pub on_plane: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Metric camera poses.
    pub poses: Vec<Pose>,
    pub plane: PlaneParams,
    pub landmarks: Vec<TruthLandmark>,
    /// Exact projections of the retained tracks, per frame.
    pub clean_pixels: Vec<BTreeMap<TrackId, Vector2<f64>>>,
    /// Observations replaced by random pixels, as `(frame, track)`.
    pub outliers: BTreeSet<(usize, TrackId)>,
}

impl GroundTruth {
    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.position).collect()
    }

    pub fn on_plane_ids(&self) -> BTreeSet<TrackId> {
        self.landmarks
            .iter()
            .filter(|l| l.on_plane)
            .map(|l| l.id)
            .collect()
    }

    pub fn landmark(&self, id: TrackId) -> Option<&TruthLandmark> {
        self.landmarks.iter().find(|l| l.id == id)
    }

    /// Plane-distance-scaled world offsets `(C₁ − Cᵢ) / d₁` and the plane
    /// normal oriented so that `d₁ = nᵀC₁ + d < 0`, i.e. the unknowns of the
    /// global plane optimization at the true solution.
    pub fn scaled_translations(&self) -> (Vector3<f64>, Vec<Vector3<f64>>) {
        let c1 = self.poses[0].position;
        let mut n = self.plane.normal();
        let mut d1 = n.dot(&c1) + self.plane.distance();
        if d1 > 0.0 {
            n = -n;
            d1 = -d1;
        }
        let t = self.poses.iter().map(|p| (c1 - p.position) / d1).collect();
        (n, t)
    }
}

const GEOMETRY_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const OUTLIER_STREAM: u64 = 2;
const ROTATION_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// World-to-camera rotation of a camera at `center` looking at `target`,
/// image y pointing along world +y as much as possible.
fn look_at(center: &Vector3<f64>, target: &Vector3<f64>) -> Rotation {
    let z = (target - center).normalize();
    let mut x = Vector3::y().cross(&z);
    if x.norm() < 1e-9 {
        x = Vector3::x();
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let m = nalgebra::Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    Rotation::from_matrix(&m)
}

/// Camera centres and look-at targets in the local frame (first camera at
/// the origin, grid centre at `(0, 0, distance)`).
fn trajectory(
    config: &SceneConfig,
    distance: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let m = config.frames;
    let step = config.step;
    let centre = Vector3::new(0.0, 0.0, distance);
    let mut out = Vec::with_capacity(m);
    let mut walk = Vector3::zeros();
    for i in 0..m {
        let fi = i as f64;
        let (c, target) = match config.trajectory {
            Trajectory::Orbit => {
                let angle = fi * step / distance;
                let rot = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), angle);
                let mut c = centre + rot * (-centre);
                c.y += 3.0 * step * (0.7 * fi).sin();
                (c, centre)
            }
            Trajectory::Lateral => (
                Vector3::new(fi * step, 0.3 * step * (0.9 * fi).sin(), 0.0),
                centre,
            ),
            Trajectory::Forward => {
                let advance = step.min(0.5 * distance / m as f64);
                (
                    Vector3::new(
                        0.3 * step * (0.8 * fi).sin(),
                        0.3 * step * ((0.6 * fi).cos() - 1.0),
                        fi * advance,
                    ),
                    centre,
                )
            }
            Trajectory::PureRotation => {
                let r = 0.01 * fi;
                (
                    Vector3::zeros(),
                    centre + Vector3::new(r * (0.3 * fi).cos(), r * (0.3 * fi).sin(), 0.0),
                )
            }
            Trajectory::RandomWalk => {
                if i > 0 {
                    walk += random_unit(rng) * step;
                    // stay on the camera side of the grid
                    walk.z = walk.z.min(0.5 * distance);
                }
                (walk, centre)
            }
        };
        out.push((c, target));
    }
    out
}

/// Generates a window of noisy observations and its ground truth.
pub fn generate_scene(config: &SceneConfig) -> Result<(FrameWindow, GroundTruth)> {
    config.validate()?;
    let mut rng = stream(config.seed, GEOMETRY_STREAM);
    let k = config.intrinsics;

    let distance = rng.random_range(config.min_distance..=config.max_distance);
    let tilt_axis = {
        let phi = rng.random_range(0.0..2.0 * PI);
        Vector3::new(phi.cos(), phi.sin(), 0.0)
    };
    let tilt = rng.random_range(0.0..=config.max_tilt_deg.to_radians());
    let tilt_rot = UnitQuaternion::from_scaled_axis(tilt_axis * tilt);
    let n_local = tilt_rot * Vector3::z();
    let e1 = tilt_rot * Vector3::x();
    let e2 = tilt_rot * Vector3::y();
    let centre = Vector3::new(0.0, 0.0, distance);

    // grid, row-major
    let side = (config.plane_points as f64).sqrt().ceil() as usize;
    let side = side.max(2);
    let spacing = config.grid_extent / (side - 1) as f64;
    let half = config.grid_extent / 2.0;
    let mut local_points: Vec<(Vector3<f64>, bool)> = (0..config.plane_points)
        .map(|j| {
            let a = -half + (j % side) as f64 * spacing;
            let b = -half + (j / side) as f64 * spacing;
            (centre + e1 * a + e2 * b, true)
        })
        .collect();
    for _ in 0..config.clutter_points {
        let a = rng.random_range(-half..=half);
        let b = rng.random_range(-half..=half);
        let h = rng.random_range(0.05..=0.3f64).max(0.05 + 1e-6);
        local_points.push((centre + e1 * a + e2 * b - n_local * h, false));
    }

    let path = trajectory(config, distance, &mut rng);
    let world = UnitQuaternion::from_scaled_axis(random_unit(&mut rng) * rng.random_range(0.0..PI));
    let poses: Vec<Pose> = path
        .iter()
        .map(|(c, target)| {
            let jitter = Vector3::new(
                rng.random_range(-0.005..=0.005),
                rng.random_range(-0.005..=0.005),
                rng.random_range(-0.005..=0.005),
            );
            let local = look_at(c, &(target + jitter));
            let r = local.compose(&Rotation::from_unit_quaternion(world.inverse()));
            Pose::new(r, world * c)
        })
        .collect();
    let n_world = world * n_local;
    let plane = PlaneParams::new(n_world, -n_world.dot(&(world * centre)))?;
    let landmarks: Vec<TruthLandmark> = local_points
        .iter()
        .enumerate()
        .map(|(j, (p, on_plane))| TruthLandmark {
            id: TrackId(j as u32),
            position: world * p,
            on_plane: *on_plane,
        })
        .collect();

    // visibility
    let (w, h) = (config.image_width as f64, config.image_height as f64);
    let mut clean: Vec<BTreeMap<TrackId, Vector2<f64>>> = vec![BTreeMap::new(); config.frames];
    for lm in &landmarks {
        let mut obs = Vec::new();
        for (i, pose) in poses.iter().enumerate() {
            let x = pose.world_to_camera(&lm.position);
            if x.z <= 1e-6 {
                continue;
            }
            let px = k.pixel_of_normalized(&Vector2::new(x.x / x.z, x.y / x.z));
            if px.x >= 0.0 && px.x < w && px.y >= 0.0 && px.y < h {
                obs.push((i, px));
            }
        }
        let seeded = obs.first().is_some_and(|(i, _)| *i == 0);
        if seeded && obs.len() >= 2 {
            for (i, px) in obs {
                clean[i].insert(lm.id, px);
            }
        }
    }
    if let Some(i) = clean.iter().position(|f| f.len() < 4) {
        return Err(Error::InvisibleScene(i));
    }

    // noise then outliers, each on its own stream
    let mut noise_rng = stream(config.seed, NOISE_STREAM);
    let mut outlier_rng = stream(config.seed, OUTLIER_STREAM);
    let noise = Normal::new(0.0, config.noise_px.max(0.0))
        .map_err(|_| Error::InvalidConfig("bad noise sigma".into()))?;
    let mut outliers = BTreeSet::new();
    let mut observed = Vec::with_capacity(config.frames);
    for (i, frame) in clean.iter().enumerate() {
        let mut obs = BTreeMap::new();
        for (id, px) in frame {
            let dx: f64 = noise.sample(&mut noise_rng);
            let dy: f64 = noise.sample(&mut noise_rng);
            let mut p = px + Vector2::new(dx, dy);
            let u: f64 = outlier_rng.random();
            let random_px = Vector2::new(outlier_rng.random_range(0.0..w), outlier_rng.random_range(0.0..h));
            if u < config.outlier_ratio {
                p = random_px;
                outliers.insert((i, *id));
            }
            obs.insert(*id, p);
        }
        observed.push(obs);
    }

    let frames = poses
        .iter()
        .zip(observed)
        .map(|(pose, obs)| Frame::new(pose.rotation, obs))
        .collect();
    let window = FrameWindow::new(k, frames)?;
    let window = perturb_rotations(&window, config.rotation_noise_deg, config.seed);
    let truth = GroundTruth {
        poses,
        plane,
        landmarks,
        clean_pixels: clean,
        outliers,
    };
    Ok((window, truth))
}

/// Right-multiplies every rotation but the first by a random-axis rotation
/// whose angle is drawn from `N(0, sigma_deg²)`.
pub fn perturb_rotations(window: &FrameWindow, sigma_deg: f64, seed: u64) -> FrameWindow {
    if !(sigma_deg > 0.0) {
        return window.clone();
    }
    let mut rng = stream(seed, ROTATION_STREAM);
    let sigma = sigma_deg.to_radians();
    let rotations: Vec<Rotation> = window
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let axis = random_unit(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            if i == 0 {
                f.rotation
            } else {
                f.rotation.compose(&Rotation::from_scaled_axis(axis * (z * sigma)))
            }
        })
        .collect();
    window
        .with_rotations(&rotations)
        .expect("rotation count matches the window")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;

    #[test]
    fn noise_free_observations_are_exact() {
        let (window, truth) = generate_scene(&SceneConfig::default()).unwrap();
        let k = window.intrinsics();
        for (i, frame) in window.frames().iter().enumerate() {
            for (id, px) in &frame.observations {
                let lm = truth.landmark(*id).unwrap();
                let (exact, _) = project(k, &truth.poses[i], &lm.position).unwrap();
                assert!((exact - px).norm() < 1e-9);
            }
            assert_eq!(frame.rotation, truth.poses[i].rotation);
        }
    }

    #[test]
    fn pure_rotation_has_zero_translation() {
        let config = SceneConfig {
            trajectory: Trajectory::PureRotation,
            ..SceneConfig::default()
        };
        let (_, truth) = generate_scene(&config).unwrap();
        assert!(truth.poses.iter().all(|p| p.position.norm() < 1e-15));
    }

    #[test]
    fn same_seed_same_scene() {
        let config = SceneConfig {
            noise_px: 1.0,
            outlier_ratio: 0.1,
            rotation_noise_deg: 0.5,
            clutter_points: 10,
            trajectory: Trajectory::RandomWalk,
            seed: 42,
            ..SceneConfig::default()
        };
        let a = generate_scene(&config).unwrap();
        let b = generate_scene(&config).unwrap();
        assert_eq!(a, b);
        let other = generate_scene(&SceneConfig { seed: 43, ..config }).unwrap();
        assert_ne!(a.0, other.0);
    }

    #[test]
    fn clutter_respects_margin_and_labels() {
        let config = SceneConfig {
            clutter_points: 30,
            seed: 7,
            ..SceneConfig::default()
        };
        let (window, truth) = generate_scene(&config).unwrap();
        for lm in &truth.landmarks {
            let dist = truth.plane.signed_distance(&lm.position).abs();
            if lm.on_plane {
                assert!(dist < 1e-12);
            } else {
                assert!(dist > 0.05);
            }
        }
        for id in window.track_ids() {
            let count = window.frames().iter().filter(|f| f.observations.contains_key(&id)).count();
            assert!(count >= 2);
        }
    }

    #[test]
    fn every_trajectory_generates() {
        for trajectory in [
            Trajectory::Orbit,
            Trajectory::Lateral,
            Trajectory::Forward,
            Trajectory::PureRotation,
            Trajectory::RandomWalk,
        ] {
            for seed in 0..5 {
                let config = SceneConfig {
                    trajectory,
                    frames: 30,
                    seed,
                    ..SceneConfig::default()
                };
                generate_scene(&config).unwrap();
            }
        }
    }

    #[test]
    fn perturbation_keeps_first_frame_and_unit_norm() {
        let (window, _) = generate_scene(&SceneConfig::default()).unwrap();
        assert_eq!(perturb_rotations(&window, 0.0, 3), window);
        let noisy = perturb_rotations(&window, 1.0, 3);
        assert_eq!(noisy.frames()[0].rotation, window.frames()[0].rotation);
        for (a, b) in noisy.frames().iter().zip(window.frames()).skip(1) {
            assert!((a.rotation.quaternion().norm() - 1.0).abs() < 1e-12);
            assert!(a.rotation.angle_to(&b.rotation) > 0.0);
        }
    }

    #[test]
    fn rejects_invalid_config() {
        for bad in [
            SceneConfig { frames: 1, ..SceneConfig::default() },
            SceneConfig { plane_points: 3, ..SceneConfig::default() },
            SceneConfig { noise_px: -1.0, ..SceneConfig::default() },
            SceneConfig { outlier_ratio: 1.0, ..SceneConfig::default() },
        ] {
            assert!(generate_scene(&bad).is_err());
        }
    }

    #[test]
    fn tiny_image_is_invisible() {
        let config = SceneConfig {
            image_width: 2,
            image_height: 2,
            ..SceneConfig::default()
        };
        assert!(matches!(generate_scene(&config), Err(Error::InvisibleScene(_))));
    }
}
