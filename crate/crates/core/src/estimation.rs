//! Robust two-view homography estimation, analytic homography decomposition
//! and RANSAC plane fitting.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{HOMOGRAPHY_SAMPLE_SIZE, MIN_HOMOGRAPHY_INLIERS, RANK_TOLERANCE};
use crate::error::{Error, Result};
use crate::geometry::{normalize_pi, CameraIntrinsics, Homography, Landmark, PlaneParams, Rotation};
use crate::window::{FrameWindow, TrackId};

/// Pixel of one track in the reference frame and in another frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub id: TrackId,
    pub p1: Vector2<f64>,
    pub p2: Vector2<f64>,
}

/// Correspondences between the reference frame and frame `i`, sorted by id.
pub fn correspondences(window: &FrameWindow, i: usize) -> Vec<Correspondence> {
    window
        .shared(i)
        .map(|(id, p1, p2)| Correspondence { id, p1, p2 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    /// Inlier threshold (pixels for homographies, scene units for planes).
    pub threshold: f64,
    pub max_iterations: usize,
    /// Early-exit confidence for the adaptive iteration count.
    pub confidence: f64,
    /// Fraction of the reference/current pairs observing a track in which it
    /// must be an inlier to be kept; 1 keeps only the strict intersection.
    pub track_inlier_fraction: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: 3.0,
            max_iterations: 1000,
            confidence: 0.999,
            track_inlier_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult<M> {
    pub model: M,
    /// Inlier track ids in input order.
    pub inliers: Vec<TrackId>,
    pub iterations: usize,
}

/// Hartley normalization: zero centroid, mean distance √2.
fn normalizing_transform(points: impl Iterator<Item = Vector2<f64>> + Clone) -> Option<Matrix3<f64>> {
    let n = points.clone().count() as f64;
    let centroid = points.clone().fold(Vector2::zeros(), |a, p| a + p) / n;
    let mean_dist = points.map(|p| (p - centroid).norm()).sum::<f64>() / n;
    if !(mean_dist > 1e-12) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(
        s,
        0.0,
        -s * centroid.x,
        0.0,
        s,
        -s * centroid.y,
        0.0,
        0.0,
        1.0,
    ))
}

fn apply(t: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(
        t[(0, 0)] * p.x + t[(0, 2)],
        t[(1, 1)] * p.y + t[(1, 2)],
    )
}

fn has_collinear_triple(points: &[Vector2<f64>]) -> bool {
    let n = points.len();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let u = points[b] - points[a];
                let v = points[c] - points[a];
                let area = (u.x * v.y - u.y * v.x).abs();
                if area <= 1e-9 * u.norm().max(v.norm()).powi(2).max(1e-300) {
                    return true;
                }
            }
        }
    }
    false
}

/// Normalized DLT homography mapping `p1` to `p2`.
pub fn estimate_homography_dlt(corrs: &[Correspondence]) -> Result<Homography> {
    let n = corrs.len();
    if n < HOMOGRAPHY_SAMPLE_SIZE {
        return Err(Error::DegenerateConfiguration("homography needs at least 4 correspondences"));
    }
    let t1 = normalizing_transform(corrs.iter().map(|c| c.p1))
        .ok_or(Error::DegenerateConfiguration("coincident source points"))?;
    let t2 = normalizing_transform(corrs.iter().map(|c| c.p2))
        .ok_or(Error::DegenerateConfiguration("coincident target points"))?;
    let src: Vec<Vector2<f64>> = corrs.iter().map(|c| apply(&t1, &c.p1)).collect();
    let dst: Vec<Vector2<f64>> = corrs.iter().map(|c| apply(&t2, &c.p2)).collect();
    if n == HOMOGRAPHY_SAMPLE_SIZE && (has_collinear_triple(&src) || has_collinear_triple(&dst)) {
        return Err(Error::DegenerateConfiguration("collinear sample"));
    }

    // AᵀA accumulated directly keeps the SVD at 9×9 whatever n is.
    let mut ata = nalgebra::SMatrix::<f64, 9, 9>::zeros();
    for (s, d) in src.iter().zip(&dst) {
        let r0 = nalgebra::SVector::<f64, 9>::from_column_slice(&[
            -s.x, -s.y, -1.0, 0.0, 0.0, 0.0, d.x * s.x, d.x * s.y, d.x,
        ]);
        let r1 = nalgebra::SVector::<f64, 9>::from_column_slice(&[
            0.0, 0.0, 0.0, -s.x, -s.y, -1.0, d.y * s.x, d.y * s.y, d.y,
        ]);
        ata += r0 * r0.transpose() + r1 * r1.transpose();
    }
    let eig = SymmetricEigen::new(ata);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let smallest = eig.eigenvalues[order[0]].max(0.0);
    let second = eig.eigenvalues[order[1]].max(0.0);
    let largest = eig.eigenvalues[order[8]];
    // eigenvalues of AᵀA are squared singular values of A
    if second.sqrt() <= RANK_TOLERANCE * largest.sqrt() || smallest > second {
        return Err(Error::DegenerateConfiguration("rank-deficient homography system"));
    }
    let h = eig.eigenvectors.column(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t2_inv = t2
        .try_inverse()
        .ok_or(Error::NumericalFailure("normalization not invertible"))?;
    Homography::from_matrix(t2_inv * hn * t1)
}

/// One-way transfer errors `(‖p2 − H p1‖, ‖p1 − H⁻¹ p2‖)`.
pub fn transfer_errors(h: &Homography, h_inv: &Homography, c: &Correspondence) -> (f64, f64) {
    let forward = h.transfer(&c.p1).map(|p| (p - c.p2).norm()).unwrap_or(f64::INFINITY);
    let backward = h_inv.transfer(&c.p2).map(|p| (p - c.p1).norm()).unwrap_or(f64::INFINITY);
    (forward, backward)
}

fn homography_inliers(h: &Homography, corrs: &[Correspondence], threshold: f64) -> Vec<usize> {
    let Ok(h_inv) = h.inverse() else {
        return Vec::new();
    };
    corrs
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let (f, b) = transfer_errors(h, &h_inv, c);
            f < threshold && b < threshold
        })
        .map(|(i, _)| i)
        .collect()
}

/// Adaptive iteration bound for the given inlier ratio.
fn required_iterations(inlier_ratio: f64, sample: usize, confidence: f64, cap: usize) -> usize {
    let good = inlier_ratio.powi(sample as i32);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return cap;
    }
    let n = ((1.0 - confidence).ln() / (1.0 - good).ln()).ceil();
    if n.is_finite() && n >= 0.0 {
        (n as usize).clamp(1, cap)
    } else {
        cap
    }
}

/// Generic RANSAC loop: hypothesis `i` is drawn from stream `i` of the seed.
fn ransac<M>(
    n: usize,
    sample_size: usize,
    config: &RansacConfig,
    seed: u64,
    mut fit: impl FnMut(&[usize]) -> Option<M>,
    mut score: impl FnMut(&M) -> Vec<usize>,
) -> Option<(M, Vec<usize>, usize)> {
    let mut best: Option<(M, Vec<usize>)> = None;
    let mut bound = config.max_iterations;
    let mut iterations = 0;
    while iterations < bound {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(iterations as u64);
        let sample = rand::seq::index::sample(&mut rng, n, sample_size).into_vec();
        iterations += 1;
        let Some(model) = fit(&sample) else {
            continue;
        };
        let inliers = score(&model);
        if best.as_ref().is_none_or(|(_, b)| inliers.len() > b.len()) {
            let ratio = inliers.len() as f64 / n as f64;
            bound = required_iterations(ratio, sample_size, config.confidence, config.max_iterations);
            best = Some((model, inliers));
        }
    }
    best.map(|(m, i)| (m, i, iterations))
}

/// 4-point RANSAC over DLT homographies scored by symmetric transfer error,
/// refit on the best consensus set.
pub fn ransac_homography(
    corrs: &[Correspondence],
    config: &RansacConfig,
    seed: u64,
) -> Result<RansacResult<Homography>> {
    if corrs.len() < HOMOGRAPHY_SAMPLE_SIZE {
        return Err(Error::InsufficientInliers {
            found: corrs.len(),
            required: MIN_HOMOGRAPHY_INLIERS,
        });
    }
    let threshold = config.threshold;
    let found = ransac(
        corrs.len(),
        HOMOGRAPHY_SAMPLE_SIZE,
        config,
        seed,
        |sample| {
            let picked: Vec<Correspondence> = sample.iter().map(|&i| corrs[i]).collect();
            estimate_homography_dlt(&picked).ok()
        },
        |h| homography_inliers(h, corrs, threshold),
    );
    let Some((model, inliers, iterations)) = found else {
        return Err(Error::InsufficientInliers {
            found: 0,
            required: MIN_HOMOGRAPHY_INLIERS,
        });
    };
    if inliers.len() < MIN_HOMOGRAPHY_INLIERS {
        return Err(Error::InsufficientInliers {
            found: inliers.len(),
            required: MIN_HOMOGRAPHY_INLIERS,
        });
    }
    let consensus: Vec<Correspondence> = inliers.iter().map(|&i| corrs[i]).collect();
    let (model, inliers) = match estimate_homography_dlt(&consensus) {
        Ok(refit) => {
            let refit_inliers = homography_inliers(&refit, corrs, threshold);
            if refit_inliers.len() >= inliers.len() {
                (refit, refit_inliers)
            } else {
                (model, inliers)
            }
        }
        Err(_) => (model, inliers),
    };
    Ok(RansacResult {
        model,
        inliers: inliers.iter().map(|&i| corrs[i].id).collect(),
        iterations,
    })
}

/// Robust homography between the reference and every other frame.
pub fn pair_homographies(
    window: &FrameWindow,
    config: &RansacConfig,
    seed: u64,
) -> Result<Vec<RansacResult<Homography>>> {
    (1..window.len())
        .map(|i| ransac_homography(&correspondences(window, i), config, seed.wrapping_add(i as u64)))
        .collect()
}

/// Tracks that are inliers in at least `track_inlier_fraction` of the pairs
/// observing them. `fits[f]` belongs to frame `f + 1`.
pub fn plane_consistent_tracks(
    window: &FrameWindow,
    fits: &[RansacResult<Homography>],
    config: &RansacConfig,
) -> BTreeSet<TrackId> {
    let mut votes: BTreeMap<TrackId, (usize, usize)> = BTreeMap::new();
    for (f, fit) in fits.iter().enumerate() {
        let inliers: BTreeSet<TrackId> = fit.inliers.iter().copied().collect();
        for (id, _, _) in window.shared(f + 1) {
            let v = votes.entry(id).or_default();
            v.1 += 1;
            if inliers.contains(&id) {
                v.0 += 1;
            }
        }
    }
    window
        .track_ids()
        .filter(|id| match votes.get(id) {
            Some(&(inlier, seen)) => inlier as f64 >= config.track_inlier_fraction * seen as f64,
            None => true,
        })
        .collect()
}

/// One motion/structure interpretation of a calibrated homography
/// `K⁻¹HK ∝ R − (t/d) nᵀ` for the plane `nᵀX₁ + d = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionSolution {
    pub rotation: Rotation,
    pub t_over_d: Vector3<f64>,
    pub normal: Vector3<f64>,
    /// False for a pure rotation, where the normal is arbitrary.
    pub normal_observable: bool,
}

impl DecompositionSolution {
    /// Homography recomposed from the solution.
    pub fn compose(&self, k: &CameraIntrinsics) -> Result<Homography> {
        Homography::from_matrix(
            k.matrix() * (self.rotation.matrix() - self.t_over_d * self.normal.transpose()) * k.inverse_matrix(),
        )
    }
}

/// `−det` of the 2×2 minor of `m` obtained by removing `row` and `col`.
fn opposite_of_minor(m: &Matrix3<f64>, row: usize, col: usize) -> f64 {
    let x1 = if col == 0 { 1 } else { 0 };
    let x2 = if col == 2 { 1 } else { 2 };
    let y1 = if row == 0 { 1 } else { 0 };
    let y2 = if row == 2 { 1 } else { 2 };
    m[(y1, x2)] * m[(y2, x1)] - m[(y1, x1)] * m[(y2, x2)]
}

fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

const PURE_ROTATION_TOLERANCE: f64 = 1e-10;

/// Analytic decomposition into at most four `{R, t/d, n}` solutions.
///
/// Works on `S = HᵀH − I` of the calibrated homography scaled to unit middle
/// singular value; the normals come from the minors of `S`, translations and
/// rotations follow in closed form.
pub fn decompose_homography(h: &Homography, k: &CameraIntrinsics) -> Result<Vec<DecompositionSolution>> {
    let calibrated = k.inverse_matrix() * h.matrix() * k.matrix();
    let mut sv: Vec<f64> = calibrated.singular_values().iter().copied().collect();
    if sv.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("singular values are not finite"));
    }
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[1] > 0.0) {
        return Err(Error::NumericalFailure("homography has zero middle singular value"));
    }
    let hn = calibrated / sv[1];
    let s = hn.transpose() * hn - Matrix3::identity();

    if s.amax() < PURE_ROTATION_TOLERANCE {
        let r = if hn.determinant() < 0.0 { -hn } else { hn };
        return Ok(vec![DecompositionSolution {
            rotation: Rotation::from_matrix(&r),
            t_over_d: Vector3::zeros(),
            normal: Vector3::z(),
            normal_observable: false,
        }]);
    }

    let m00 = opposite_of_minor(&s, 0, 0);
    let m11 = opposite_of_minor(&s, 1, 1);
    let m22 = opposite_of_minor(&s, 2, 2);
    let rt00 = m00.max(0.0).sqrt();
    let rt11 = m11.max(0.0).sqrt();
    let rt22 = m22.max(0.0).sqrt();
    let e01 = sign(opposite_of_minor(&s, 0, 1));
    let e02 = sign(opposite_of_minor(&s, 0, 2));
    let e12 = sign(opposite_of_minor(&s, 1, 2));

    let diag = [s[(0, 0)].abs(), s[(1, 1)].abs(), s[(2, 2)].abs()];
    let idx = if diag[0] < diag[1] {
        if diag[1] < diag[2] {
            2
        } else {
            1
        }
    } else if diag[0] < diag[2] {
        2
    } else {
        0
    };
    let (npa, npb) = match idx {
        0 => (
            Vector3::new(s[(0, 0)], s[(0, 1)] + rt22, s[(0, 2)] + e12 * rt11),
            Vector3::new(s[(0, 0)], s[(0, 1)] - rt22, s[(0, 2)] - e12 * rt11),
        ),
        1 => (
            Vector3::new(s[(0, 1)] + rt22, s[(1, 1)], s[(1, 2)] - e02 * rt00),
            Vector3::new(s[(0, 1)] - rt22, s[(1, 1)], s[(1, 2)] + e02 * rt00),
        ),
        _ => (
            Vector3::new(s[(0, 2)] + e01 * rt11, s[(1, 2)] + rt00, s[(2, 2)]),
            Vector3::new(s[(0, 2)] - e01 * rt11, s[(1, 2)] - rt00, s[(2, 2)]),
        ),
    };
    if npa.norm() < 1e-300 || npb.norm() < 1e-300 {
        return Err(Error::NumericalFailure("degenerate normal candidates"));
    }
    let trace = s.trace();
    let v = 2.0 * (1.0 + trace - m00 - m11 - m22).max(0.0).sqrt();
    if !(v > 0.0) {
        return Err(Error::NumericalFailure("degenerate decomposition discriminant"));
    }
    let e_sii = sign(s[(idx, idx)]);
    let r = (2.0 + trace + v).max(0.0).sqrt();
    let n_t = (2.0 + trace - v).max(0.0).sqrt();
    let na = npa.normalize();
    let nb = npb.normalize();
    let half_nt = 0.5 * n_t;
    let esii_r = e_sii * r;
    let ta_star = (nb * esii_r - na * n_t) * half_nt;
    let tb_star = (na * esii_r - nb * n_t) * half_nt;

    let rotation_from = |t_star: &Vector3<f64>, n: &Vector3<f64>| {
        let mut rot = hn * (Matrix3::identity() - t_star * n.transpose() * (2.0 / v));
        if rot.determinant() < 0.0 {
            rot = -rot;
        }
        rot
    };
    let ra = rotation_from(&ta_star, &na);
    let rb = rotation_from(&tb_star, &nb);
    // Solutions satisfy H = R + t nᵀ; the plane convention here stores t/d = −t.
    let ta = ra * ta_star;
    let tb = rb * tb_star;
    let mut out = Vec::with_capacity(4);
    for (rot, t, n) in [(ra, ta, na), (ra, -ta, -na), (rb, tb, nb), (rb, -tb, -nb)] {
        out.push(DecompositionSolution {
            rotation: Rotation::from_matrix(&rot),
            t_over_d: -t,
            normal: n,
            normal_observable: true,
        });
    }
    Ok(out)
}

/// Correspondences to a further view and the known relative rotation to it.
#[derive(Debug, Clone, Copy)]
pub struct ExtraView<'a> {
    pub correspondences: &'a [Correspondence],
    /// Rotation taking reference-camera coordinates into this view.
    pub relative_rotation: Rotation,
}

/// Whether every correspondence lies in front of both cameras under `sol`
/// (plane gauge `d = −1`).
pub fn passes_cheirality(sol: &DecompositionSolution, k: &CameraIntrinsics, corrs: &[Correspondence]) -> bool {
    let r = sol.rotation.matrix();
    corrs.iter().all(|c| {
        let x1 = k.unproject(&c.p1);
        let denom = sol.normal.dot(&x1);
        if !(denom > 0.0) {
            return false;
        }
        let point = x1 / denom;
        let x2 = r * point - sol.t_over_d;
        x2.z > 0.0
    })
}

/// Least-squares `t/d` of a view given the plane normal in the reference
/// camera and the known relative rotation.
pub fn translation_given_normal(
    k: &CameraIntrinsics,
    normal: &Vector3<f64>,
    relative_rotation: &Rotation,
    corrs: &[Correspondence],
) -> Result<Vector3<f64>> {
    if corrs.len() < 2 {
        return Err(Error::DegenerateConfiguration("too few correspondences"));
    }
    let r = relative_rotation.matrix();
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for c in corrs {
        let a = k.unproject(&c.p1);
        let y = k.unproject(&c.p2);
        // y × (R a − (nᵀa) τ) = 0
        let sy = crate::geometry::skew(&y);
        let lhs = sy * normal.dot(&a);
        let rhs = sy * r * a;
        ata += lhs.transpose() * lhs;
        atb += lhs.transpose() * rhs;
    }
    ata.cholesky()
        .map(|c| c.solve(&atb))
        .ok_or(Error::DegenerateConfiguration("translation system is singular"))
}

fn rms_transfer(h: &Matrix3<f64>, corrs: &[Correspondence]) -> f64 {
    let sum: f64 = corrs
        .iter()
        .map(|c| {
            normalize_pi(&(h * c.p1.push(1.0)))
                .map(|p| (p - c.p2).norm_squared())
                .unwrap_or(f64::INFINITY)
        })
        .sum();
    (sum / corrs.len().max(1) as f64).sqrt()
}

/// Picks the physically valid decomposition solution.
///
/// Solutions failing cheirality on `pair` are discarded. Survivors are scored
/// by transfer error with the known rotation: on `extra` when given (its
/// translation fitted for each candidate normal), otherwise on `pair`.
/// Ties resolve to the lexicographically smallest normal.
pub fn select_decomposition(
    solutions: &[DecompositionSolution],
    k: &CameraIntrinsics,
    pair: &[Correspondence],
    pair_rotation: &Rotation,
    extra: Option<ExtraView<'_>>,
) -> Result<DecompositionSolution> {
    let survivors: Vec<&DecompositionSolution> = solutions
        .iter()
        .filter(|s| passes_cheirality(s, k, pair))
        .collect();
    match survivors.len() {
        0 => return Err(Error::NoValidSolution),
        1 => return Ok(*survivors[0]),
        _ => {}
    }
    let km = k.matrix();
    let kinv = k.inverse_matrix();
    let score = |s: &DecompositionSolution| -> f64 {
        let (corrs, rot, tod) = match &extra {
            Some(view) => match translation_given_normal(k, &s.normal, &view.relative_rotation, view.correspondences) {
                Ok(t) => (view.correspondences, view.relative_rotation, t),
                Err(_) => return f64::INFINITY,
            },
            None => (pair, *pair_rotation, s.t_over_d),
        };
        let h = km * (rot.matrix() - tod * s.normal.transpose()) * kinv;
        rms_transfer(&h, corrs)
    };
    let mut scored: Vec<(f64, &DecompositionSolution)> = survivors.into_iter().map(|s| (score(s), s)).collect();
    scored.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then_with(|| {
            let (na, nb) = (a.1.normal, b.1.normal);
            na.x.total_cmp(&nb.x)
                .then(na.y.total_cmp(&nb.y))
                .then(na.z.total_cmp(&nb.z))
        })
    });
    Ok(*scored[0].1)
}

fn plane_through(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<PlaneParams> {
    let u = b - a;
    let v = c - a;
    let n = u.cross(&v);
    if n.norm() <= 1e-12 * u.norm() * v.norm() || n.norm() < 1e-300 {
        return None;
    }
    let n = n.normalize();
    PlaneParams::new(n, -n.dot(a)).ok()
}

/// Total-least-squares plane through `points` (smallest principal axis).
pub fn fit_plane_least_squares(points: &[Vector3<f64>]) -> Result<PlaneParams> {
    if points.len() < 3 {
        return Err(Error::DegenerateConfiguration("plane fit needs at least 3 points"));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    if eig.eigenvalues[order[1]] <= 1e-24 * eig.eigenvalues[order[2]].max(1e-300) {
        return Err(Error::DegenerateConfiguration("points are collinear"));
    }
    let normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    PlaneParams::new(normal, -normal.dot(&centroid))
}

/// 3-point RANSAC plane with a least-squares refit on the consensus set.
pub fn fit_plane_ransac(points: &[Landmark], config: &RansacConfig, seed: u64) -> Result<RansacResult<PlaneParams>> {
    if points.len() < 3 {
        return Err(Error::DegenerateConfiguration("plane fit needs at least 3 points"));
    }
    let threshold = config.threshold;
    let inliers_of = |plane: &PlaneParams| -> Vec<usize> {
        points
            .iter()
            .enumerate()
            .filter(|(_, l)| plane.signed_distance(&l.position).abs() < threshold)
            .map(|(i, _)| i)
            .collect()
    };
    let found = ransac(
        points.len(),
        3,
        config,
        seed,
        |s| plane_through(&points[s[0]].position, &points[s[1]].position, &points[s[2]].position),
        inliers_of,
    );
    let (model, inliers, iterations) = match found {
        Some(found) => found,
        None => {
            // every random triple was degenerate; accept a deterministic fit if one exists
            let all: Vec<Vector3<f64>> = points.iter().map(|l| l.position).collect();
            let plane = fit_plane_least_squares(&all)?;
            let inliers = inliers_of(&plane);
            (plane, inliers, config.max_iterations)
        }
    };
    let consensus: Vec<Vector3<f64>> = inliers.iter().map(|&i| points[i].position).collect();
    let (model, inliers) = match fit_plane_least_squares(&consensus) {
        Ok(refit) => {
            let refit_inliers = inliers_of(&refit);
            if refit_inliers.len() >= inliers.len() {
                (refit, refit_inliers)
            } else {
                (model, inliers)
            }
        }
        Err(_) => (model, inliers),
    };
    if inliers.len() < 3 {
        return Err(Error::DegenerateConfiguration("no plane with three inliers"));
    }
    Ok(RansacResult {
        model,
        inliers: inliers.iter().map(|&i| points[i].id).collect(),
        iterations,
    })
}

/// Dense design matrix rank helper used by tests of other modules.
#[doc(hidden)]
pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let max = sv.max();
    sv.iter().filter(|s| **s > RANK_TOLERANCE * max).count()
}
