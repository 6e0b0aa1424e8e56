use gpo_core::estimation::{
    decompose_homography, estimate_homography_dlt, ransac_homography, Correspondence, RansacConfig,
};
use gpo_core::eval::{ate, pde, pne, umeyama_align, SimilarityTransform};
use gpo_core::geometry::homography_from_pose_plane;
use gpo_core::{CameraIntrinsics, Homography, PlaneParams, Rotation, TrackId};
use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

fn k() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap()
}

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn rotation(max: f64) -> impl Strategy<Value = Rotation> {
    vec3(max).prop_map(Rotation::from_scaled_axis)
}

fn normal() -> impl Strategy<Value = Vector3<f64>> {
    (-0.5..0.5f64, -0.5..0.5f64).prop_map(|(x, y)| Vector3::new(x, y, 1.0).normalize())
}

/// Pixels spread over the image, away from any line.
fn grid(n: usize) -> Vec<Vector2<f64>> {
    (0..n)
        .map(|i| {
            let a = i as f64 * 2.399;
            let r = 40.0 + 180.0 * ((i as f64 + 0.5) / n as f64).sqrt();
            Vector2::new(320.0 + r * a.cos(), 240.0 + 0.8 * r * a.sin())
        })
        .collect()
}

fn corrs(h: &Homography, pixels: &[Vector2<f64>]) -> Vec<Correspondence> {
    pixels
        .iter()
        .enumerate()
        .map(|(i, p)| Correspondence {
            id: TrackId(i as u32),
            p1: *p,
            p2: h.transfer(p).unwrap(),
        })
        .collect()
}

fn trajectory() -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec(vec3(2.0), 4..20)
}

fn similarity() -> impl Strategy<Value = SimilarityTransform> {
    (0.1..10.0f64, rotation(3.0), vec3(5.0)).prop_map(|(scale, rotation, translation)| SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

fn spread(traj: &[Vector3<f64>]) -> bool {
    let mean = traj.iter().sum::<Vector3<f64>>() / traj.len() as f64;
    let cov = traj.iter().map(|p| (p - mean) * (p - mean).transpose()).sum::<nalgebra::Matrix3<f64>>();
    let sv = cov.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    sv[1] > 1e-3 * sv[2]
}

proptest! {
    #[test]
    fn composing_with_inverse_gives_identity(r in rotation(0.4), t in vec3(0.3), n in normal()) {
        let h = homography_from_pose_plane(&k(), &r, &t, &n, -1.0).unwrap();
        let id = h.compose(&h.inverse().unwrap()).unwrap();
        prop_assert!(id.max_abs_diff(&Homography::identity()) < 1e-9);
    }

    #[test]
    fn decomposition_contains_generator(r in rotation(0.4), t in vec3(0.3), n in normal()) {
        prop_assume!(t.norm() > 1e-3);
        let h = homography_from_pose_plane(&k(), &r, &t, &n, -1.0).unwrap();
        let sols = decompose_homography(&h, &k()).unwrap();
        // plane at d = −1 turns R − t nᵀ/d into R − (−t) nᵀ
        let tod = -t;
        let found = sols.iter().any(|s| {
            s.rotation.angle_to(&r) < 1e-6
                && ((s.t_over_d - tod).norm() < 1e-6 && (s.normal - n).norm() < 1e-6
                    || (s.t_over_d + tod).norm() < 1e-6 && (s.normal + n).norm() < 1e-6)
        });
        prop_assert!(found, "{} solutions, none match", sols.len());
    }

    #[test]
    fn dlt_ignores_correspondence_order(r in rotation(0.3), t in vec3(0.2), n in normal(), shift in 0usize..12) {
        let h = homography_from_pose_plane(&k(), &r, &t, &n, -1.0).unwrap();
        let mut cs = corrs(&h, &grid(12));
        let a = estimate_homography_dlt(&cs).unwrap();
        cs.rotate_left(shift);
        cs.reverse();
        let b = estimate_homography_dlt(&cs).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-9);
        prop_assert!(a.max_abs_diff(&h) < 1e-9);
    }

    #[test]
    fn dlt_recovers_from_four_points(r in rotation(0.3), t in vec3(0.2), n in normal()) {
        let h = homography_from_pose_plane(&k(), &r, &t, &n, -1.0).unwrap();
        let four = [
            Vector2::new(100.0, 80.0),
            Vector2::new(540.0, 90.0),
            Vector2::new(520.0, 400.0),
            Vector2::new(110.0, 390.0),
        ];
        let est = estimate_homography_dlt(&corrs(&h, &four)).unwrap();
        prop_assert!(est.max_abs_diff(&h) < 1e-9);
    }

    #[test]
    fn ransac_is_deterministic(r in rotation(0.3), t in vec3(0.2), n in normal(), seed in any::<u64>()) {
        let h = homography_from_pose_plane(&k(), &r, &t, &n, -1.0).unwrap();
        let mut cs = corrs(&h, &grid(40));
        for (i, c) in cs.iter_mut().enumerate().filter(|(i, _)| i % 4 == 0) {
            c.p2 += Vector2::new(30.0 + i as f64, -25.0);
        }
        let config = RansacConfig::default();
        let a = ransac_homography(&cs, &config, seed).unwrap();
        let b = ransac_homography(&cs, &config, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn pne_symmetric_bounded_and_sign_blind(a in normal(), b in normal(), da in -3.0..-0.1f64, db in -3.0..-0.1f64) {
        let pa = PlaneParams::new(a, da).unwrap();
        let pb = PlaneParams::new(b, db).unwrap();
        let flipped = PlaneParams::new(-b, -db).unwrap();
        let e = pne(&pa, &pb);
        prop_assert!((0.0..=90.0).contains(&e));
        prop_assert!((e - pne(&pb, &pa)).abs() < 1e-9);
        prop_assert!((e - pne(&pa, &flipped)).abs() < 1e-9);
    }

    #[test]
    fn pde_scales_with_plane(n in normal(), d in -3.0..-0.1f64, gt_d in -3.0..-0.1f64, s in 0.1..10.0f64) {
        let est = PlaneParams::new(n, d).unwrap();
        let gt = PlaneParams::new(n, gt_d).unwrap();
        let est_s = PlaneParams::new(n, d * s).unwrap();
        let gt_s = PlaneParams::new(n, gt_d * s).unwrap();
        prop_assert!((pde(&est_s, &gt_s) - s * pde(&est, &gt)).abs() < 1e-9 * (1.0 + s));
    }

    #[test]
    fn ate_is_similarity_invariant(gt in trajectory(), sim in similarity(), noise in prop::collection::vec(vec3(0.05), 20)) {
        prop_assume!(spread(&gt));
        let est: Vec<Vector3<f64>> = gt.iter().zip(&noise).map(|(p, e)| p + e).collect();
        let moved: Vec<Vector3<f64>> = est.iter().map(|p| sim.apply(p)).collect();
        let base = ate(&est, &gt).unwrap();
        prop_assert!((ate(&moved, &gt).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn umeyama_recovers_exact_similarity(gt in trajectory(), sim in similarity()) {
        prop_assume!(spread(&gt));
        // apply(p) = (R p + T) / s, so est = s R⁻¹ (g − T/s)
        let inv_r = sim.rotation.inverse();
        let est: Vec<Vector3<f64>> = gt.iter().map(|g| inv_r.rotate(&(sim.scale * g - sim.translation))).collect();
        let fit = umeyama_align(&est, &gt).unwrap();
        prop_assert!((fit.scale - sim.scale).abs() < 1e-9 * sim.scale);
        prop_assert!(fit.rotation.angle_to(&sim.rotation) < 1e-9);
        for (p, g) in est.iter().zip(&gt) {
            prop_assert!((fit.apply(p) - g).norm() < 1e-9);
        }
    }
}
