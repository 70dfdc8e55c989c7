use super::*;
use approx::assert_abs_diff_eq;
use nalgebra::{Matrix4, Vector4};
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use std::f64::consts::{FRAC_PI_2, PI};

/// Independent oracle: compose transforms as homogeneous 4×4 matrices.
fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut h = Matrix4::identity();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    h.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    h
}

fn rotation_block(h: &Matrix4<f64>) -> Matrix3<f64> {
    h.fixed_view::<3, 3>(0, 0).into_owned()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn calibration_identity_composition() {
    let i = RotationMatrix::identity();
    let r = rotation_from_calibration(&i, &i, &i).unwrap();
    assert_abs_diff_eq!(r.matrix(), &Matrix3::identity(), epsilon = 1e-15);
}

#[test]
fn calibration_passes_through_when_normalizations_identity() {
    let i = RotationMatrix::identity();
    let rx = RotationMatrix::about_x(FRAC_PI_2);
    let r = rotation_from_calibration(&i, &rx, &i).unwrap();
    assert_abs_diff_eq!(r.matrix(), rx.matrix(), epsilon = 1e-15);
}

#[test]
fn calibration_matches_homogeneous_oracle() {
    let mut rng = rng(11);
    for _ in 0..200 {
        let n_tgt = random_rotation(&mut rng);
        let r_tilde = random_rotation(&mut rng);
        let n_ref = random_rotation(&mut rng);
        let got = rotation_from_calibration(&n_tgt, &r_tilde, &n_ref).unwrap();

        let zero = Vector3::zeros();
        let oracle = homogeneous(n_tgt.matrix(), &zero)
            * homogeneous(r_tilde.matrix(), &zero)
            * homogeneous(&n_ref.matrix().transpose(), &zero);
        assert!((got.matrix() - rotation_block(&oracle)).norm() < 1e-12);
    }
}

#[test]
fn head_pose_self_relative_is_identity() {
    let mut rng = rng(12);
    for _ in 0..50 {
        let h = random_rotation(&mut rng);
        let r = rotation_from_head_poses(&h, &h).unwrap();
        assert!((r.matrix() - Matrix3::identity()).norm() < 1e-12);
    }
}

#[test]
fn head_pose_with_identity_reference() {
    let h = RotationMatrix::about_x(30f64.to_radians());
    let r = rotation_from_head_poses(&h, &RotationMatrix::identity()).unwrap();
    assert_abs_diff_eq!(r.matrix(), h.matrix(), epsilon = 1e-15);
}

/// Builds a consistent rig: random C, N_ref, N_tgt, Ĥ_ref, with Ĥ_tgt = C·Ĥ_ref.
fn consistent_rig(
    rng: &mut ChaCha8Rng,
) -> (
    RigidTransform,
    RotationMatrix,
    RotationMatrix,
    RigidTransform,
    RigidTransform,
) {
    let c = random_rigid(rng, 1.0);
    let n_ref = random_rotation(rng);
    let n_tgt = random_rotation(rng);
    let h_hat_ref = random_rigid(rng, 1.0);
    let h_hat_tgt = c.compose(&h_hat_ref);
    (c, n_ref, n_tgt, h_hat_ref, h_hat_tgt)
}

#[test]
fn both_rotation_constructions_agree_on_consistent_rigs() {
    let mut rng = rng(13);
    for _ in 0..500 {
        let (c, n_ref, n_tgt, h_hat_ref, h_hat_tgt) = consistent_rig(&mut rng);
        let r_calib = rotation_from_calibration(&n_tgt, &c.rotation, &n_ref).unwrap();
        let h_tgt =
            RotationMatrix::from_matrix(n_tgt.matrix() * h_hat_tgt.rotation.matrix()).unwrap();
        let h_ref =
            RotationMatrix::from_matrix(n_ref.matrix() * h_hat_ref.rotation.matrix()).unwrap();
        let r_pose = rotation_from_head_poses(&h_tgt, &h_ref).unwrap();
        assert!((r_calib.matrix() - r_pose.matrix()).norm() < 1e-9);
    }
}

#[test]
fn rotation_outputs_satisfy_invariants_over_many_rigs() {
    let mut rng = rng(14);
    for _ in 0..10_000 {
        let n_tgt = random_rotation(&mut rng);
        let r_tilde = random_rotation(&mut rng);
        let n_ref = random_rotation(&mut rng);
        // from_matrix re-validates: residual < 1e-9 and det within 1e-9 of 1.
        rotation_from_calibration(&n_tgt, &r_tilde, &n_ref).unwrap();
        rotation_from_head_poses(&n_tgt, &n_ref).unwrap();
    }
}

#[test]
fn translation_identity_rotation_fixes_origin() {
    let d = NormalizationDistance::new(1.0).unwrap();
    let t = translation_from_rotation(&RotationMatrix::identity(), d);
    assert_abs_diff_eq!(t, Vector3::zeros(), epsilon = 1e-15);
}

#[test]
fn translation_for_quarter_turn_about_x() {
    // Oracle: solve (R,t)·o = o with o = (0,0,1) by linear algebra, t = o − R·o.
    let r = RotationMatrix::about_x(FRAC_PI_2);
    let o = Vector3::new(0.0, 0.0, 1.0);
    let expected = o - r.rotate(&o);
    assert_abs_diff_eq!(expected, Vector3::new(0.0, 1.0, 1.0), epsilon = 1e-12);

    let d = NormalizationDistance::new(1.0).unwrap();
    let t = translation_from_rotation(&r, d);
    assert_abs_diff_eq!(t, expected, epsilon = 1e-12);
}

#[test]
fn translation_fixed_point_holds_for_random_rotations() {
    let mut rng = rng(15);
    let d = NormalizationDistance::new(2.0).unwrap();
    let o = Vector4::new(0.0, 0.0, 2.0, 1.0);
    for _ in 0..500 {
        let r = random_rotation(&mut rng);
        let t = translation_from_rotation(&r, d);
        // Oracle applies the homogeneous matrix to o = (0,0,d,1).
        let mapped = homogeneous(r.matrix(), &t) * o;
        assert!((mapped - o).norm() < 1e-9);
    }
}

#[test]
fn interconvertibility_zero_on_identity_rig() {
    let id = RigidTransform::identity();
    let i = RotationMatrix::identity();
    let res = verify_rotation_interconvertibility(&id, &i, &i, &id, &id).unwrap();
    assert_eq!(res, 0.0);
}

#[test]
fn interconvertibility_below_tolerance_on_random_rigs() {
    let mut rng = rng(16);
    for _ in 0..1000 {
        let (c, n_ref, n_tgt, h_hat_ref, h_hat_tgt) = consistent_rig(&mut rng);
        let res =
            verify_rotation_interconvertibility(&c, &n_ref, &n_tgt, &h_hat_ref, &h_hat_tgt)
                .unwrap();
        assert!(res < 1e-9, "residual {res}");
    }
}

#[test]
fn interconvertibility_rejects_perturbed_extrinsics() {
    let mut rng = rng(17);
    let (c, n_ref, n_tgt, h_hat_ref, h_hat_tgt) = consistent_rig(&mut rng);
    let noisy = RigidTransform::new(
        c.rotation
            .compose(&RotationMatrix::from_axis_angle(Vector3::x(), 1e-3)),
        c.translation,
    );
    let err = verify_rotation_interconvertibility(&noisy, &n_ref, &n_tgt, &h_hat_ref, &h_hat_tgt)
        .unwrap_err();
    assert!(matches!(err, GeometryError::InconsistentRig { .. }));
}

#[test]
fn angular_error_basic_values() {
    let z = GazeVector::new(Vector3::new(0.0, 0.0, 1.0)).unwrap();
    assert_eq!(angular_error(&z, &z), 0.0);

    let x = GazeVector::new(Vector3::new(1.0, 0.0, 0.0)).unwrap();
    let y = GazeVector::new(Vector3::new(0.0, 1.0, 0.0)).unwrap();
    assert_abs_diff_eq!(angular_error(&x, &y), 90.0, epsilon = 1e-12);

    let diag = GazeVector::from_direction(Vector3::new(0.0, 1.0, 1.0)).unwrap();
    assert_abs_diff_eq!(angular_error(&z, &diag), 45.0, epsilon = 1e-12);
}

#[test]
fn angular_error_rejects_non_unit() {
    let err = angular_error_checked(&Vector3::new(0.0, 0.0, 1.1), &Vector3::new(0.0, 0.0, 1.0))
        .unwrap_err();
    assert!(matches!(err, GeometryError::NotUnit { .. }));
}

#[test]
fn angular_error_symmetry_and_triangle_inequality() {
    let mut rng = rng(18);
    for _ in 0..1000 {
        let a = random_rotation(&mut rng).rotate(&Vector3::z());
        let b = random_rotation(&mut rng).rotate(&Vector3::z());
        let c = random_rotation(&mut rng).rotate(&Vector3::z());
        let (a, b, c) = (
            GazeVector::new(a).unwrap(),
            GazeVector::new(b).unwrap(),
            GazeVector::new(c).unwrap(),
        );
        assert_abs_diff_eq!(angular_error(&a, &b), angular_error(&b, &a), epsilon = 1e-12);
        // Self-distance: acos(1−ε) ≈ √(2ε), so a 1-ulp dot error shows up
        // as ~1e-6 degrees.
        assert!(angular_error(&a, &a) < 1e-5);
        assert!(angular_error(&a, &c) <= angular_error(&a, &b) + angular_error(&b, &c) + 1e-9);
    }
}

#[test]
fn pitch_yaw_frontal_and_straight_up() {
    let frontal = GazeVector::new(Vector3::new(0.0, 0.0, -1.0)).unwrap();
    let py = pitch_yaw_from_vector(&frontal);
    assert_eq!(py.pitch, 0.0);
    assert_eq!(py.yaw, 0.0);

    let up = GazeVector::new(Vector3::new(0.0, -1.0, 0.0)).unwrap();
    assert_abs_diff_eq!(pitch_yaw_from_vector(&up).pitch, FRAC_PI_2, epsilon = 1e-12);
}

#[test]
fn pitch_yaw_round_trip_on_random_unit_vectors() {
    let mut rng = rng(19);
    for _ in 0..1000 {
        let g = GazeVector::new(random_rotation(&mut rng).rotate(&Vector3::z())).unwrap();
        let back = vector_from_pitch_yaw(&pitch_yaw_from_vector(&g));
        assert!((back.vector() - g.vector()).norm() < 1e-9);
    }
}

#[test]
fn random_rotation_is_reproducible_and_orthonormal() {
    let a = random_rotation(&mut rng(42));
    let b = random_rotation(&mut rng(42));
    assert_eq!(a.matrix(), b.matrix());
    assert!(RotationMatrix::orthonormality_residual(a.matrix()) < 1e-12);
}

#[test]
fn random_rotation_matches_haar_statistic() {
    // Oracle: E‖R − I‖_F under Haar measure, computed by quadrature over the
    // rotation-angle density p(θ) = (1 − cos θ)/π with ‖R − I‖_F = 2√2·sin(θ/2).
    let n_quad = 100_000;
    let mut expected = 0.0;
    for i in 0..n_quad {
        let theta = (i as f64 + 0.5) * PI / n_quad as f64;
        let density = (1.0 - theta.cos()) / PI;
        expected += 2.0 * 2f64.sqrt() * (theta / 2.0).sin() * density * (PI / n_quad as f64);
    }

    let mut rng = rng(20);
    let draws = 100_000;
    let mut mean = 0.0;
    for _ in 0..draws {
        let r = random_rotation(&mut rng);
        mean += (r.matrix() - Matrix3::identity()).norm();
    }
    mean /= draws as f64;
    assert!(
        (mean - expected).abs() / expected < 0.01,
        "mean {mean}, expected {expected}"
    );
}

#[test]
fn rotation_composition_stays_in_group() {
    let mut rng = rng(21);
    for _ in 0..200 {
        let a = random_rotation(&mut rng);
        let b = random_rotation(&mut rng);
        RotationMatrix::from_matrix(*a.compose(&b).matrix()).unwrap();
    }
}

#[test]
fn orthonormalize_keeps_exact_rotations() {
    let mut rng = rng(22);
    for _ in 0..100 {
        let r = random_rotation(&mut rng);
        let out = orthonormalize(r.matrix()).unwrap();
        assert!((out.matrix() - r.matrix()).norm() < 1e-12);
    }
}

#[test]
fn orthonormalize_projects_noise_back() {
    // Perturbation sweep: noise of Frobenius norm 1e-3 moves the projected
    // rotation by at most twice that.
    let mut rng = rng(23);
    for _ in 0..200 {
        let r = random_rotation(&mut rng);
        let mut noise = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                noise[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        noise *= 1e-3 / noise.norm();
        let out = orthonormalize(&(r.matrix() + noise)).unwrap();
        assert!((out.matrix() - r.matrix()).norm() < 2e-3);
    }
}

#[test]
fn orthonormalize_fixes_reflections() {
    let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
    let out = orthonormalize(&reflection).unwrap();
    assert!((out.matrix().determinant() - 1.0).abs() < 1e-12);
}

#[test]
fn orthonormalize_rejects_singular_input() {
    let singular = Matrix3::zeros();
    assert!(matches!(
        orthonormalize(&singular),
        Err(GeometryError::Singular { .. })
    ));
}

#[test]
fn measured_constructor_accepts_noise_and_restores_invariant() {
    let mut rng = rng(24);
    let r = random_rotation(&mut rng);
    let mut noisy = *r.matrix();
    noisy[(0, 1)] += 5e-7;
    let accepted = RotationMatrix::from_measured(noisy).unwrap();
    assert!(RotationMatrix::orthonormality_residual(accepted.matrix()) < 1e-9);

    let mut bad = *r.matrix();
    bad[(0, 1)] += 5e-3;
    assert!(RotationMatrix::from_measured(bad).is_err());
}

#[test]
fn rigid_transform_compose_matches_homogeneous_oracle() {
    let mut rng = rng(25);
    for _ in 0..200 {
        let a = random_rigid(&mut rng, 2.0);
        let b = random_rigid(&mut rng, 2.0);
        let got = a.compose(&b);
        let oracle = homogeneous(a.rotation.matrix(), &a.translation)
            * homogeneous(b.rotation.matrix(), &b.translation);
        assert!((got.rotation.matrix() - rotation_block(&oracle)).norm() < 1e-12);
        let t_oracle = oracle.fixed_view::<3, 1>(0, 3).into_owned();
        assert!((got.translation - t_oracle).norm() < 1e-12);
    }
}

#[test]
fn rigid_transform_inverse_round_trips() {
    let mut rng = rng(26);
    for _ in 0..100 {
        let a = random_rigid(&mut rng, 2.0);
        let p = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let back = a.inverse().apply(&a.apply(&p));
        assert!((back - p).norm() < 1e-12);
    }
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pitch_yaw_round_trip(seed in 0u64..10_000) {
            let mut rng = rng(seed);
            let g = GazeVector::new(random_rotation(&mut rng).rotate(&Vector3::z())).unwrap();
            let py = pitch_yaw_from_vector(&g);
            // Stay away from the poles where yaw is undefined.
            prop_assume!(py.pitch.abs() < FRAC_PI_2 - 1e-6);
            let back = vector_from_pitch_yaw(&py);
            prop_assert!((back.vector() - g.vector()).norm() < 1e-9);
        }

        #[test]
        fn angular_error_symmetric(seed in 0u64..10_000) {
            let mut rng = rng(seed);
            let a = GazeVector::new(random_rotation(&mut rng).rotate(&Vector3::z())).unwrap();
            let b = GazeVector::new(random_rotation(&mut rng).rotate(&Vector3::z())).unwrap();
            let d = angular_error(&a, &b);
            prop_assert!((0.0..=180.0).contains(&d));
            prop_assert!((d - angular_error(&b, &a)).abs() < 1e-12);
        }
    }
}
