//! Numerical verification of the normalization-geometry identities over
//! randomly sampled consistent rigs, and consistency checks of user rig
//! description files.

use crate::geometry::{
    random_rigid, random_rotation, rotation_from_calibration, rotation_from_head_poses,
    translation_from_rotation, verify_rotation_interconvertibility, GeometryError,
    RigDescription, RigidTransform, RotationMatrix,
};
use nalgebra::Vector3;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Residual report over random consistent rigs: the rotation-definition
/// identity and the translation fixed-point property.
#[derive(Debug, Clone)]
pub struct GeometrySuiteReport {
    pub trials: usize,
    pub max_interconvertibility_residual: f64,
    pub max_fixed_point_residual: f64,
    pub tolerance: f64,
}

impl GeometrySuiteReport {
    pub fn passed(&self) -> bool {
        self.max_interconvertibility_residual < self.tolerance
            && self.max_fixed_point_residual < self.tolerance
    }
}

impl std::fmt::Display for GeometrySuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "trials\t{}", self.trials)?;
        writeln!(
            f,
            "interconvertibility_max_residual\t{:.3e}",
            self.max_interconvertibility_residual
        )?;
        writeln!(
            f,
            "fixed_point_max_residual\t{:.3e}",
            self.max_fixed_point_residual
        )?;
        writeln!(f, "tolerance\t{:.1e}", self.tolerance)?;
        write!(f, "result\t{}", if self.passed() { "pass" } else { "FAIL" })
    }
}

/// Samples `trials` consistent rigs and reports the worst residual of each
/// identity family.
pub fn verify_geometry_suite(seed: u64, trials: usize) -> GeometrySuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_inter = 0.0f64;
    let mut max_fixed = 0.0f64;
    for _ in 0..trials.max(1) {
        // Consistent rig: Ĥ_tgt = C·Ĥ_ref by construction.
        let c = random_rigid(&mut rng, 1.0);
        let n_ref = random_rotation(&mut rng);
        let n_tgt = random_rotation(&mut rng);
        let h_hat_ref = random_rigid(&mut rng, 1.0);
        let h_hat_tgt = c.compose(&h_hat_ref);
        let residual =
            verify_rotation_interconvertibility(&c, &n_ref, &n_tgt, &h_hat_ref, &h_hat_tgt)
                .expect("constructed rig is consistent");
        max_inter = max_inter.max(residual);

        // The same rotation built both ways, then the fixed-point property
        // of its induced translation at a random distance.
        let r = rotation_from_calibration(&n_tgt, &c.rotation, &n_ref)
            .expect("rotation stays orthonormal");
        let h_tgt = RotationMatrix::from_matrix(n_tgt.matrix() * h_hat_tgt.rotation.matrix())
            .expect("rotation product");
        let h_ref = RotationMatrix::from_matrix(n_ref.matrix() * h_hat_ref.rotation.matrix())
            .expect("rotation product");
        let r_pose = rotation_from_head_poses(&h_tgt, &h_ref).expect("rotation product");
        max_inter = max_inter.max((r.matrix() - r_pose.matrix()).norm());

        let d = crate::geometry::NormalizationDistance::new(rng_range(&mut rng, 0.2, 2.0))
            .expect("positive");
        let t = translation_from_rotation(&r, d);
        let origin = Vector3::new(0.0, 0.0, d.value());
        let mapped = RigidTransform::new(r, t).apply(&origin);
        max_fixed = max_fixed.max((mapped - origin).norm());
    }
    GeometrySuiteReport {
        trials: trials.max(1),
        max_interconvertibility_residual: max_inter,
        max_fixed_point_residual: max_fixed,
        tolerance: 1e-9,
    }
}

fn rng_range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    use rand::Rng;
    rng.gen_range(lo..=hi)
}

/// Per-pair residuals for a user-supplied rig description: treats each
/// camera's extrinsic as the head pose of a shared reference frame, so the
/// calibration-based and pose-based rotations must coincide.
#[derive(Debug, Clone)]
pub struct RigVerifyReport {
    pub camera_pairs: usize,
    pub max_interconvertibility_residual: f64,
    pub max_fixed_point_residual: f64,
    pub tolerance: f64,
}

impl RigVerifyReport {
    pub fn passed(&self) -> bool {
        self.max_interconvertibility_residual < self.tolerance
            && self.max_fixed_point_residual < self.tolerance
    }
}

impl std::fmt::Display for RigVerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "camera_pairs\t{}", self.camera_pairs)?;
        writeln!(
            f,
            "interconvertibility_max_residual\t{:.3e}",
            self.max_interconvertibility_residual
        )?;
        writeln!(
            f,
            "fixed_point_max_residual\t{:.3e}",
            self.max_fixed_point_residual
        )?;
        writeln!(f, "tolerance\t{:.1e}", self.tolerance)?;
        write!(f, "result\t{}", if self.passed() { "pass" } else { "FAIL" })
    }
}

pub fn verify_rig_description(rig: &RigDescription) -> Result<RigVerifyReport, GeometryError> {
    let mut max_inter = 0.0f64;
    let mut max_fixed = 0.0f64;
    let mut pairs = 0usize;
    for tgt in &rig.cameras {
        for ref_ in &rig.cameras {
            if tgt.id == ref_.id {
                continue;
            }
            pairs += 1;
            // Extrinsics are reference-frame→camera; the relative transform
            // between the two original camera frames follows directly.
            let c = tgt.extrinsic.compose(&ref_.extrinsic.inverse());
            let residual = verify_rotation_interconvertibility(
                &c,
                &ref_.normalization,
                &tgt.normalization,
                &ref_.extrinsic,
                &tgt.extrinsic,
            )?;
            max_inter = max_inter.max(residual);

            let r = rotation_from_calibration(&tgt.normalization, &c.rotation, &ref_.normalization)?;
            let t = translation_from_rotation(&r, rig.distance);
            let origin = Vector3::new(0.0, 0.0, rig.distance.value());
            let mapped = RigidTransform::new(r, t).apply(&origin);
            max_fixed = max_fixed.max((mapped - origin).norm());
        }
    }
    Ok(RigVerifyReport {
        camera_pairs: pairs,
        max_interconvertibility_residual: max_inter,
        max_fixed_point_residual: max_fixed,
        tolerance: 1e-9,
    })
}
