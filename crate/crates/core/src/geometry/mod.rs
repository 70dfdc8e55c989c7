//! SO(3) utilities and normalization geometry.
//!
//! Everything here works in the normalized-camera convention: each view has a
//! virtual camera at a fixed distance `d` on its z-axis, so the relationship
//! between two views reduces to a pure rotation. The module provides the two
//! constructions of that relative rotation (from extrinsic calibration and
//! from per-view head poses), the translation that the rotation uniquely
//! determines, and numeric checks that the two constructions agree.

mod rigfile;

pub use rigfile::{RigDescription, RigFileCamera};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Frobenius tolerance for rotations produced by this library.
pub const ROTATION_CONSTRUCTION_TOL: f64 = 1e-9;
/// Frobenius tolerance accepted for user-supplied rotations (calibration noise).
pub const ROTATION_INPUT_TOL: f64 = 1e-6;
/// Unit-norm tolerance for gaze vectors.
pub const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not a rotation (orthonormality residual {residual:.3e}, det {det:.9})")]
    InvalidRotation { residual: f64, det: f64 },
    #[error("vector is not unit length (norm {norm:.9})")]
    NotUnit { norm: f64 },
    #[error("matrix is singular or nearly singular (det {det:.3e})")]
    Singular { det: f64 },
    #[error("rig is inconsistent: head poses do not satisfy the extrinsic relation (residual {residual:.3e})")]
    InconsistentRig { residual: f64 },
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("pitch/yaw out of range (pitch {pitch}, yaw {yaw})")]
    AngleOutOfRange { pitch: f64, yaw: f64 },
    #[error("failed to parse rig description: {0}")]
    RigParse(String),
}

/// A validated element of SO(3).
///
/// Stored matrices always satisfy `‖m·mᵀ − I‖_F < 1e-9` and `det ≈ +1`.
/// User-facing constructors accept noisier input (1e-6) and project it to the
/// nearest rotation so the stored value still meets the strict invariant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Matrix3::identity())
    }

    /// Validates at the construction tolerance (1e-9 Frobenius).
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        Self::check(&m, ROTATION_CONSTRUCTION_TOL)?;
        Ok(RotationMatrix(m))
    }

    /// Accepts measurement-grade input (1e-6 Frobenius), then projects to the
    /// nearest exact rotation so the stored matrix meets the type invariant.
    pub fn from_measured(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        Self::check(&m, ROTATION_INPUT_TOL)?;
        orthonormalize(&m)
    }

    fn check(m: &Matrix3<f64>, tol: f64) -> Result<(), GeometryError> {
        let residual = (m * m.transpose() - Matrix3::identity()).norm();
        let det = m.determinant();
        if residual >= tol || (det - 1.0).abs() >= tol {
            return Err(GeometryError::InvalidRotation { residual, det });
        }
        Ok(())
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        RotationMatrix(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        RotationMatrix(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        RotationMatrix(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Rodrigues rotation about an arbitrary axis. The axis is normalized.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n < 1e-15 || angle == 0.0 {
            return Self::identity();
        }
        let a = axis / n;
        let (s, c) = angle.sin_cos();
        let k = Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0);
        RotationMatrix(Matrix3::identity() + k * s + k * k * (1.0 - c))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> RotationMatrix {
        RotationMatrix(self.0.transpose())
    }

    pub fn compose(&self, other: &RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Geodesic angle to another rotation, in radians.
    pub fn geodesic_angle(&self, other: &RotationMatrix) -> f64 {
        let rel = self.0.transpose() * other.0;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Frobenius distance of `m` from orthonormality, `‖m·mᵀ − I‖_F`.
    pub fn orthonormality_residual(m: &Matrix3<f64>) -> f64 {
        (m * m.transpose() - Matrix3::identity()).norm()
    }

    /// Row-major 9-element view, the layout used by file formats.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::new(
            v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8],
        ))
    }

    /// Same as [`from_row_major`](Self::from_row_major) but at the input tolerance.
    pub fn from_row_major_measured(v: &[f64; 9]) -> Result<Self, GeometryError> {
        Self::from_measured(Matrix3::new(
            v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8],
        ))
    }
}

/// Rotation plus translation, kept as separate fields rather than a 4×4 block
/// matrix so the rotation invariant stays enforced by the type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: RotationMatrix,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: RotationMatrix::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: RotationMatrix, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn rotation_only(rotation: RotationMatrix) -> Self {
        RigidTransform {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// Composition `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn inverse(&self) -> RigidTransform {
        let rot_inv = self.rotation.transpose();
        RigidTransform {
            rotation: rot_inv,
            translation: -rot_inv.rotate(&self.translation),
        }
    }
}

/// A unit 3-vector in a normalized camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeVector(Vector3<f64>);

impl GazeVector {
    /// Requires `|‖v‖ − 1| ≤ 1e-6`. Vectors already meeting the strict 1e-9
    /// invariant are stored verbatim (so serialization round-trips bit-exactly);
    /// noisier input is renormalized.
    pub fn new(v: Vector3<f64>) -> Result<Self, GeometryError> {
        let norm = v.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(GeometryError::NotUnit { norm });
        }
        if (norm - 1.0).abs() < 1e-9 {
            Ok(GazeVector(v))
        } else {
            Ok(GazeVector(v / norm))
        }
    }

    /// Normalizes an arbitrary non-degenerate vector.
    pub fn from_direction(v: Vector3<f64>) -> Result<Self, GeometryError> {
        let norm = v.norm();
        if norm < 1e-12 {
            return Err(GeometryError::NotUnit { norm });
        }
        Ok(GazeVector(v / norm))
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn rotated(&self, r: &RotationMatrix) -> GazeVector {
        // Rotation preserves the unit invariant.
        GazeVector(r.rotate(&self.0))
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }
}

/// Pitch/yaw angles in radians; pitch ∈ [−π/2, π/2], yaw ∈ (−π, π].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchYaw {
    pub pitch: f64,
    pub yaw: f64,
}

impl PitchYaw {
    pub fn new(pitch: f64, yaw: f64) -> Result<Self, GeometryError> {
        use std::f64::consts::{FRAC_PI_2, PI};
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&pitch) || yaw <= -PI || yaw > PI {
            return Err(GeometryError::AngleOutOfRange { pitch, yaw });
        }
        Ok(PitchYaw { pitch, yaw })
    }
}

/// A positive distance along the normalized camera z-axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationDistance(f64);

impl NormalizationDistance {
    pub fn new(d: f64) -> Result<Self, GeometryError> {
        if !(d > 0.0) {
            return Err(GeometryError::NonPositiveDistance(d));
        }
        Ok(NormalizationDistance(d))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Relative rotation between two normalized camera frames from extrinsic
/// calibration: `N_tgt · R̃ · N_refᵀ`, where `R̃` relates the original camera
/// frames and `N_*` are the normalizing rotations.
pub fn rotation_from_calibration(
    n_tgt: &RotationMatrix,
    r_tilde: &RotationMatrix,
    n_ref: &RotationMatrix,
) -> Result<RotationMatrix, GeometryError> {
    RotationMatrix::from_matrix(n_tgt.matrix() * r_tilde.matrix() * n_ref.matrix().transpose())
}

/// Relative rotation from per-view head poses: `H_tgt · H_refᵀ`, where `H_*`
/// rotate the head frame into each normalized camera frame.
pub fn rotation_from_head_poses(
    h_tgt: &RotationMatrix,
    h_ref: &RotationMatrix,
) -> Result<RotationMatrix, GeometryError> {
    RotationMatrix::from_matrix(h_tgt.matrix() * h_ref.matrix().transpose())
}

/// The translation that a relative rotation determines under normalization:
/// `t = (0,0,d)ᵀ − d·r_z` with `r_z` the third column of `r`. Assembled with
/// `r` into a rigid transform it fixes the point `(0,0,d)`.
pub fn translation_from_rotation(r: &RotationMatrix, d: NormalizationDistance) -> Vector3<f64> {
    let rz = r.matrix().column(2).into_owned();
    Vector3::new(0.0, 0.0, d.value()) - rz * d.value()
}

/// Checks that the calibration-based and head-pose-based rotation definitions
/// agree on a rig. `c` is the extrinsic transform between the original camera
/// frames, `h_hat_*` the head poses in those frames, and `n_*` the
/// normalizing rotations. Requires `Ĥ_tgt = C·Ĥ_ref` to hold (the rig
/// consistency precondition); returns the Frobenius residual of
/// `N_tgt C N_refᵀ − H_tgt H_refᵀ` over the rotation blocks.
pub fn verify_rotation_interconvertibility(
    c: &RigidTransform,
    n_ref: &RotationMatrix,
    n_tgt: &RotationMatrix,
    h_hat_ref: &RigidTransform,
    h_hat_tgt: &RigidTransform,
) -> Result<f64, GeometryError> {
    let predicted = c.compose(h_hat_ref);
    let rot_residual = (predicted.rotation.matrix() - h_hat_tgt.rotation.matrix()).norm();
    let trans_residual = (predicted.translation - h_hat_tgt.translation).norm();
    let residual = rot_residual.hypot(trans_residual);
    if residual > 1e-6 {
        return Err(GeometryError::InconsistentRig { residual });
    }

    // H = N·Ĥ, with N treated as a pure rotation.
    let h_tgt = n_tgt.matrix() * h_hat_tgt.rotation.matrix();
    let h_ref = n_ref.matrix() * h_hat_ref.rotation.matrix();
    let lhs = n_tgt.matrix() * c.rotation.matrix() * n_ref.matrix().transpose();
    let rhs = h_tgt * h_ref.transpose();
    Ok((lhs - rhs).norm())
}

/// Angle between two gaze vectors in degrees, in [0, 180].
pub fn angular_error(g1: &GazeVector, g2: &GazeVector) -> f64 {
    let dot = g1.vector().dot(g2.vector()).clamp(-1.0, 1.0);
    dot.acos().to_degrees()
}

/// Angle between two raw direction vectors, validating unit norm at 1e-6.
pub fn angular_error_checked(v1: &Vector3<f64>, v2: &Vector3<f64>) -> Result<f64, GeometryError> {
    let g1 = GazeVector::new(*v1)?;
    let g2 = GazeVector::new(*v2)?;
    Ok(angular_error(&g1, &g2))
}

/// Pitch/yaw of a gaze vector: pitch = asin(−v_y), yaw = atan2(−v_x, −v_z).
/// Under this convention (0,0,−1) is the frontal gaze.
pub fn pitch_yaw_from_vector(g: &GazeVector) -> PitchYaw {
    let v = g.vector();
    PitchYaw {
        pitch: (-v.y).clamp(-1.0, 1.0).asin(),
        yaw: (-v.x).atan2(-v.z),
    }
}

/// Inverse of [`pitch_yaw_from_vector`]; round-trips within 1e-9 away from
/// the pitch = ±π/2 poles.
pub fn vector_from_pitch_yaw(p: &PitchYaw) -> GazeVector {
    let (sp, cp) = p.pitch.sin_cos();
    let (sy, cy) = p.yaw.sin_cos();
    GazeVector(Vector3::new(-cp * sy, -sp, -cp * cy))
}

/// Haar-uniform rotation, sampled through a uniform unit quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> RotationMatrix {
    loop {
        let q: [f64; 4] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if n < 1e-6 {
            continue;
        }
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        let m = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        return RotationMatrix(m);
    }
}

/// Random rigid transform: Haar rotation plus a translation with entries in
/// the given symmetric range.
pub fn random_rigid<R: Rng + ?Sized>(rng: &mut R, translation_scale: f64) -> RigidTransform {
    let rotation = random_rotation(rng);
    let t = Vector3::new(
        rng.gen_range(-translation_scale..=translation_scale),
        rng.gen_range(-translation_scale..=translation_scale),
        rng.gen_range(-translation_scale..=translation_scale),
    );
    RigidTransform::new(rotation, t)
}

/// Nearest rotation to `m` by polar decomposition, with det forced to +1.
pub fn orthonormalize(m: &Matrix3<f64>) -> Result<RotationMatrix, GeometryError> {
    let det = m.determinant();
    if det.abs() < 1e-12 {
        return Err(GeometryError::Singular { det });
    }
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        r = u * flip * v_t;
    }
    RotationMatrix::from_matrix(r)
}

#[cfg(test)]
mod tests;
