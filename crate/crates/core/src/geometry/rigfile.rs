//! Rig description files.
//!
//! A rig file is structured text (TOML) listing, per camera, the extrinsic
//! transform from a shared reference frame into the original camera frame and
//! the normalizing rotation into the normalized camera frame, plus the
//! normalization distance `d`:
//!
//! ```toml
//! distance = 0.6
//!
//! [[camera]]
//! id = 0
//! extrinsic_rotation = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
//! extrinsic_translation = [0.0, 0.0, 0.0]
//! normalization_rotation = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
//! ```
//!
//! Rotations failing the orthonormality check at the 1e-6 input tolerance are
//! rejected; accepted rotations are projected to the nearest exact rotation.

use super::{GeometryError, NormalizationDistance, RigidTransform, RotationMatrix};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawRigFile {
    distance: f64,
    #[serde(default)]
    camera: Vec<RawCamera>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawCamera {
    id: u32,
    extrinsic_rotation: [[f64; 3]; 3],
    extrinsic_translation: [f64; 3],
    normalization_rotation: [[f64; 3]; 3],
}

/// One parsed camera of a rig description.
#[derive(Debug, Clone)]
pub struct RigFileCamera {
    pub id: u32,
    /// Reference frame → original camera frame.
    pub extrinsic: RigidTransform,
    /// Original camera frame → normalized camera frame.
    pub normalization: RotationMatrix,
}

/// A parsed and validated rig description.
#[derive(Debug, Clone)]
pub struct RigDescription {
    pub distance: NormalizationDistance,
    pub cameras: Vec<RigFileCamera>,
}

fn matrix_from_rows(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::new(
        rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
        rows[2][1], rows[2][2],
    )
}

fn rows_from_matrix(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

impl RigDescription {
    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        let raw: RawRigFile =
            toml::from_str(text).map_err(|e| GeometryError::RigParse(e.to_string()))?;
        let distance = NormalizationDistance::new(raw.distance)?;
        let mut cameras = Vec::with_capacity(raw.camera.len());
        for cam in &raw.camera {
            let rotation = RotationMatrix::from_measured(matrix_from_rows(&cam.extrinsic_rotation))
                .map_err(|e| {
                    GeometryError::RigParse(format!("camera {}: extrinsic_rotation: {e}", cam.id))
                })?;
            let normalization =
                RotationMatrix::from_measured(matrix_from_rows(&cam.normalization_rotation))
                    .map_err(|e| {
                        GeometryError::RigParse(format!(
                            "camera {}: normalization_rotation: {e}",
                            cam.id
                        ))
                    })?;
            let t = cam.extrinsic_translation;
            cameras.push(RigFileCamera {
                id: cam.id,
                extrinsic: RigidTransform::new(rotation, Vector3::new(t[0], t[1], t[2])),
                normalization,
            });
        }
        Ok(RigDescription { distance, cameras })
    }

    pub fn load(path: &Path) -> Result<Self, GeometryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeometryError::RigParse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        let raw = RawRigFile {
            distance: self.distance.value(),
            camera: self
                .cameras
                .iter()
                .map(|c| RawCamera {
                    id: c.id,
                    extrinsic_rotation: rows_from_matrix(c.extrinsic.rotation.matrix()),
                    extrinsic_translation: [
                        c.extrinsic.translation.x,
                        c.extrinsic.translation.y,
                        c.extrinsic.translation.z,
                    ],
                    normalization_rotation: rows_from_matrix(c.normalization.matrix()),
                })
                .collect(),
        };
        toml::to_string_pretty(&raw).expect("rig serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_rigid, random_rotation};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_description(seed: u64, n: u32) -> RigDescription {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cameras = (0..n)
            .map(|id| RigFileCamera {
                id,
                extrinsic: random_rigid(&mut rng, 1.0),
                normalization: random_rotation(&mut rng),
            })
            .collect();
        RigDescription {
            distance: NormalizationDistance::new(0.6).unwrap(),
            cameras,
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let rig = sample_description(3, 4);
        let text = rig.to_toml();
        let parsed = RigDescription::parse(&text).unwrap();
        assert_eq!(parsed.cameras.len(), 4);
        assert_eq!(parsed.distance.value(), 0.6);
        for (a, b) in rig.cameras.iter().zip(parsed.cameras.iter()) {
            assert!((a.extrinsic.rotation.matrix() - b.extrinsic.rotation.matrix()).norm() < 1e-9);
            assert!((a.extrinsic.translation - b.extrinsic.translation).norm() < 1e-12);
            assert!((a.normalization.matrix() - b.normalization.matrix()).norm() < 1e-9);
        }
    }

    #[test]
    fn rejects_invalid_rotation_at_input_tolerance() {
        // 1.01 on the diagonal is well past the 1e-6 acceptance threshold.
        let text = r#"
distance = 0.6

[[camera]]
id = 0
extrinsic_rotation = [[1.01, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
extrinsic_translation = [0.0, 0.0, 0.0]
normalization_rotation = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
"#;
        let err = RigDescription::parse(text).unwrap_err();
        assert!(matches!(err, GeometryError::RigParse(_)));
    }

    #[test]
    fn rejects_non_positive_distance() {
        let text = "distance = 0.0\n";
        assert!(RigDescription::parse(text).is_err());
    }
}
