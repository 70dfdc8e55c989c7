//! Deterministic synthetic multi-camera benchmark: rig construction with the
//! train / interpolation / extrapolation camera split, an observation model
//! with pose-dependent degradation, pairing, serialization, and the probe
//! checks that keep the task honest.

pub mod dataset;
pub mod observe;
pub mod probe;
pub mod rig;

pub use dataset::{
    generate_dataset, perturb_dataset_rotations, DataConfig, Dataset, DatasetHeader, FileFormat,
    GenerationReport,
};
pub use observe::{
    make_pair, perturb_rotation, sample_identity, sample_world, small_rotation, ObsConfig,
    ObservationModel, SamplePair, ViewObservation, WorldSample,
};
pub use probe::{discriminability_check, DiscriminabilityReport, LinearProbe};
pub use rig::{build_rig, camera_rotation, CameraRig, CameraSplit, RigCamera, RigConfig};

use crate::geometry::GeometryError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("infeasible camera split: {0}")]
    InfeasibleSplit(String),
    #[error("unknown camera id {0}")]
    UnknownCamera(u32),
    #[error("target and reference camera must differ (got {0} twice)")]
    SameCamera(u32),
    #[error("invalid data config: {0}")]
    InvalidConfig(String),
    #[error("dataset parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
