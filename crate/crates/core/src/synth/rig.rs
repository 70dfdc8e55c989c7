//! Camera rig construction: cameras on a sphere looking at the origin, split
//! into training, interpolation-test (inside the training polar range) and
//! extrapolation-test (beyond it) sets.

use super::DataError;
use crate::geometry::{NormalizationDistance, RotationMatrix};
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraSplit {
    Train,
    TestInterpolation,
    TestExtrapolation,
}

impl CameraSplit {
    pub fn is_test(&self) -> bool {
        !matches!(self, CameraSplit::Train)
    }

    pub fn tag(&self) -> u8 {
        match self {
            CameraSplit::Train => 0,
            CameraSplit::TestInterpolation => 1,
            CameraSplit::TestExtrapolation => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, DataError> {
        match tag {
            0 => Ok(CameraSplit::Train),
            1 => Ok(CameraSplit::TestInterpolation),
            2 => Ok(CameraSplit::TestExtrapolation),
            other => Err(DataError::Parse(format!("unknown camera split tag {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CameraSplit::Train => "train",
            CameraSplit::TestInterpolation => "interp",
            CameraSplit::TestExtrapolation => "extrap",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, DataError> {
        match name {
            "train" => Ok(CameraSplit::Train),
            "interp" => Ok(CameraSplit::TestInterpolation),
            "extrap" => Ok(CameraSplit::TestExtrapolation),
            other => Err(DataError::Parse(format!("unknown camera split {other:?}"))),
        }
    }
}

/// Rig layout parameters. Polar ranges are degrees off the frontal axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    pub n_train: usize,
    pub n_interpolation: usize,
    pub n_extrapolation: usize,
    pub train_polar_deg: (f64, f64),
    pub extrap_polar_deg: (f64, f64),
    pub roll_deg: f64,
    pub distance: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            n_train: 12,
            n_interpolation: 3,
            n_extrapolation: 3,
            train_polar_deg: (5.0, 35.0),
            extrap_polar_deg: (45.0, 60.0),
            roll_deg: 10.0,
            distance: 0.6,
        }
    }
}

/// One camera: a world→normalized-camera rotation plus its placement angles
/// and split label.
#[derive(Debug, Clone, PartialEq)]
pub struct RigCamera {
    pub id: u32,
    pub rotation: RotationMatrix,
    pub polar_deg: f64,
    pub azimuth_deg: f64,
    pub roll_deg: f64,
    pub split: CameraSplit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    pub cameras: Vec<RigCamera>,
    pub d: NormalizationDistance,
}

impl CameraRig {
    pub fn camera(&self, id: u32) -> Result<&RigCamera, DataError> {
        self.cameras
            .iter()
            .find(|c| c.id == id)
            .ok_or(DataError::UnknownCamera(id))
    }

    pub fn ids_in(&self, split_test: bool) -> Vec<u32> {
        self.cameras
            .iter()
            .filter(|c| c.split.is_test() == split_test)
            .map(|c| c.id)
            .collect()
    }

    pub fn max_train_polar_deg(&self) -> f64 {
        self.cameras
            .iter()
            .filter(|c| c.split == CameraSplit::Train)
            .map(|c| c.polar_deg)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_train_polar_deg(&self) -> f64 {
        self.cameras
            .iter()
            .filter(|c| c.split == CameraSplit::Train)
            .map(|c| c.polar_deg)
            .fold(f64::INFINITY, f64::min)
    }
}

/// World→camera rotation for a camera tilted `polar` degrees off the frontal
/// axis toward azimuth `az`, with a roll about its own optical axis.
pub fn camera_rotation(polar_deg: f64, azimuth_deg: f64, roll_deg: f64) -> RotationMatrix {
    let az = azimuth_deg.to_radians();
    let axis = Vector3::new(az.cos(), az.sin(), 0.0);
    let tilt = RotationMatrix::from_axis_angle(axis, polar_deg.to_radians());
    RotationMatrix::about_z(roll_deg.to_radians()).compose(&tilt)
}

pub fn build_rig(cfg: &RigConfig, seed: u64) -> Result<CameraRig, DataError> {
    if cfg.n_train == 0 || cfg.n_interpolation == 0 || cfg.n_extrapolation == 0 {
        return Err(DataError::InvalidConfig(
            "every camera split needs at least one camera".into(),
        ));
    }
    if cfg.train_polar_deg.0 >= cfg.train_polar_deg.1 {
        return Err(DataError::InvalidConfig(format!(
            "empty training polar range {:?}",
            cfg.train_polar_deg
        )));
    }
    let d = NormalizationDistance::new(cfg.distance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cameras = Vec::with_capacity(cfg.n_train + cfg.n_interpolation + cfg.n_extrapolation);
    let mut id = 0u32;

    let place = |rng: &mut ChaCha8Rng, polar: f64, split: CameraSplit, id: &mut u32| {
        let azimuth = rng.gen_range(0.0..360.0);
        let roll = rng.gen_range(-cfg.roll_deg..=cfg.roll_deg);
        let cam = RigCamera {
            id: *id,
            rotation: camera_rotation(polar, azimuth, roll),
            polar_deg: polar,
            azimuth_deg: azimuth,
            roll_deg: roll,
            split,
        };
        *id += 1;
        cam
    };

    let (train_lo, train_hi) = cfg.train_polar_deg;
    for _ in 0..cfg.n_train {
        let polar = rng.gen_range(train_lo..=train_hi);
        cameras.push(place(&mut rng, polar, CameraSplit::Train, &mut id));
    }
    let actual_min = cameras
        .iter()
        .map(|c| c.polar_deg)
        .fold(f64::INFINITY, f64::min);
    let actual_max = cameras
        .iter()
        .map(|c| c.polar_deg)
        .fold(f64::NEG_INFINITY, f64::max);

    // Interpolation cameras sit strictly inside the realized training range.
    let margin = (actual_max - actual_min) * 0.05;
    let (ilo, ihi) = (actual_min + margin, actual_max - margin);
    if !(ilo < ihi) {
        return Err(DataError::InfeasibleSplit(format!(
            "training polar range [{actual_min:.2}, {actual_max:.2}] leaves no room inside"
        )));
    }
    for _ in 0..cfg.n_interpolation {
        let polar = rng.gen_range(ilo..ihi);
        cameras.push(place(
            &mut rng,
            polar,
            CameraSplit::TestInterpolation,
            &mut id,
        ));
    }

    // Extrapolation cameras lie strictly beyond the realized training range.
    let (elo, ehi) = cfg.extrap_polar_deg;
    let elo = elo.max(actual_max + 1.0);
    if !(elo < ehi) {
        return Err(DataError::InfeasibleSplit(format!(
            "extrapolation range ({:.2}, {:.2}) does not clear the training maximum {actual_max:.2}",
            cfg.extrap_polar_deg.0, cfg.extrap_polar_deg.1
        )));
    }
    for _ in 0..cfg.n_extrapolation {
        let polar = rng.gen_range(elo..=ehi);
        cameras.push(place(
            &mut rng,
            polar,
            CameraSplit::TestExtrapolation,
            &mut id,
        ));
    }

    Ok(CameraRig { cameras, d })
}
