//! The generative observation model.
//!
//! An observation stands in for a normalized face image: a smooth nonlinear
//! encoding of the camera-frame gaze (fixed random projections through
//! sinusoids), the subject's identity latent, and additive noise. When the
//! camera-frame gaze pitch exceeds a threshold the encoding is attenuated
//! and its noise inflated, reproducing the top-view eyelid-occlusion
//! degradation pattern.

use super::rig::{CameraRig, RigCamera};
use super::DataError;
use crate::geometry::{
    orthonormalize, pitch_yaw_from_vector, GazeVector, RotationMatrix,
};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Observation-model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObsConfig {
    pub encoding_width: usize,
    pub identity_width: usize,
    pub noise_sigma: f64,
    pub projection_scale: f64,
    pub occlusion_pitch_deg: f64,
    pub occlusion_attenuation: f64,
    pub occlusion_noise_mult: f64,
    pub gaze_cone_deg: f64,
    pub jitter_deg: f64,
}

impl Default for ObsConfig {
    fn default() -> Self {
        ObsConfig {
            encoding_width: 28,
            identity_width: 4,
            noise_sigma: 0.02,
            projection_scale: 0.6,
            occlusion_pitch_deg: 20.0,
            occlusion_attenuation: 0.2,
            occlusion_noise_mult: 5.0,
            gaze_cone_deg: 30.0,
            jitter_deg: 2.0,
        }
    }
}

impl ObsConfig {
    pub fn observation_width(&self) -> usize {
        self.encoding_width + self.identity_width
    }
}

/// Fixed random sinusoidal embedding shared by every camera; the thing the
/// network has to learn to invert.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub config: ObsConfig,
    projections: Vec<[f64; 3]>,
    frequencies: Vec<f64>,
    phases: Vec<f64>,
}

impl ObservationModel {
    pub fn new<R: Rng + ?Sized>(config: ObsConfig, rng: &mut R) -> Self {
        let m = config.encoding_width;
        let mut projections = Vec::with_capacity(m);
        let mut frequencies = Vec::with_capacity(m);
        let mut phases = Vec::with_capacity(m);
        for j in 0..m {
            let sample = |rng: &mut R| -> f64 {
                let z: f64 = StandardNormal.sample(rng);
                z * config.projection_scale
            };
            projections.push([sample(rng), sample(rng), sample(rng)]);
            frequencies.push(if j % 2 == 0 { 1.0 } else { 1.6 });
            phases.push(rng.gen_range(0.0..std::f64::consts::TAU));
        }
        ObservationModel {
            config,
            projections,
            frequencies,
            phases,
        }
    }

    /// Noise-free encoding of a camera-frame gaze direction.
    pub fn encode(&self, gaze_cam: &Vector3<f64>) -> Vec<f64> {
        self.projections
            .iter()
            .zip(self.frequencies.iter())
            .zip(self.phases.iter())
            .map(|((p, f), ph)| {
                let dot = p[0] * gaze_cam.x + p[1] * gaze_cam.y + p[2] * gaze_cam.z;
                (f * dot + ph).sin()
            })
            .collect()
    }

    /// Renders one view given the effective world→camera rotation, returning
    /// the observation and the camera-frame ground truth.
    pub fn render<R: Rng + ?Sized>(
        &self,
        camera: u32,
        view_rotation: &RotationMatrix,
        sample: &WorldSample,
        rng: &mut R,
    ) -> (ViewObservation, GazeVector) {
        let gaze_cam = sample.gaze_world.rotated(view_rotation);
        let pitch = pitch_yaw_from_vector(&gaze_cam).pitch.to_degrees();
        let occluded = pitch > self.config.occlusion_pitch_deg;

        let mut enc = self.encode(gaze_cam.vector());
        let enc_sigma = if occluded {
            for v in &mut enc {
                *v *= self.config.occlusion_attenuation;
            }
            self.config.noise_sigma * self.config.occlusion_noise_mult
        } else {
            self.config.noise_sigma
        };

        let mut features = Vec::with_capacity(self.config.observation_width());
        for v in enc {
            let z: f64 = StandardNormal.sample(rng);
            features.push(v + enc_sigma * z);
        }
        for &v in &sample.identity {
            let z: f64 = StandardNormal.sample(rng);
            features.push(v + self.config.noise_sigma * z);
        }
        (
            ViewObservation {
                camera,
                features,
                occluded,
            },
            gaze_cam,
        )
    }
}

/// A subject's state for one time instant: identity latent plus gaze in the
/// world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSample {
    pub subject: u32,
    pub identity: Vec<f64>,
    pub gaze_world: GazeVector,
}

/// Gaze drawn uniformly over a spherical cap around the frontal direction
/// (0,0,−1); identity entries uniform in [−1, 1].
pub fn sample_world<R: Rng + ?Sized>(
    rng: &mut R,
    subject: u32,
    identity: &[f64],
    cone_deg: f64,
) -> WorldSample {
    let cos_max = cone_deg.to_radians().cos();
    let cos_theta = rng.gen_range(cos_max..=1.0);
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let v = Vector3::new(sin_theta * phi.cos(), sin_theta * phi.sin(), -cos_theta);
    WorldSample {
        subject,
        identity: identity.to_vec(),
        gaze_world: GazeVector::from_direction(v).expect("cap sample is unit"),
    }
}

pub fn sample_identity<R: Rng + ?Sized>(rng: &mut R, width: usize) -> Vec<f64> {
    (0..width).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Desk-scale stand-in for one normalized face image.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewObservation {
    pub camera: u32,
    pub features: Vec<f64>,
    pub occluded: bool,
}

/// One training or evaluation record: a pair of views of the same instant,
/// the relative rotation between their (jittered) camera frames, and the
/// per-frame ground truths. `gt_tgt = rotation · gt_ref` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub subject: u32,
    pub fold: u32,
    pub cam_tgt: u32,
    pub cam_ref: u32,
    pub tgt_split: super::rig::CameraSplit,
    pub ref_split: super::rig::CameraSplit,
    pub rotation: RotationMatrix,
    pub gt_tgt: GazeVector,
    pub gt_ref: GazeVector,
    pub obs_tgt: ViewObservation,
    pub obs_ref: ViewObservation,
}

impl SamplePair {
    pub fn is_train_pair(&self) -> bool {
        !self.tgt_split.is_test() && !self.ref_split.is_test()
    }
}

/// Small random rotation: uniform axis, N(0, σ) angle.
pub fn small_rotation<R: Rng + ?Sized>(rng: &mut R, sigma_rad: f64) -> RotationMatrix {
    if sigma_rad == 0.0 {
        return RotationMatrix::identity();
    }
    let axis = random_axis(rng);
    let angle: f64 = {
        let z: f64 = StandardNormal.sample(rng);
        z * sigma_rad
    };
    RotationMatrix::from_axis_angle(axis, angle)
}

fn random_axis<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let (x, y, z): (f64, f64, f64) = (
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let v = Vector3::new(x, y, z);
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Noisy rotation for sensitivity experiments: axis-angle perturbation with
/// N(0, noise_level) angle, re-orthonormalized.
pub fn perturb_rotation<R: Rng + ?Sized>(
    r: &RotationMatrix,
    noise_level_rad: f64,
    rng: &mut R,
) -> RotationMatrix {
    if noise_level_rad == 0.0 {
        return *r;
    }
    let noise = small_rotation(rng, noise_level_rad);
    orthonormalize(&(noise.matrix() * r.matrix())).expect("perturbed rotation stays regular")
}

/// Per-view head-pose jitter composed into the camera rotation.
fn jittered_view<R: Rng + ?Sized>(
    cam: &RigCamera,
    jitter_deg: f64,
    rng: &mut R,
) -> RotationMatrix {
    small_rotation(rng, jitter_deg.to_radians()).compose(&cam.rotation)
}

/// Builds one pair record: draws per-view jitters, computes the relative
/// rotation `R = R_tgt · R_refᵀ` between the jittered frames, and renders
/// both observations.
pub fn make_pair<R: Rng + ?Sized>(
    rig: &CameraRig,
    model: &ObservationModel,
    cam_tgt: u32,
    cam_ref: u32,
    sample: &WorldSample,
    rng: &mut R,
) -> Result<SamplePair, DataError> {
    if cam_tgt == cam_ref {
        return Err(DataError::SameCamera(cam_tgt));
    }
    let tgt = rig.camera(cam_tgt)?;
    let ref_ = rig.camera(cam_ref)?;

    let view_tgt = jittered_view(tgt, model.config.jitter_deg, rng);
    let view_ref = jittered_view(ref_, model.config.jitter_deg, rng);
    let rotation = RotationMatrix::from_matrix(view_tgt.matrix() * view_ref.matrix().transpose())
        .expect("product of rotations");

    let (obs_tgt, gt_tgt) = model.render(cam_tgt, &view_tgt, sample, rng);
    let (obs_ref, gt_ref) = model.render(cam_ref, &view_ref, sample, rng);

    Ok(SamplePair {
        subject: sample.subject,
        fold: 0,
        cam_tgt,
        cam_ref,
        tgt_split: tgt.split,
        ref_split: ref_.split,
        rotation,
        gt_tgt,
        gt_ref,
        obs_tgt,
        obs_ref,
    })
}

#[cfg(test)]
mod tests {
    use super::super::rig::{build_rig, RigConfig};
    use super::*;
    use crate::geometry::random_rotation;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn model(seed: u64) -> ObservationModel {
        ObservationModel::new(ObsConfig::default(), &mut rng(seed))
    }

    #[test]
    fn rendering_is_deterministic_per_rng_state() {
        let m = model(1);
        let rig = build_rig(&RigConfig::default(), 2).unwrap();
        let sample = sample_world(&mut rng(3), 0, &[0.1, -0.2, 0.3, 0.4], 30.0);
        let cam = &rig.cameras[0];
        let (a, _) = m.render(cam.id, &cam.rotation, &sample, &mut rng(4));
        let (b, _) = m.render(cam.id, &cam.rotation, &sample, &mut rng(4));
        assert_eq!(a, b);
    }

    #[test]
    fn pair_ground_truths_are_rotation_consistent() {
        let m = model(5);
        let rig = build_rig(&RigConfig::default(), 6).unwrap();
        let mut r = rng(7);
        for _ in 0..10_000 {
            let sample = sample_world(&mut r, 0, &[0.0; 4], 30.0);
            let pair = make_pair(&rig, &m, 0, 5, &sample, &mut r).unwrap();
            let mapped = pair.gt_ref.rotated(&pair.rotation);
            let err = (mapped.vector() - pair.gt_tgt.vector()).norm();
            assert!(err < 1e-9, "consistency violated by {err}");
        }
    }

    #[test]
    fn same_camera_is_rejected() {
        let m = model(8);
        let rig = build_rig(&RigConfig::default(), 9).unwrap();
        let sample = sample_world(&mut rng(10), 0, &[0.0; 4], 30.0);
        assert!(matches!(
            make_pair(&rig, &m, 3, 3, &sample, &mut rng(11)),
            Err(DataError::SameCamera(3))
        ));
        assert!(matches!(
            make_pair(&rig, &m, 3, 99, &sample, &mut rng(11)),
            Err(DataError::UnknownCamera(99))
        ));
    }

    #[test]
    fn identity_rig_pair_has_equal_ground_truths() {
        // Two cameras with identical rotations and no jitter.
        let mut rig = build_rig(&RigConfig::default(), 12).unwrap();
        rig.cameras[1].rotation = rig.cameras[0].rotation;
        let mut cfg = ObsConfig::default();
        cfg.jitter_deg = 0.0;
        let m = ObservationModel::new(cfg, &mut rng(13));
        let sample = sample_world(&mut rng(14), 0, &[0.0; 4], 30.0);
        let pair = make_pair(&rig, &m, 0, 1, &sample, &mut rng(15)).unwrap();
        let delta = (pair.gt_tgt.vector() - pair.gt_ref.vector()).norm();
        assert!(delta < 1e-12);
        assert!((pair.rotation.matrix() - nalgebra::Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn perturb_zero_noise_is_identity() {
        let mut r = rng(16);
        let rot = random_rotation(&mut r);
        let out = perturb_rotation(&rot, 0.0, &mut r);
        assert_eq!(out.matrix(), rot.matrix());
    }

    #[test]
    fn perturb_mean_geodesic_distance_tracks_noise_level() {
        let mut r = rng(17);
        let rot = random_rotation(&mut r);
        let noise = 0.05;
        let mut mean = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let out = perturb_rotation(&rot, noise, &mut r);
            mean += rot.geodesic_angle(&out);
        }
        mean /= n as f64;
        assert!(
            (0.03..0.07).contains(&mean),
            "mean geodesic distance {mean}"
        );
    }

    #[test]
    fn perturb_output_is_orthonormal() {
        let mut r = rng(18);
        for _ in 0..100 {
            let rot = random_rotation(&mut r);
            let out = perturb_rotation(&rot, 0.2, &mut r);
            assert!(RotationMatrix::orthonormality_residual(out.matrix()) < 1e-9);
        }
    }

    #[test]
    fn occlusion_triggers_on_high_camera_frame_pitch() {
        let m = model(19);
        // A gaze pointing steeply "up" in the camera frame: pitch = asin(−v_y).
        let steep = GazeVector::from_direction(Vector3::new(0.0, -0.8, -0.6)).unwrap();
        let pitch = pitch_yaw_from_vector(&steep).pitch.to_degrees();
        assert!(pitch > m.config.occlusion_pitch_deg);
        let sample = WorldSample {
            subject: 0,
            identity: vec![0.0; 4],
            gaze_world: steep,
        };
        let (obs, _) = m.render(0, &RotationMatrix::identity(), &sample, &mut rng(20));
        assert!(obs.occluded);

        let frontal = WorldSample {
            subject: 0,
            identity: vec![0.0; 4],
            gaze_world: GazeVector::from_direction(Vector3::new(0.0, 0.0, -1.0)).unwrap(),
        };
        let (obs, _) = m.render(0, &RotationMatrix::identity(), &frontal, &mut rng(21));
        assert!(!obs.occluded);
    }

    #[test]
    fn world_samples_stay_in_cone_and_bounds() {
        let mut r = rng(22);
        let frontal = Vector3::new(0.0, 0.0, -1.0);
        for _ in 0..1000 {
            let id = sample_identity(&mut r, 4);
            assert!(id.iter().all(|v| (-1.0..=1.0).contains(v)));
            let s = sample_world(&mut r, 0, &id, 30.0);
            let cos = s.gaze_world.vector().dot(&frontal);
            assert!(cos >= 30f64.to_radians().cos() - 1e-12);
        }
    }
}
