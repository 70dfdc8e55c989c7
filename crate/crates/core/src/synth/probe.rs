//! Ridge-regression probes over observations.
//!
//! The probes are measurement instruments for the benchmark itself: a
//! single-view probe checks that the gaze encoding is recoverable, and the
//! single- vs two-view comparison on occluded targets checks that the task
//! genuinely rewards cross-view fusion given the true rotation.

use super::observe::SamplePair;
use crate::geometry::{angular_error, GazeVector};
use nalgebra::{DMatrix, DVector, Vector3};

/// Linear map (with bias) from observation features to a 3-vector gaze
/// estimate, fit by ridge regression.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    /// (width+1) × 3, bias row last.
    weights: DMatrix<f64>,
}

impl LinearProbe {
    /// Least-squares fit of features → camera-frame gaze.
    pub fn fit(features: &[&[f64]], targets: &[GazeVector], ridge: f64) -> Option<LinearProbe> {
        let n = features.len();
        if n == 0 || n != targets.len() {
            return None;
        }
        let w = features[0].len() + 1;
        let mut a = DMatrix::zeros(n, w);
        for (r, row) in features.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                a[(r, c)] = *v;
            }
            a[(r, w - 1)] = 1.0;
        }
        let ata = a.transpose() * &a + DMatrix::identity(w, w) * ridge;
        let chol = ata.cholesky()?;
        let mut weights = DMatrix::zeros(w, 3);
        for axis in 0..3 {
            let y = DVector::from_iterator(n, targets.iter().map(|g| g.to_array()[axis]));
            let aty = a.transpose() * y;
            let x = chol.solve(&aty);
            weights.set_column(axis, &x);
        }
        Some(LinearProbe { weights })
    }

    pub fn predict(&self, features: &[f64]) -> Option<GazeVector> {
        let w = self.weights.nrows();
        debug_assert_eq!(features.len() + 1, w);
        let mut out = [0.0f64; 3];
        for axis in 0..3 {
            let mut acc = self.weights[(w - 1, axis)];
            for (r, v) in features.iter().enumerate() {
                acc += v * self.weights[(r, axis)];
            }
            out[axis] = acc;
        }
        GazeVector::from_direction(Vector3::new(out[0], out[1], out[2])).ok()
    }

    /// Mean angular error over a labelled set, in degrees.
    pub fn mean_error_deg(&self, features: &[&[f64]], targets: &[GazeVector]) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (f, t) in features.iter().zip(targets.iter()) {
            if let Some(pred) = self.predict(f) {
                sum += angular_error(&pred, t);
                count += 1;
            } else {
                sum += 180.0;
                count += 1;
            }
        }
        if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        }
    }
}

/// Result of the fusion-discriminability check run over a generated dataset.
#[derive(Debug, Clone)]
pub struct DiscriminabilityReport {
    /// Mean single-view probe error on occluded target views (degrees).
    pub single_view_deg: f64,
    /// Mean error of the rotation-assisted two-view combination (degrees).
    pub two_view_deg: f64,
    /// Number of test pairs entering the comparison.
    pub pairs: usize,
}

impl DiscriminabilityReport {
    pub fn passes(&self) -> bool {
        self.pairs > 0 && self.two_view_deg < self.single_view_deg
    }
}

/// Fits a probe on training-pair views, then compares single-view decoding of
/// the target against averaging it with the rotated reference decoding on
/// test pairs with degraded targets.
pub fn discriminability_check(
    train_pairs: &[&SamplePair],
    test_pairs: &[&SamplePair],
    max_fit_rows: usize,
) -> DiscriminabilityReport {
    let mut features: Vec<&[f64]> = Vec::new();
    let mut targets: Vec<GazeVector> = Vec::new();
    for pair in train_pairs {
        if features.len() + 2 > max_fit_rows {
            break;
        }
        features.push(&pair.obs_tgt.features);
        targets.push(pair.gt_tgt);
        features.push(&pair.obs_ref.features);
        targets.push(pair.gt_ref);
    }
    let probe = match LinearProbe::fit(&features, &targets, 1e-6) {
        Some(p) => p,
        None => {
            return DiscriminabilityReport {
                single_view_deg: f64::NAN,
                two_view_deg: f64::NAN,
                pairs: 0,
            }
        }
    };

    // Prefer the clearest comparison: occluded target, clean reference.
    let mut chosen: Vec<&&SamplePair> = test_pairs
        .iter()
        .filter(|p| p.obs_tgt.occluded && !p.obs_ref.occluded)
        .collect();
    if chosen.is_empty() {
        chosen = test_pairs.iter().filter(|p| p.obs_tgt.occluded).collect();
    }
    if chosen.is_empty() {
        chosen = test_pairs.iter().collect();
    }

    let mut single = 0.0;
    let mut two = 0.0;
    let mut count = 0usize;
    for pair in chosen {
        let (Some(p_tgt), Some(p_ref)) = (
            probe.predict(&pair.obs_tgt.features),
            probe.predict(&pair.obs_ref.features),
        ) else {
            continue;
        };
        let transferred = p_ref.rotated(&pair.rotation);
        let Ok(combined) = GazeVector::from_direction(p_tgt.vector() + transferred.vector())
        else {
            continue;
        };
        single += angular_error(&p_tgt, &pair.gt_tgt);
        two += angular_error(&combined, &pair.gt_tgt);
        count += 1;
    }
    DiscriminabilityReport {
        single_view_deg: if count > 0 {
            single / count as f64
        } else {
            f64::NAN
        },
        two_view_deg: if count > 0 { two / count as f64 } else { f64::NAN },
        pairs: count,
    }
}
