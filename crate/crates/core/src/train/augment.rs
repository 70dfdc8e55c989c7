//! Feature-vector augmentations applied during training.
//!
//! Random masking zeroes contiguous spans of an observation (the 1-D analog
//! of masking an image with random squares) so the model cannot rely on any
//! single view. Views of a pair are masked independently.

use rand::Rng;

/// Masking parameters: trigger probability, total-coverage band, and the
/// length range of each span (all fractions of the vector width).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskParams {
    pub probability: f64,
    pub coverage: (f64, f64),
    pub span: (f64, f64),
}

impl MaskParams {
    pub fn from_train(section: &crate::config::TrainSection) -> Self {
        MaskParams {
            probability: section.mask_probability,
            coverage: section.mask_coverage,
            span: section.mask_span,
        }
    }
}

/// With probability `probability`, zeroes spans until the covered fraction
/// lands inside the coverage band. Span placements may overlap; a hard budget
/// keeps coverage from exceeding the band's upper edge.
pub fn mask_augment<R: Rng + ?Sized>(features: &mut [f64], params: &MaskParams, rng: &mut R) {
    if params.probability == 0.0 || rng.gen_range(0.0..1.0) >= params.probability {
        return;
    }
    let w = features.len();
    if w < 4 {
        return;
    }
    let target = (params.coverage.0 * w as f64).ceil() as usize;
    let budget_cap = (params.coverage.1 * w as f64).floor() as usize;
    let mut masked = vec![false; w];
    let mut covered = 0usize;
    let mut attempts = 0;
    while covered < target && attempts < 64 * w {
        attempts += 1;
        let budget = budget_cap.saturating_sub(covered);
        if budget == 0 {
            break;
        }
        let frac = rng.gen_range(params.span.0..=params.span.1);
        let len = ((frac * w as f64).round() as usize).clamp(1, budget);
        let start = rng.gen_range(0..=w - len);
        for m in &mut masked[start..start + len] {
            if !*m {
                *m = true;
                covered += 1;
            }
        }
    }
    for (f, m) in features.iter_mut().zip(masked.iter()) {
        if *m {
            *f = 0.0;
        }
    }
}

/// Additive i.i.d. Gaussian noise, the stand-in for photometric jitter on
/// abstract feature vectors.
pub fn noise_augment<R: Rng + ?Sized>(features: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    use rand_distr::{Distribution, StandardNormal};
    for f in features.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *f += sigma * z;
    }
}
