//! Central finite-difference gradient checking.
//!
//! The checker treats the network as a black-box scalar function of a flat
//! parameter vector, so it stays independent of the analytic backward path
//! it is used to validate.

/// Relative error between an analytic and a numerical derivative. The
/// denominator is floored at 1e-4 so finite-difference noise on near-zero
/// gradients does not register as disagreement.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-4);
    (analytic - numeric).abs() / denom
}

/// Compares `analytic` against central differences of `f` at `theta`,
/// perturbing every coordinate by ±`step`. Returns the worst relative error.
pub fn grad_check<F>(mut f: F, theta: &[f64], analytic: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(theta.len(), analytic.len());
    let mut work = theta.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let original = work[i];
        work[i] = original + step;
        let plus = f(&work);
        work[i] = original - step;
        let minus = f(&work);
        work[i] = original;
        let numeric = (plus - minus) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}
