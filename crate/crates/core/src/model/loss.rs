//! Angular loss over all intermediate outputs: the per-block term is
//! `arccos(g_tgtᵀĝ_tgt) + arccos(g_refᵀĝ_ref)` (radians) and block `i` of
//! `l` is weighted by `α^(l−i)`, so the final block carries weight 1.

use super::net::{BlockGaze, BlockGazeGrad};
use super::ModelError;
use crate::geometry::GazeVector;
use crate::nn::{NnError, Tensor2};

/// Clamp applied to the dot product before differentiating arccos; keeps the
/// gradient finite where |dot| → 1.
const DOT_GRAD_CLAMP: f64 = 1e-7;

/// Eq-style block weights `(α^(l−1), …, α, 1)`, index 0 = first block.
/// Computed by repeated multiplication so that α = 0.5 gives exact binary
/// fractions.
pub fn block_weights(blocks: usize, alpha: f64) -> Vec<f64> {
    let mut w = vec![1.0; blocks];
    for i in (0..blocks.saturating_sub(1)).rev() {
        w[i] = w[i + 1] * alpha;
    }
    w
}

/// Loss value of one angular term and its gradient w.r.t. the prediction.
fn angular_term(pred: &[f64], truth: &[f64]) -> (f64, [f64; 3]) {
    let dot = pred[0] * truth[0] + pred[1] * truth[1] + pred[2] * truth[2];
    let loss = dot.clamp(-1.0, 1.0).acos();
    let dc = dot.clamp(-1.0 + DOT_GRAD_CLAMP, 1.0 - DOT_GRAD_CLAMP);
    let scale = -1.0 / (1.0 - dc * dc).sqrt();
    (
        loss,
        [scale * truth[0], scale * truth[1], scale * truth[2]],
    )
}

/// Total loss and per-block decomposition of a batch; per-block values are
/// batch means of the unweighted angular terms, the total is their weighted
/// sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub per_block: Vec<f64>,
}

/// Batch loss over per-block gaze pairs. Ground truths are N×3 unit rows.
/// Returns the breakdown and, per block, the gradients w.r.t. the normalized
/// gaze outputs (already carrying the block weight and the 1/N mean factor).
pub fn total_loss_batch(
    blocks: &[BlockGaze],
    gt_tgt: &Tensor2,
    gt_ref: &Tensor2,
    alpha: f64,
) -> Result<(LossBreakdown, Vec<BlockGazeGrad>), ModelError> {
    let l = blocks.len();
    assert!(l >= 1, "need at least one block");
    let n = gt_tgt.rows();
    if gt_ref.rows() != n || gt_tgt.cols() != 3 || gt_ref.cols() != 3 {
        return Err(NnError::ShapeMismatch {
            context: "total_loss_batch ground truth",
            expected: (n, 3),
            got: gt_ref.shape(),
        }
        .into());
    }
    let weights = block_weights(l, alpha);
    let inv_n = 1.0 / n as f64;
    let mut per_block = Vec::with_capacity(l);
    let mut grads = Vec::with_capacity(l);
    for (block, &w) in blocks.iter().zip(weights.iter()) {
        if block.tgt.shape() != (n, 3) || block.ref_.shape() != (n, 3) {
            return Err(NnError::ShapeMismatch {
                context: "total_loss_batch block outputs",
                expected: (n, 3),
                got: block.tgt.shape(),
            }
            .into());
        }
        let mut block_sum = 0.0;
        let mut g_tgt = Tensor2::zeros(n, 3);
        let mut g_ref = Tensor2::zeros(n, 3);
        for s in 0..n {
            let (lt, dt) = angular_term(block.tgt.row(s), gt_tgt.row(s));
            let (lr, dr) = angular_term(block.ref_.row(s), gt_ref.row(s));
            block_sum += lt + lr;
            let scale = w * inv_n;
            for j in 0..3 {
                g_tgt.row_mut(s)[j] = scale * dt[j];
                g_ref.row_mut(s)[j] = scale * dr[j];
            }
        }
        per_block.push(block_sum * inv_n);
        grads.push(BlockGazeGrad {
            tgt: g_tgt,
            ref_: g_ref,
        });
    }
    let total = per_block
        .iter()
        .zip(weights.iter())
        .map(|(lb, w)| lb * w)
        .sum();
    Ok((LossBreakdown { total, per_block }, grads))
}

/// Loss of the concat baseline: target-side angular term only, batch mean.
/// The returned gradient's reference component is zero (the concat head has
/// a single output).
pub fn concat_loss_batch(
    output: &BlockGaze,
    gt_tgt: &Tensor2,
) -> Result<(f64, BlockGazeGrad), ModelError> {
    let n = gt_tgt.rows();
    if output.tgt.shape() != (n, 3) {
        return Err(NnError::ShapeMismatch {
            context: "concat_loss_batch",
            expected: (n, 3),
            got: output.tgt.shape(),
        }
        .into());
    }
    let inv_n = 1.0 / n as f64;
    let mut sum = 0.0;
    let mut grad = Tensor2::zeros(n, 3);
    for s in 0..n {
        let (l, d) = angular_term(output.tgt.row(s), gt_tgt.row(s));
        sum += l;
        for j in 0..3 {
            grad.row_mut(s)[j] = inv_n * d[j];
        }
    }
    Ok((
        sum * inv_n,
        BlockGazeGrad {
            tgt: grad,
            ref_: Tensor2::zeros(n, 3),
        },
    ))
}

/// Single-sample loss over per-block gaze pairs, with gradients w.r.t. each
/// block's (target, reference) unit outputs.
pub fn total_loss(
    pairs: &[(GazeVector, GazeVector)],
    gt_tgt: &GazeVector,
    gt_ref: &GazeVector,
    alpha: f64,
) -> (f64, Vec<([f64; 3], [f64; 3])>) {
    let weights = block_weights(pairs.len(), alpha);
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(pairs.len());
    for ((g_tgt, g_ref), &w) in pairs.iter().zip(weights.iter()) {
        let (lt, mut dt) = angular_term(&g_tgt.to_array(), &gt_tgt.to_array());
        let (lr, mut dr) = angular_term(&g_ref.to_array(), &gt_ref.to_array());
        total += w * (lt + lr);
        dt.iter_mut().for_each(|x| *x *= w);
        dr.iter_mut().for_each(|x| *x *= w);
        grads.push((dt, dr));
    }
    (total, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn unit(x: f64, y: f64, z: f64) -> GazeVector {
        GazeVector::from_direction(Vector3::new(x, y, z)).unwrap()
    }

    #[test]
    fn weights_for_three_blocks_at_half_decay() {
        assert_eq!(block_weights(3, 0.5), vec![0.25, 0.5, 1.0]);
        assert_eq!(block_weights(1, 0.5), vec![1.0]);
        assert_eq!(block_weights(4, 1.0), vec![1.0; 4]);
    }

    #[test]
    fn perfect_predictions_give_zero_loss() {
        let g = unit(0.0, 0.0, -1.0);
        let (loss, _) = total_loss(&[(g, g), (g, g)], &g, &g, 0.5);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn orthogonal_single_block_loss_is_pi() {
        let g = unit(1.0, 0.0, 0.0);
        let truth = unit(0.0, 1.0, 0.0);
        let (loss, _) = total_loss(&[(g, g)], &truth, &truth, 0.5);
        assert!((loss - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn total_is_weighted_sum_of_block_terms() {
        let a = unit(0.1, -0.2, -0.97);
        let b = unit(-0.3, 0.1, -0.9);
        let truth_t = unit(0.0, 0.0, -1.0);
        let truth_r = unit(0.05, 0.05, -0.99);
        let pairs = vec![(a, b), (b, a), (a, a)];
        let (loss, _) = total_loss(&pairs, &truth_t, &truth_r, 0.5);

        let mut manual = 0.0;
        for (i, (gt, gr)) in pairs.iter().enumerate() {
            let w = 0.5f64.powi((pairs.len() - 1 - i) as i32);
            let lt = gt
                .to_array()
                .iter()
                .zip(truth_t.to_array().iter())
                .map(|(x, y)| x * y)
                .sum::<f64>()
                .clamp(-1.0, 1.0)
                .acos();
            let lr = gr
                .to_array()
                .iter()
                .zip(truth_r.to_array().iter())
                .map(|(x, y)| x * y)
                .sum::<f64>()
                .clamp(-1.0, 1.0)
                .acos();
            manual += w * (lt + lr);
        }
        assert!((loss - manual).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences_away_from_poles() {
        let truth = unit(0.0, 0.0, -1.0);
        let pred = [0.3, -0.5, -0.85];
        let norm = (pred.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let pred: Vec<f64> = pred.iter().map(|x| x / norm).collect();
        let (_, grad) = angular_term(&pred, &truth.to_array());
        let h = 1e-6;
        for j in 0..3 {
            let mut plus = pred.clone();
            plus[j] += h;
            let mut minus = pred.clone();
            minus[j] -= h;
            // The raw (unnormalized) directional derivative of acos(p·t).
            let f = |p: &[f64]| {
                (p[0] * truth.to_array()[0]
                    + p[1] * truth.to_array()[1]
                    + p[2] * truth.to_array()[2])
                    .clamp(-1.0, 1.0)
                    .acos()
            };
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!((grad[j] - numeric).abs() < 1e-6, "component {j}");
        }
    }

    #[test]
    fn gradient_stays_finite_at_aligned_predictions() {
        let truth = unit(0.0, 0.0, -1.0);
        let (loss, grad) = angular_term(&truth.to_array(), &truth.to_array());
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| g.is_finite()));
    }
}
