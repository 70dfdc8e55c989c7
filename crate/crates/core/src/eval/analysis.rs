//! Analyses of a trained model's internals: how much the reference view
//! contributes, how rotatable the learned stage-0 features are, per-stage
//! pitch-yaw exports, and rotation-noise sensitivity.

use super::{predict_final_gaze, select_pairs, EvalError, SplitSelector};
use crate::geometry::{angular_error, pitch_yaw_from_vector, GazeVector, RotationMatrix};
use crate::model::{
    concat_loss_batch, total_loss_batch, BatchInput, BlockGazeGrad, FusionNet, Variant,
};
use crate::nn::Tensor2;
use crate::synth::{perturb_rotation, Dataset, SamplePair};
use nalgebra::Vector3;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Reference-view contribution: the fraction of final-stage loss gradient
/// magnitude (L1 over the backbone features) that flows to the reference
/// view, per (target, reference) camera pair.
#[derive(Debug, Clone)]
pub struct ContributionReport {
    pub per_pair: BTreeMap<(u32, u32), (f64, usize)>,
    pub overall: f64,
    pub count: usize,
}

/// Backpropagates the final-block angular loss (both sides for the stacked
/// variants, the single output for concat) to the backbone features, one
/// pair at a time.
pub fn contribution_ratio(
    net: &mut FusionNet,
    pairs: &[&SamplePair],
) -> Result<ContributionReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    let mut per_pair: BTreeMap<(u32, u32), (f64, usize)> = BTreeMap::new();
    let mut overall = 0.0;
    for pair in pairs {
        let obs_tgt = Tensor2::from_row(&pair.obs_tgt.features);
        let obs_ref = Tensor2::from_row(&pair.obs_ref.features);
        let rotations = [pair.rotation];
        let input = BatchInput {
            obs_tgt: &obs_tgt,
            obs_ref: &obs_ref,
            rotations: &rotations,
        };
        net.params.zero_grads();
        let pass = net.forward_batch(&input)?;
        let gt_tgt = Tensor2::from_row(&pair.gt_tgt.to_array());
        let gt_ref = Tensor2::from_row(&pair.gt_ref.to_array());

        let grads: Vec<BlockGazeGrad> = if net.config.variant == Variant::Concat {
            let (_, grad) = concat_loss_batch(&pass.outputs()[0], &gt_tgt)?;
            vec![grad]
        } else {
            // Final block only: zero upstream everywhere else.
            let (_, mut all) =
                total_loss_batch(pass.outputs(), &gt_tgt, &gt_ref, net.config.alpha)?;
            let l = all.len();
            for (i, g) in all.iter_mut().enumerate() {
                if i + 1 < l {
                    g.tgt.scale_inplace(0.0);
                    g.ref_.scale_inplace(0.0);
                }
            }
            all
        };
        let backbone_grads = net.backward_batch(&pass, &grads)?;
        let l1 = |t: &Tensor2| t.data().iter().map(|v| v.abs()).sum::<f64>();
        let (g_ref, g_tgt) = (l1(&backbone_grads.f_ref), l1(&backbone_grads.f_tgt));
        let total = g_ref + g_tgt;
        if total <= 0.0 {
            continue;
        }
        let ratio = g_ref / total;
        overall += ratio;
        let entry = per_pair.entry((pair.cam_tgt, pair.cam_ref)).or_insert((0.0, 0));
        entry.0 += ratio;
        entry.1 += 1;
    }
    let count: usize = per_pair.values().map(|(_, c)| c).sum();
    if count == 0 {
        return Err(EvalError::EmptySelection);
    }
    for (sum, c) in per_pair.values_mut() {
        *sum /= *c as f64;
    }
    Ok(ContributionReport {
        per_pair,
        overall: overall / count as f64,
        count,
    })
}

/// Rotatability of the learned stage-0 representation:
/// `‖R·F⁰_ref − F⁰_tgt‖_F / ‖F⁰_ref − F⁰_tgt‖_F` per pair.
#[derive(Debug, Clone)]
pub struct RotatabilityStats {
    pub mean: f64,
    pub median: f64,
    pub fraction_below_one: f64,
    pub count: usize,
    /// Pairs excluded because the denominator was ~0.
    pub degenerate: usize,
}

pub fn rotatability_metric(
    net: &FusionNet,
    pairs: &[&SamplePair],
) -> Result<RotatabilityStats, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    let mut ratios = Vec::with_capacity(pairs.len());
    let mut degenerate = 0usize;
    for pair in pairs {
        let obs_tgt = Tensor2::from_row(&pair.obs_tgt.features);
        let obs_ref = Tensor2::from_row(&pair.obs_ref.features);
        let rotations = [pair.rotation];
        let pass = net.forward_batch(&BatchInput {
            obs_tgt: &obs_tgt,
            obs_ref: &obs_ref,
            rotations: &rotations,
        })?;
        let f0_tgt = pass.stage_tgt(0);
        let f0_ref = pass.stage_ref(0);
        let rotated = crate::model::RotatableFeature::from_flat(f0_ref.row(0))
            .map_err(EvalError::from)?
            .rotated(&pair.rotation);
        let rotated_flat = rotated.to_flat();

        let mut num = 0.0;
        let mut den = 0.0;
        for ((r, t), raw_ref) in rotated_flat
            .iter()
            .zip(f0_tgt.row(0).iter())
            .zip(f0_ref.row(0).iter())
        {
            num += (r - t) * (r - t);
            den += (raw_ref - t) * (raw_ref - t);
        }
        let den = den.sqrt();
        if den < 1e-12 {
            degenerate += 1;
            continue;
        }
        ratios.push(num.sqrt() / den);
    }
    if ratios.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    let below = ratios.iter().filter(|&&r| r < 1.0).count();
    Ok(RotatabilityStats {
        mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
        median,
        fraction_below_one: below as f64 / ratios.len() as f64,
        count: ratios.len(),
        degenerate,
    })
}

/// One row of the pitch-yaw scatter export: a feature column's direction at
/// a given fusion stage. Zero-norm columns keep their row with the angles
/// absent.
#[derive(Debug, Clone)]
pub struct ScatterRow {
    pub stage: usize,
    /// "tgt" or "ref_rot" (the reference feature after rotation by R).
    pub side: &'static str,
    pub column: usize,
    pub pitch: Option<f64>,
    pub yaw: Option<f64>,
    pub norm: f64,
}

/// Exports the D feature columns of every stage for one pair: the target
/// feature and the rotated reference feature, each as (pitch, yaw, norm).
pub fn export_pitch_yaw_scatter(
    net: &FusionNet,
    pair: &SamplePair,
) -> Result<Vec<ScatterRow>, EvalError> {
    let obs_tgt = Tensor2::from_row(&pair.obs_tgt.features);
    let obs_ref = Tensor2::from_row(&pair.obs_ref.features);
    let rotations = [pair.rotation];
    let pass = net.forward_batch(&BatchInput {
        obs_tgt: &obs_tgt,
        obs_ref: &obs_ref,
        rotations: &rotations,
    })?;
    let mut rows = Vec::new();
    for stage in 0..pass.num_stages() {
        let f_tgt = crate::model::RotatableFeature::from_flat(pass.stage_tgt(stage).row(0))?;
        let f_ref = crate::model::RotatableFeature::from_flat(pass.stage_ref(stage).row(0))?
            .rotated(&pair.rotation);
        rows.extend(scatter_rows_for_feature(stage, "tgt", &f_tgt));
        rows.extend(scatter_rows_for_feature(stage, "ref_rot", &f_ref));
    }
    Ok(rows)
}

pub(crate) fn scatter_rows_for_feature(
    stage: usize,
    side: &'static str,
    feature: &crate::model::RotatableFeature,
) -> Vec<ScatterRow> {
    (0..feature.width())
        .map(|column| {
            let v = feature.column(column);
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let (pitch, yaw) = if norm < 1e-12 {
                (None, None)
            } else {
                let g = GazeVector::from_direction(Vector3::new(v[0], v[1], v[2]))
                    .expect("norm checked");
                let py = pitch_yaw_from_vector(&g);
                (Some(py.pitch), Some(py.yaw))
            };
            ScatterRow {
                stage,
                side,
                column,
                pitch,
                yaw,
                norm,
            }
        })
        .collect()
}

pub fn scatter_table(rows: &[ScatterRow]) -> String {
    let mut out = String::from("stage\tside\tcolumn\tpitch\tyaw\tnorm\n");
    for r in rows {
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| x.to_string());
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.stage,
            r.side,
            r.column,
            fmt(r.pitch),
            fmt(r.yaw),
            r.norm
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub noise_level_rad: f64,
    pub mean_deg: f64,
    pub count: usize,
}

/// Evaluates the selected pairs with the stored rotation replaced by a
/// perturbed copy at each noise level. Level 0 reproduces the unperturbed
/// evaluation exactly.
pub fn noise_sensitivity_sweep(
    net: &FusionNet,
    dataset: &Dataset,
    selector: SplitSelector,
    eval_fold: u32,
    levels: &[f64],
    seed: u64,
) -> Result<Vec<NoiseRow>, EvalError> {
    let pairs = select_pairs(dataset, selector, eval_fold);
    if pairs.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    let mut rows = Vec::with_capacity(levels.len());
    for (i, &level) in levels.iter().enumerate() {
        let rotations: Option<Vec<RotationMatrix>> = if level > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            Some(
                pairs
                    .iter()
                    .map(|p| perturb_rotation(&p.rotation, level, &mut rng))
                    .collect(),
            )
        } else {
            None
        };
        let predictions = predict_final_gaze(net, &pairs, rotations.as_deref())?;
        let mut sum = 0.0;
        for (pred, pair) in predictions.iter().zip(pairs.iter()) {
            sum += angular_error(pred, &pair.gt_tgt);
        }
        rows.push(NoiseRow {
            noise_level_rad: level,
            mean_deg: sum / pairs.len() as f64,
            count: pairs.len(),
        });
    }
    Ok(rows)
}

pub fn noise_table(rows: &[NoiseRow]) -> String {
    let mut out = String::from("noise_level_rad\tmean_deg\tcount\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}\n", r.noise_level_rad, r.mean_deg, r.count));
    }
    out
}
