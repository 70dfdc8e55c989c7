//! Evaluation and analysis: mean angular error with per-camera-pair
//! breakdown, reference-contribution ratios, rotatability statistics,
//! pitch-yaw scatter exports, rotation-noise sweeps, and the geometry
//! verification suite.

pub mod analysis;
pub mod verify;

pub use analysis::{
    contribution_ratio, export_pitch_yaw_scatter, noise_sensitivity_sweep, noise_table,
    rotatability_metric, scatter_table, ContributionReport, NoiseRow, RotatabilityStats,
    ScatterRow,
};
pub use verify::{verify_geometry_suite, verify_rig_description, GeometrySuiteReport};

use crate::geometry::{angular_error, GazeVector};
use crate::model::{BatchInput, FusionNet, ModelError, Variant};
use crate::nn::Tensor2;
use crate::synth::{DataError, Dataset, SamplePair};
use nalgebra::Vector3;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("selector matched no pairs")]
    EmptySelection,
}

/// Which evaluation pairs to use: training-camera pairs of the held-out
/// subjects ("seen" head poses), test-camera pairs ("unseen"), or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSelector {
    Seen,
    Unseen,
    All,
}

impl std::str::FromStr for SplitSelector {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seen" => Ok(SplitSelector::Seen),
            "unseen" => Ok(SplitSelector::Unseen),
            "all" => Ok(SplitSelector::All),
            other => Err(EvalError::ConfigMismatch(format!(
                "split must be seen|unseen|all, got {other:?}"
            ))),
        }
    }
}

/// Per-(target, reference) camera cell of the error matrix. Cells with no
/// samples are simply absent from the map.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub sum_deg: f64,
    pub count: usize,
}

impl CellStats {
    pub fn mean_deg(&self) -> f64 {
        self.sum_deg / self.count as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorMatrix {
    pub cells: BTreeMap<(u32, u32), CellStats>,
}

impl ErrorMatrix {
    fn record(&mut self, cam_tgt: u32, cam_ref: u32, error_deg: f64) {
        let cell = self.cells.entry((cam_tgt, cam_ref)).or_insert(CellStats {
            sum_deg: 0.0,
            count: 0,
        });
        cell.sum_deg += error_deg;
        cell.count += 1;
    }

    pub fn camera_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .cells
            .keys()
            .flat_map(|&(a, b)| [a, b])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Grid rendering: rows are target cameras, columns reference cameras,
    /// absent cells (including the diagonal) printed as "-".
    pub fn grid_text(&self) -> String {
        let ids = self.camera_ids();
        let mut out = String::from("tgt\\ref");
        for id in &ids {
            out.push_str(&format!("\t{id}"));
        }
        out.push('\n');
        for t in &ids {
            out.push_str(&format!("{t}"));
            for r in &ids {
                match self.cells.get(&(*t, *r)) {
                    Some(cell) => out.push_str(&format!("\t{:.3}", cell.mean_deg())),
                    None => out.push_str("\t-"),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerSampleError {
    pub cam_tgt: u32,
    pub cam_ref: u32,
    pub subject: u32,
    pub error_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mean_deg: f64,
    pub count: usize,
    pub matrix: ErrorMatrix,
    pub per_sample: Vec<PerSampleError>,
}

pub fn select_pairs<'a>(
    dataset: &'a Dataset,
    selector: SplitSelector,
    eval_fold: u32,
) -> Vec<&'a SamplePair> {
    match selector {
        SplitSelector::Seen => dataset.seen_pairs_for_fold(eval_fold),
        SplitSelector::Unseen => dataset.unseen_pairs_for_fold(eval_fold),
        SplitSelector::All => {
            let mut pairs = dataset.seen_pairs_for_fold(eval_fold);
            pairs.extend(dataset.unseen_pairs_for_fold(eval_fold));
            pairs
        }
    }
}

/// Aggregates per-pair predictions from an arbitrary predictor; the batched
/// network path and stub predictors in tests share this accumulation.
pub fn evaluate_with<F>(pairs: &[&SamplePair], mut predict: F) -> Result<EvalResult, EvalError>
where
    F: FnMut(&SamplePair) -> Result<GazeVector, EvalError>,
{
    if pairs.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    let mut matrix = ErrorMatrix::default();
    let mut per_sample = Vec::with_capacity(pairs.len());
    let mut sum = 0.0;
    for pair in pairs {
        let pred = predict(pair)?;
        let err = angular_error(&pred, &pair.gt_tgt);
        sum += err;
        matrix.record(pair.cam_tgt, pair.cam_ref, err);
        per_sample.push(PerSampleError {
            cam_tgt: pair.cam_tgt,
            cam_ref: pair.cam_ref,
            subject: pair.subject,
            error_deg: err,
        });
    }
    Ok(EvalResult {
        mean_deg: sum / pairs.len() as f64,
        count: pairs.len(),
        matrix,
        per_sample,
    })
}

pub(crate) const EVAL_BATCH: usize = 256;

/// Runs the network over pairs in deterministic batches; rotations may be
/// overridden (the noise sweep substitutes perturbed copies).
pub fn predict_final_gaze(
    net: &FusionNet,
    pairs: &[&SamplePair],
    rotations_override: Option<&[crate::geometry::RotationMatrix]>,
) -> Result<Vec<GazeVector>, EvalError> {
    if let Some(overrides) = rotations_override {
        if overrides.len() != pairs.len() {
            return Err(EvalError::ConfigMismatch(
                "rotation override length differs from pair count".into(),
            ));
        }
    }
    let width = net.config.obs_width;
    let mut out = Vec::with_capacity(pairs.len());
    let mut start = 0;
    while start < pairs.len() {
        let end = (start + EVAL_BATCH).min(pairs.len());
        let n = end - start;
        let mut obs_tgt = Tensor2::zeros(n, width);
        let mut obs_ref = Tensor2::zeros(n, width);
        let mut rotations = Vec::with_capacity(n);
        for (row, pair) in pairs[start..end].iter().enumerate() {
            if pair.obs_tgt.features.len() != width {
                return Err(EvalError::ConfigMismatch(format!(
                    "observation width {} does not match model width {width}",
                    pair.obs_tgt.features.len()
                )));
            }
            obs_tgt.row_mut(row).copy_from_slice(&pair.obs_tgt.features);
            obs_ref.row_mut(row).copy_from_slice(&pair.obs_ref.features);
            rotations.push(match rotations_override {
                Some(overrides) => overrides[start + row],
                None => pair.rotation,
            });
        }
        let pass = net.forward_batch(&BatchInput {
            obs_tgt: &obs_tgt,
            obs_ref: &obs_ref,
            rotations: &rotations,
        })?;
        let final_gaze = pass.final_gaze_tgt();
        for row in 0..n {
            let g = final_gaze.row(row);
            out.push(
                GazeVector::new(Vector3::new(g[0], g[1], g[2]))
                    .map_err(|_| ModelError::DegenerateOutput { norm: 0.0 })?,
            );
        }
        start = end;
    }
    Ok(out)
}

/// Mean angular error of the final-block target gaze over the selected
/// pairs, with the per-camera-pair matrix.
pub fn evaluate(
    net: &FusionNet,
    dataset: &Dataset,
    selector: SplitSelector,
    eval_fold: u32,
) -> Result<EvalResult, EvalError> {
    let pairs = select_pairs(dataset, selector, eval_fold);
    if pairs.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    let predictions = predict_final_gaze(net, &pairs, None)?;
    let mut iter = predictions.into_iter();
    evaluate_with(&pairs, |_| {
        iter.next()
            .ok_or_else(|| EvalError::ConfigMismatch("prediction count mismatch".into()))
    })
}

/// Writes per-sample errors as tab-separated text with a header row.
pub fn per_sample_table(result: &EvalResult) -> String {
    let mut out = String::from("cam_tgt\tcam_ref\tsubject\terror_deg\n");
    for row in &result.per_sample {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            row.cam_tgt, row.cam_ref, row.subject, row.error_deg
        ));
    }
    out
}

/// The concat baseline has no rotation input but still evaluates through the
/// same path; other variants consume the stored or overridden rotations.
pub fn variant_uses_rotation(variant: Variant) -> bool {
    !matches!(variant, Variant::Concat | Variant::NoRotation)
}
