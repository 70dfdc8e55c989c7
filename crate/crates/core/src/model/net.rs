//! Batched forward and reverse passes over the fusion network.
//!
//! Rows of the batch tensors are samples; rotatable features travel as
//! N×3D row-major matrices (each row is the flattened 3×D feature of one
//! sample). Every MLP application records its cache; the reverse pass walks
//! the block structure backwards, accumulating gradients of shared
//! parameters across their uses on both sides.

use super::{FusionNet, ModelError, Variant};
use crate::geometry::RotationMatrix;
use crate::nn::{MlpCache, NnError, Tensor2};

/// One batch of paired observations with per-sample relative rotations
/// (reference frame → target frame).
pub struct BatchInput<'a> {
    pub obs_tgt: &'a Tensor2,
    pub obs_ref: &'a Tensor2,
    pub rotations: &'a [RotationMatrix],
}

/// Unit gaze outputs of one block, one row per sample.
#[derive(Debug, Clone)]
pub struct BlockGaze {
    pub tgt: Tensor2,
    pub ref_: Tensor2,
}

/// Upstream gradients with respect to one block's normalized gaze outputs.
#[derive(Debug, Clone)]
pub struct BlockGazeGrad {
    pub tgt: Tensor2,
    pub ref_: Tensor2,
}

/// Gradients of the loss with respect to the backbone features, taken before
/// backpropagating into the backbone itself.
#[derive(Debug, Clone)]
pub struct BackboneGradients {
    pub f_tgt: Tensor2,
    pub f_ref: Tensor2,
}

#[derive(Debug, Clone)]
struct HeadPass {
    cache: MlpCache,
    norms: Vec<f64>,
    unit: Tensor2,
}

#[derive(Debug, Clone)]
struct BlockPass {
    fuser_tgt: MlpCache,
    fuser_ref: MlpCache,
    head_tgt: HeadPass,
    head_ref: HeadPass,
}

/// Everything a backward pass or an analysis needs from one forward pass.
pub struct ForwardPass {
    n: usize,
    rotations: Vec<RotationMatrix>,
    backbone_tgt: MlpCache,
    backbone_ref: MlpCache,
    f_tgt: Tensor2,
    f_ref: Tensor2,
    extractor_tgt: Option<MlpCache>,
    extractor_ref: Option<MlpCache>,
    /// Rotatable features per stage: index 0 is the extractor output,
    /// index i the output of block i. N×3D each.
    stages_tgt: Vec<Tensor2>,
    stages_ref: Vec<Tensor2>,
    blocks: Vec<BlockPass>,
    concat_head: Option<HeadPass>,
    outputs: Vec<BlockGaze>,
}

impl ForwardPass {
    pub fn batch_size(&self) -> usize {
        self.n
    }

    pub fn outputs(&self) -> &[BlockGaze] {
        &self.outputs
    }

    /// Final prediction: the last block's target gaze (N×3 unit rows).
    pub fn final_gaze_tgt(&self) -> &Tensor2 {
        &self.outputs.last().expect("at least one block").tgt
    }

    pub fn backbone_tgt(&self) -> &Tensor2 {
        &self.f_tgt
    }

    pub fn backbone_ref(&self) -> &Tensor2 {
        &self.f_ref
    }

    /// Rotatable feature at `stage` (0 = extractor output, i = block i).
    pub fn stage_tgt(&self, stage: usize) -> &Tensor2 {
        &self.stages_tgt[stage]
    }

    pub fn stage_ref(&self, stage: usize) -> &Tensor2 {
        &self.stages_ref[stage]
    }

    pub fn num_stages(&self) -> usize {
        self.stages_tgt.len()
    }

    pub fn rotations(&self) -> &[RotationMatrix] {
        &self.rotations
    }
}

/// Applies each sample's rotation (or its transpose) to the flattened 3×D
/// feature row: `out_chunk[r] = Σ_k R[r][k] · in_chunk[k]` over D-wide chunks.
pub(crate) fn rotate_rows(
    rotations: &[RotationMatrix],
    features: &Tensor2,
    transpose: bool,
) -> Result<Tensor2, NnError> {
    let d3 = features.cols();
    if d3 % 3 != 0 || rotations.len() != features.rows() {
        return Err(NnError::ShapeMismatch {
            context: "rotate_rows",
            expected: (rotations.len(), d3 / 3 * 3),
            got: features.shape(),
        });
    }
    let d = d3 / 3;
    let mut out = Tensor2::zeros(features.rows(), d3);
    for (s, rot) in rotations.iter().enumerate() {
        let m = *rot.matrix();
        let src = features.row(s).to_vec();
        let dst = out.row_mut(s);
        for r in 0..3 {
            for k in 0..3 {
                let coeff = if transpose { m[(k, r)] } else { m[(r, k)] };
                if coeff == 0.0 {
                    continue;
                }
                let src_chunk = &src[k * d..(k + 1) * d];
                let dst_chunk = &mut dst[r * d..(r + 1) * d];
                for (o, v) in dst_chunk.iter_mut().zip(src_chunk.iter()) {
                    *o += coeff * v;
                }
            }
        }
    }
    Ok(out)
}

/// Per-sample row of the 9 rotation entries (row-major), transposed when
/// requested; the MLP-encoding fuser input tail.
pub(crate) fn rotation_rows(rotations: &[RotationMatrix], transpose: bool) -> Tensor2 {
    let mut out = Tensor2::zeros(rotations.len(), 9);
    for (s, rot) in rotations.iter().enumerate() {
        let r = if transpose { rot.transpose() } else { *rot };
        out.row_mut(s).copy_from_slice(&r.to_row_major());
    }
    out
}

/// Row-normalizes a raw N×3 head output; errors when a row is degenerate.
fn normalize_rows(raw: &Tensor2) -> Result<(Tensor2, Vec<f64>), ModelError> {
    let mut unit = raw.clone();
    let mut norms = Vec::with_capacity(raw.rows());
    for r in 0..raw.rows() {
        let row = unit.row_mut(r);
        let norm = (row[0] * row[0] + row[1] * row[1] + row[2] * row[2]).sqrt();
        if norm < 1e-12 {
            return Err(ModelError::DegenerateOutput { norm });
        }
        row.iter_mut().for_each(|x| *x /= norm);
        norms.push(norm);
    }
    Ok((unit, norms))
}

/// Gradient through row normalization: dL/dv = (u − g·(g·u)) / ‖v‖.
fn normalize_backward(pass: &HeadPass, upstream: &Tensor2) -> Tensor2 {
    let mut out = upstream.clone();
    for r in 0..out.rows() {
        let g = pass.unit.row(r).to_vec();
        let norm = pass.norms[r];
        let row = out.row_mut(r);
        let dot = g[0] * row[0] + g[1] * row[1] + g[2] * row[2];
        for j in 0..3 {
            row[j] = (row[j] - g[j] * dot) / norm;
        }
    }
    out
}

impl FusionNet {
    /// Whether the cross-view feature is physically rotated before fusion.
    fn rotates_features(&self) -> bool {
        matches!(self.config.variant, Variant::Proposed | Variant::NoBackbone)
    }

    fn rotate_cross(
        &self,
        rotations: &[RotationMatrix],
        features: &Tensor2,
        transpose: bool,
    ) -> Result<Tensor2, NnError> {
        if self.rotates_features() {
            rotate_rows(rotations, features, transpose)
        } else {
            Ok(features.clone())
        }
    }

    /// Rotating by R forward means rotating the gradient by Rᵀ backward.
    fn rotate_cross_backward(
        &self,
        rotations: &[RotationMatrix],
        grad: &Tensor2,
        forward_was_transposed: bool,
    ) -> Result<Tensor2, NnError> {
        if self.rotates_features() {
            rotate_rows(rotations, grad, !forward_was_transposed)
        } else {
            Ok(grad.clone())
        }
    }

    fn fuser_input(
        &self,
        cross: &Tensor2,
        aux: &Tensor2,
        rotations: &[RotationMatrix],
        transpose: bool,
    ) -> Result<Tensor2, NnError> {
        if self.config.variant == Variant::MlpEncoding {
            let flat_r = rotation_rows(rotations, transpose);
            Tensor2::concat_cols(&[cross, aux, &flat_r])
        } else {
            Tensor2::concat_cols(&[cross, aux])
        }
    }

    fn run_head(&self, block: usize, feature: &Tensor2, f: &Tensor2) -> Result<HeadPass, ModelError> {
        let input = Tensor2::concat_cols(&[feature, f])?;
        let (raw, cache) = self.params.gaze_heads[block].forward(&input)?;
        let (unit, norms) = normalize_rows(&raw)?;
        Ok(HeadPass { cache, norms, unit })
    }

    /// Full forward pass. Dispatches on the variant; `Concat` ignores the
    /// rotations and produces a single pseudo-block whose target and
    /// reference outputs coincide.
    pub fn forward_batch(&self, input: &BatchInput) -> Result<ForwardPass, ModelError> {
        let n = input.obs_tgt.rows();
        if input.obs_ref.rows() != n {
            return Err(NnError::ShapeMismatch {
                context: "forward_batch batch sizes",
                expected: (n, input.obs_tgt.cols()),
                got: input.obs_ref.shape(),
            }
            .into());
        }
        if self.config.variant == Variant::Concat {
            return self.forward_concat_inner(input.obs_tgt, input.obs_ref);
        }
        if input.rotations.len() != n {
            return Err(NnError::ShapeMismatch {
                context: "forward_batch rotations",
                expected: (n, 9),
                got: (input.rotations.len(), 9),
            }
            .into());
        }

        let (f_tgt, backbone_tgt) = self.params.backbone.forward(input.obs_tgt)?;
        let (f_ref, backbone_ref) = self.params.backbone.forward(input.obs_ref)?;
        let extractor = self.extractor_params()?;
        let (f0_tgt, extractor_tgt) = extractor.forward(&f_tgt)?;
        let (f0_ref, extractor_ref) = extractor.forward(&f_ref)?;

        let mut stages_tgt = vec![f0_tgt];
        let mut stages_ref = vec![f0_ref];
        let mut blocks = Vec::with_capacity(self.config.blocks);
        let mut outputs = Vec::with_capacity(self.config.blocks);

        // Fusers see the backbone feature of the destination view, except in
        // the no-backbone ablation where they see its stage-0 feature.
        let no_backbone = self.config.variant == Variant::NoBackbone;
        let aux_tgt = if no_backbone {
            stages_tgt[0].clone()
        } else {
            f_tgt.clone()
        };
        let aux_ref = if no_backbone {
            stages_ref[0].clone()
        } else {
            f_ref.clone()
        };

        for i in 0..self.config.blocks {
            let cross_tgt = self.rotate_cross(input.rotations, &stages_ref[i], false)?;
            let in_tgt = self.fuser_input(&cross_tgt, &aux_tgt, input.rotations, false)?;
            let (f_i_tgt, fuser_tgt) = self.params.fusers[i].forward(&in_tgt)?;

            let back_src = if self.config.sequential_block_update {
                &f_i_tgt
            } else {
                &stages_tgt[i]
            };
            let cross_ref = self.rotate_cross(input.rotations, back_src, true)?;
            let in_ref = self.fuser_input(&cross_ref, &aux_ref, input.rotations, true)?;
            let (f_i_ref, fuser_ref) = self.params.fusers[i].forward(&in_ref)?;

            let head_tgt = self.run_head(i, &f_i_tgt, &f_tgt)?;
            let head_ref = self.run_head(i, &f_i_ref, &f_ref)?;
            outputs.push(BlockGaze {
                tgt: head_tgt.unit.clone(),
                ref_: head_ref.unit.clone(),
            });
            blocks.push(BlockPass {
                fuser_tgt,
                fuser_ref,
                head_tgt,
                head_ref,
            });
            stages_tgt.push(f_i_tgt);
            stages_ref.push(f_i_ref);
        }

        Ok(ForwardPass {
            n,
            rotations: input.rotations.to_vec(),
            backbone_tgt,
            backbone_ref,
            f_tgt,
            f_ref,
            extractor_tgt: Some(extractor_tgt),
            extractor_ref: Some(extractor_ref),
            stages_tgt,
            stages_ref,
            blocks,
            concat_head: None,
            outputs,
        })
    }

    fn forward_concat_inner(
        &self,
        obs_tgt: &Tensor2,
        obs_ref: &Tensor2,
    ) -> Result<ForwardPass, ModelError> {
        let n = obs_tgt.rows();
        let (f_tgt, backbone_tgt) = self.params.backbone.forward(obs_tgt)?;
        let (f_ref, backbone_ref) = self.params.backbone.forward(obs_ref)?;
        let input = Tensor2::concat_cols(&[&f_tgt, &f_ref])?;
        let (raw, cache) = self.params.gaze_heads[0].forward(&input)?;
        let (unit, norms) = normalize_rows(&raw)?;
        let head = HeadPass { cache, norms, unit };
        let outputs = vec![BlockGaze {
            tgt: head.unit.clone(),
            ref_: head.unit.clone(),
        }];
        Ok(ForwardPass {
            n,
            rotations: Vec::new(),
            backbone_tgt,
            backbone_ref,
            f_tgt,
            f_ref,
            extractor_tgt: None,
            extractor_ref: None,
            stages_tgt: Vec::new(),
            stages_ref: Vec::new(),
            blocks: Vec::new(),
            concat_head: Some(head),
            outputs,
        })
    }

    /// Reverse pass: consumes per-block gradients w.r.t. the normalized gaze
    /// outputs, accumulates parameter gradients in place, and returns the
    /// loss gradients w.r.t. the backbone features. For `Concat` only the
    /// target component of the single upstream entry is used.
    pub fn backward_batch(
        &mut self,
        pass: &ForwardPass,
        upstream: &[BlockGazeGrad],
    ) -> Result<BackboneGradients, ModelError> {
        if self.config.variant == Variant::Concat {
            let up = upstream.first().ok_or(NnError::ShapeMismatch {
                context: "backward_batch concat upstream",
                expected: (1, 3),
                got: (0, 0),
            })?;
            return self.backward_concat_inner(pass, &up.tgt);
        }

        let l = self.config.blocks;
        if upstream.len() != l {
            return Err(NnError::ShapeMismatch {
                context: "backward_batch block count",
                expected: (l, 0),
                got: (upstream.len(), 0),
            }
            .into());
        }
        let d3 = self.config.flat_width();
        let b = self.config.backbone_width;
        let n = pass.n;
        let sequential = self.config.sequential_block_update;
        let no_backbone = self.config.variant == Variant::NoBackbone;
        let rotations = pass.rotations.clone();

        let mut d_stage_tgt: Vec<Tensor2> = (0..=l).map(|_| Tensor2::zeros(n, d3)).collect();
        let mut d_stage_ref: Vec<Tensor2> = (0..=l).map(|_| Tensor2::zeros(n, d3)).collect();
        let mut df_tgt = Tensor2::zeros(n, b);
        let mut df_ref = Tensor2::zeros(n, b);

        let fuser_widths: Vec<usize> = match self.config.variant {
            Variant::MlpEncoding => vec![d3, b, 9],
            Variant::NoBackbone => vec![d3, d3],
            _ => vec![d3, b],
        };

        for i in (0..l).rev() {
            let block = &pass.blocks[i];

            // Gaze heads first: their input was concat(F_i, f).
            let dv = normalize_backward(&block.head_tgt, &upstream[i].tgt);
            let in_grad = self.params.gaze_heads[i].backward(&block.head_tgt.cache, &dv)?;
            let parts = in_grad.split_cols(&[d3, b])?;
            d_stage_tgt[i + 1].add_inplace(&parts[0]);
            df_tgt.add_inplace(&parts[1]);

            let dv = normalize_backward(&block.head_ref, &upstream[i].ref_);
            let in_grad = self.params.gaze_heads[i].backward(&block.head_ref.cache, &dv)?;
            let parts = in_grad.split_cols(&[d3, b])?;
            d_stage_ref[i + 1].add_inplace(&parts[0]);
            df_ref.add_inplace(&parts[1]);

            // Reference update backward; its cross input was Rᵀ·src.
            let in_grad = self.params.fusers[i].backward(&block.fuser_ref, &d_stage_ref[i + 1])?;
            let parts = in_grad.split_cols(&fuser_widths)?;
            let d_src = self.rotate_cross_backward(&rotations, &parts[0], true)?;
            if sequential {
                d_stage_tgt[i + 1].add_inplace(&d_src);
            } else {
                d_stage_tgt[i].add_inplace(&d_src);
            }
            if no_backbone {
                d_stage_ref[0].add_inplace(&parts[1]);
            } else {
                df_ref.add_inplace(&parts[1]);
            }

            // Target update backward; its cross input was R·F_ref_stage[i].
            let in_grad = self.params.fusers[i].backward(&block.fuser_tgt, &d_stage_tgt[i + 1])?;
            let parts = in_grad.split_cols(&fuser_widths)?;
            let d_src = self.rotate_cross_backward(&rotations, &parts[0], false)?;
            d_stage_ref[i].add_inplace(&d_src);
            if no_backbone {
                d_stage_tgt[0].add_inplace(&parts[1]);
            } else {
                df_tgt.add_inplace(&parts[1]);
            }
        }

        // Stage-0 features come from the shared extractor.
        let extractor = self
            .params
            .extractor
            .as_mut()
            .expect("stacked variants have an extractor");
        let cache_tgt = pass
            .extractor_tgt
            .as_ref()
            .expect("forward cached the extractor");
        let cache_ref = pass
            .extractor_ref
            .as_ref()
            .expect("forward cached the extractor");
        df_tgt.add_inplace(&extractor.backward(cache_tgt, &d_stage_tgt[0])?);
        df_ref.add_inplace(&extractor.backward(cache_ref, &d_stage_ref[0])?);

        self.params.backbone.backward(&pass.backbone_tgt, &df_tgt)?;
        self.params.backbone.backward(&pass.backbone_ref, &df_ref)?;

        Ok(BackboneGradients {
            f_tgt: df_tgt,
            f_ref: df_ref,
        })
    }

    fn backward_concat_inner(
        &mut self,
        pass: &ForwardPass,
        upstream: &Tensor2,
    ) -> Result<BackboneGradients, ModelError> {
        let b = self.config.backbone_width;
        let head = pass
            .concat_head
            .as_ref()
            .expect("concat forward cached its head");
        let dv = normalize_backward(head, upstream);
        let in_grad = self.params.gaze_heads[0].backward(&head.cache, &dv)?;
        let parts = in_grad.split_cols(&[b, b])?;
        let df_tgt = parts[0].clone();
        let df_ref = parts[1].clone();
        self.params.backbone.backward(&pass.backbone_tgt, &df_tgt)?;
        self.params.backbone.backward(&pass.backbone_ref, &df_ref)?;
        Ok(BackboneGradients {
            f_tgt: df_tgt,
            f_ref: df_ref,
        })
    }

    fn extractor_params(&self) -> Result<&crate::nn::MlpParams, ModelError> {
        self.params
            .extractor
            .as_ref()
            .ok_or(ModelError::VariantMismatch {
                expected: Variant::Proposed,
                got: self.config.variant,
            })
    }
}
