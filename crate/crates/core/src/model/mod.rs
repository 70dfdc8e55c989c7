//! The rotation-constrained cross-view fusion network.
//!
//! Two views share a backbone extractor and a rotatable-feature extractor.
//! Each fusion block rotates the cross-view rotatable feature by the relative
//! rotation `R` (or its transpose on the way back), fuses it with the
//! destination view's backbone feature, and emits intermediate gaze estimates
//! from per-block heads. Weights are shared between the target and reference
//! sides of a block but not across blocks. The final output is the last
//! block's target gaze.
//!
//! Variants:
//! - `Proposed` — rotation applied in feature space.
//! - `NoRotation` — same stacked structure, cross-view features passed
//!   unrotated (numerically identical to `Proposed` with `R = I`).
//! - `MlpEncoding` — no feature rotation; the 9 entries of `R` (or `Rᵀ`) are
//!   appended to the fuser input instead.
//! - `NoBackbone` — fusers consume the initial rotatable feature of the
//!   destination view in place of its backbone feature; gaze heads unchanged.
//! - `Concat` — single-shot baseline: gaze from the concatenated backbone
//!   features of both views, no rotation input anywhere.

mod loss;
mod net;

pub use loss::{block_weights, concat_loss_batch, total_loss, total_loss_batch, LossBreakdown};
pub use net::{BackboneGradients, BatchInput, BlockGaze, BlockGazeGrad, ForwardPass};

use crate::geometry::{GazeVector, RotationMatrix};
use crate::nn::{init_mlp, MlpParams, MlpSpec, NnError, Tensor2};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("gaze head produced a near-zero raw output (norm {norm:.3e})")]
    DegenerateOutput { norm: f64 },
    #[error("operation requires variant {expected:?}, model is {got:?}")]
    VariantMismatch { expected: Variant, got: Variant },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

/// Network variant selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Proposed,
    Concat,
    MlpEncoding,
    NoRotation,
    NoBackbone,
}

impl Variant {
    pub fn uses_blocks(&self) -> bool {
        !matches!(self, Variant::Concat)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::Concat => "concat",
            Variant::MlpEncoding => "mlp_encoding",
            Variant::NoRotation => "no_rotation",
            Variant::NoBackbone => "no_backbone",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(Variant::Proposed),
            "concat" => Ok(Variant::Concat),
            "mlp_encoding" => Ok(Variant::MlpEncoding),
            "no_rotation" => Ok(Variant::NoRotation),
            "no_backbone" => Ok(Variant::NoBackbone),
            other => Err(ModelError::InvalidConfig(format!(
                "unknown variant {other:?}"
            ))),
        }
    }
}

/// Model hyperparameters. `rotatable_width` is D, `backbone_width` is B,
/// `blocks` is the stack depth l, `alpha` the loss decay toward earlier
/// blocks. `sequential_block_update = true` lets the reference update consume
/// the just-updated target feature; `false` updates both sides from the
/// previous stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub obs_width: usize,
    pub backbone_width: usize,
    pub rotatable_width: usize,
    pub blocks: usize,
    pub alpha: f64,
    pub variant: Variant,
    pub sequential_block_update: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            obs_width: 32,
            backbone_width: 32,
            rotatable_width: 16,
            blocks: 3,
            alpha: 0.5,
            variant: Variant::Proposed,
            sequential_block_update: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.blocks < 1 {
            return Err(ModelError::InvalidConfig("blocks must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.rotatable_width < 1 || self.backbone_width < 1 || self.obs_width < 1 {
            return Err(ModelError::InvalidConfig("widths must be positive".into()));
        }
        Ok(())
    }

    /// Flattened rotatable-feature width, 3·D.
    pub fn flat_width(&self) -> usize {
        3 * self.rotatable_width
    }

    /// Fuser input width for this variant.
    pub fn fuser_input_width(&self) -> usize {
        match self.variant {
            Variant::Proposed | Variant::NoRotation => self.flat_width() + self.backbone_width,
            Variant::MlpEncoding => self.flat_width() + self.backbone_width + 9,
            Variant::NoBackbone => 2 * self.flat_width(),
            Variant::Concat => 0,
        }
    }
}

/// Per-view feature vector produced by the backbone extractor and reused
/// unaltered by every block.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneFeature(pub Vec<f64>);

/// A 3×D matrix of D three-dimensional feature vectors; the representation
/// that gets multiplied by rotation matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatableFeature {
    data: Tensor2,
}

impl RotatableFeature {
    pub fn from_tensor(data: Tensor2) -> Result<Self, ModelError> {
        if data.rows() != 3 {
            return Err(NnError::ShapeMismatch {
                context: "rotatable feature",
                expected: (3, data.cols()),
                got: data.shape(),
            }
            .into());
        }
        data.check_finite("rotatable feature")?;
        Ok(RotatableFeature { data })
    }

    /// Builds the 3×D matrix from a row-major flat slice of length 3D (the
    /// raw MLP output layout: three stacked D-vectors).
    pub fn from_flat(flat: &[f64]) -> Result<Self, ModelError> {
        if flat.len() % 3 != 0 {
            return Err(NnError::ShapeMismatch {
                context: "rotatable feature flat length",
                expected: (3, flat.len() / 3),
                got: (1, flat.len()),
            }
            .into());
        }
        let d = flat.len() / 3;
        Self::from_tensor(Tensor2::from_vec(3, d, flat.to_vec())?)
    }

    pub fn width(&self) -> usize {
        self.data.cols()
    }

    pub fn tensor(&self) -> &Tensor2 {
        &self.data
    }

    /// Row-major flattening; the exact inverse of [`from_flat`](Self::from_flat).
    pub fn to_flat(&self) -> Vec<f64> {
        self.data.data().to_vec()
    }

    /// Left-multiplies by a rotation; rotations keep the type's invariants.
    pub fn rotated(&self, r: &RotationMatrix) -> RotatableFeature {
        let d = self.width();
        let mut out = Tensor2::zeros(3, d);
        let m = r.matrix();
        for row in 0..3 {
            for k in 0..3 {
                let coeff = m[(row, k)];
                if coeff == 0.0 {
                    continue;
                }
                let src = self.data.row(k).to_vec();
                let dst = out.row_mut(row);
                for (o, s) in dst.iter_mut().zip(src.iter()) {
                    *o += coeff * s;
                }
            }
        }
        RotatableFeature { data: out }
    }

    /// Column `j` as a 3-vector.
    pub fn column(&self, j: usize) -> [f64; 3] {
        [
            self.data.get(0, j),
            self.data.get(1, j),
            self.data.get(2, j),
        ]
    }
}

/// All learnable weights. The backbone and rotatable extractor are shared
/// across views; fusers and gaze heads are shared within a block (the same
/// parameter storage serves both sides) but distinct across blocks. The
/// `Concat` variant has no extractor or fusers and a single head.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModelParams {
    pub backbone: MlpParams,
    pub extractor: Option<MlpParams>,
    pub fusers: Vec<MlpParams>,
    pub gaze_heads: Vec<MlpParams>,
}

impl FusionModelParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = config.backbone_width;
        let d3 = config.flat_width();

        let backbone = init_mlp(&MlpSpec::new(vec![config.obs_width, b, b])?, &mut rng);

        if config.variant == Variant::Concat {
            let head = init_mlp(&MlpSpec::new(vec![2 * b, b, 3])?, &mut rng);
            return Ok(FusionModelParams {
                backbone,
                extractor: None,
                fusers: Vec::new(),
                gaze_heads: vec![head],
            });
        }

        let extractor = init_mlp(&MlpSpec::new(vec![b, d3, d3])?, &mut rng);
        let fuser_spec = MlpSpec::new(vec![config.fuser_input_width(), d3, d3, d3])?;
        let head_spec = MlpSpec::new(vec![d3 + b, b, 3])?;
        let mut fusers = Vec::with_capacity(config.blocks);
        let mut gaze_heads = Vec::with_capacity(config.blocks);
        for _ in 0..config.blocks {
            fusers.push(init_mlp(&fuser_spec, &mut rng));
        }
        for _ in 0..config.blocks {
            gaze_heads.push(init_mlp(&head_spec, &mut rng));
        }
        Ok(FusionModelParams {
            backbone,
            extractor: Some(extractor),
            fusers,
            gaze_heads,
        })
    }

    /// Zero-valued parameters with the same shapes; used in tests.
    pub fn zeroed_like(&self) -> FusionModelParams {
        fn zero(p: &MlpParams) -> MlpParams {
            MlpParams::zeroed(p.spec())
        }
        FusionModelParams {
            backbone: zero(&self.backbone),
            extractor: self.extractor.as_ref().map(zero),
            fusers: self.fusers.iter().map(zero).collect(),
            gaze_heads: self.gaze_heads.iter().map(zero).collect(),
        }
    }

    /// Deterministic tensor visit order; the optimizer and the checkpoint
    /// format both rely on it.
    pub fn visit_tensors<'a>(&'a self, out: &mut Vec<&'a Tensor2>) {
        self.backbone.visit_tensors(out);
        if let Some(e) = &self.extractor {
            e.visit_tensors(out);
        }
        for f in &self.fusers {
            f.visit_tensors(out);
        }
        for h in &self.gaze_heads {
            h.visit_tensors(out);
        }
    }

    pub fn visit_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor2>) {
        self.backbone.visit_tensors_mut(out);
        if let Some(e) = &mut self.extractor {
            e.visit_tensors_mut(out);
        }
        for f in &mut self.fusers {
            f.visit_tensors_mut(out);
        }
        for h in &mut self.gaze_heads {
            h.visit_tensors_mut(out);
        }
    }

    pub fn zero_grads(&mut self) {
        let mut refs = Vec::new();
        self.visit_tensors_mut(&mut refs);
        for t in refs {
            t.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        let mut refs = Vec::new();
        self.visit_tensors(&mut refs);
        refs.iter().map(|t| t.data().len()).sum()
    }

    pub fn tensor_lens(&self) -> Vec<usize> {
        let mut refs = Vec::new();
        self.visit_tensors(&mut refs);
        refs.iter().map(|t| t.data().len()).collect()
    }

    /// Copies all parameters into a flat vector (visit order).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut refs = Vec::new();
        self.visit_tensors(&mut refs);
        let mut out = Vec::with_capacity(self.param_count());
        for t in refs {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Loads parameters from a flat vector (visit order).
    pub fn load_flat(&mut self, flat: &[f64]) {
        let mut refs = Vec::new();
        self.visit_tensors_mut(&mut refs);
        let mut offset = 0;
        for t in refs {
            let n = t.data().len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    /// Copies accumulated gradients into a flat vector (visit order).
    pub fn grads_to_flat(&self) -> Vec<f64> {
        let mut refs = Vec::new();
        self.visit_tensors(&mut refs);
        let mut out = Vec::with_capacity(self.param_count());
        for t in refs {
            out.extend_from_slice(t.grad().expect("gradients not allocated"));
        }
        out
    }
}

/// A model: config plus parameters. Forward passes take `&self`; backward
/// passes accumulate gradients and take `&mut self`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionNet {
    pub config: ModelConfig,
    pub params: FusionModelParams,
}

impl FusionNet {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let params = FusionModelParams::init(&config, seed)?;
        Ok(FusionNet { config, params })
    }

    /// Backbone feature of a single observation.
    pub fn extract_backbone(&self, obs: &[f64]) -> Result<BackboneFeature, ModelError> {
        let (out, _) = self.params.backbone.forward(&Tensor2::from_row(obs))?;
        Ok(BackboneFeature(out.data().to_vec()))
    }

    /// Rotatable feature of a single backbone feature.
    pub fn extract_rotatable(&self, f: &BackboneFeature) -> Result<RotatableFeature, ModelError> {
        let extractor = self.extractor()?;
        let (out, _) = extractor.forward(&Tensor2::from_row(&f.0))?;
        RotatableFeature::from_flat(out.data())
    }

    /// One fuser application: `concat(flatten(rotated), f_dest)` through the
    /// block's three-layer fuser, re-stacked to 3×D. Only meaningful for the
    /// stacked variants whose fuser input is rotatable + backbone.
    pub fn fuse(
        &self,
        block: usize,
        rotated: &RotatableFeature,
        f_dest: &BackboneFeature,
    ) -> Result<RotatableFeature, ModelError> {
        let fuser = &self.params.fusers[block];
        let mut input = rotated.to_flat();
        input.extend_from_slice(&f_dest.0);
        let (out, _) = fuser.forward(&Tensor2::from_row(&input))?;
        RotatableFeature::from_flat(out.data())
    }

    /// One gaze-head application over `concat(flatten(F), f)`, normalized to
    /// unit length.
    pub fn estimate_gaze(
        &self,
        block: usize,
        feature: &RotatableFeature,
        f: &BackboneFeature,
    ) -> Result<GazeVector, ModelError> {
        let head = &self.params.gaze_heads[block];
        let mut input = feature.to_flat();
        input.extend_from_slice(&f.0);
        let (raw, _) = head.forward(&Tensor2::from_row(&input))?;
        let v = raw.data();
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm < 1e-12 {
            return Err(ModelError::DegenerateOutput { norm });
        }
        GazeVector::from_direction(nalgebra::Vector3::new(v[0], v[1], v[2]))
            .map_err(|_| ModelError::DegenerateOutput { norm })
    }

    /// Single-pair forward for the stacked variants: per-block
    /// (target, reference) unit gaze pairs; the final prediction is the last
    /// target entry.
    pub fn forward_single(
        &self,
        obs_tgt: &[f64],
        obs_ref: &[f64],
        rotation: &RotationMatrix,
    ) -> Result<Vec<(GazeVector, GazeVector)>, ModelError> {
        let obs_tgt = Tensor2::from_row(obs_tgt);
        let obs_ref = Tensor2::from_row(obs_ref);
        let rotations = [*rotation];
        let pass = self.forward_batch(&BatchInput {
            obs_tgt: &obs_tgt,
            obs_ref: &obs_ref,
            rotations: &rotations,
        })?;
        pass.outputs()
            .iter()
            .map(|block| {
                let t = block.tgt.row(0);
                let r = block.ref_.row(0);
                Ok((
                    GazeVector::new(nalgebra::Vector3::new(t[0], t[1], t[2]))
                        .map_err(|_| ModelError::DegenerateOutput { norm: 0.0 })?,
                    GazeVector::new(nalgebra::Vector3::new(r[0], r[1], r[2]))
                        .map_err(|_| ModelError::DegenerateOutput { norm: 0.0 })?,
                ))
            })
            .collect()
    }

    /// Single-pair forward of the concat baseline: one gaze for the target
    /// view, concat order fixed (target then reference).
    pub fn forward_concat_single(
        &self,
        obs_tgt: &[f64],
        obs_ref: &[f64],
    ) -> Result<GazeVector, ModelError> {
        if self.config.variant != Variant::Concat {
            return Err(ModelError::VariantMismatch {
                expected: Variant::Concat,
                got: self.config.variant,
            });
        }
        let obs_tgt = Tensor2::from_row(obs_tgt);
        let obs_ref = Tensor2::from_row(obs_ref);
        let pass = self.forward_batch(&BatchInput {
            obs_tgt: &obs_tgt,
            obs_ref: &obs_ref,
            rotations: &[],
        })?;
        let g = pass.final_gaze_tgt().row(0);
        GazeVector::new(nalgebra::Vector3::new(g[0], g[1], g[2]))
            .map_err(|_| ModelError::DegenerateOutput { norm: 0.0 })
    }

    fn extractor(&self) -> Result<&MlpParams, ModelError> {
        self.params
            .extractor
            .as_ref()
            .ok_or(ModelError::VariantMismatch {
                expected: Variant::Proposed,
                got: self.config.variant,
            })
    }
}

#[cfg(test)]
mod tests;
