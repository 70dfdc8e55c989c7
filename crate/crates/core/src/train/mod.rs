//! Deterministic training: seeded batching and augmentation, the decayed
//! angular loss, Adam with a per-epoch cyclic learning rate, per-epoch
//! checkpointing, and the experiment matrix runner.

pub mod augment;
pub mod checkpoint;
pub mod matrix;

pub use augment::{mask_augment, noise_augment, MaskParams};
pub use checkpoint::{Checkpoint, RngState};
pub use matrix::{run_experiment_matrix, MatrixResults, MatrixRow, MatrixVariant};

use crate::config::ExperimentConfig;
use crate::model::{
    concat_loss_batch, total_loss_batch, BatchInput, FusionNet, ModelConfig, ModelError, Variant,
};
use crate::nn::{AdamConfig, AdamState, CyclicLrSchedule, NnError, Tensor2};
use crate::synth::{perturb_rotation, DataError, Dataset, SamplePair};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: u32,
        batch: usize,
        detail: String,
    },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("checkpoint parse error: {0}")]
    Parse(String),
    #[error("no training pairs for fold {0}")]
    EmptyTrainingSet(u32),
}

/// Per-run summary: epoch losses, their per-block decomposition, and where
/// the final checkpoint landed.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub per_epoch_loss: Vec<f64>,
    pub per_epoch_block_loss: Vec<Vec<f64>>,
    pub final_checkpoint: PathBuf,
    pub wall_seconds: f64,
    pub config_hash: String,
}

/// Fills an inferred observation width (0) from the dataset and checks an
/// explicit one against it.
pub fn resolve_model_config(
    model: &ModelConfig,
    dataset: &Dataset,
) -> Result<ModelConfig, TrainError> {
    let width = dataset.obs_width();
    let mut resolved = model.clone();
    if resolved.obs_width == 0 {
        resolved.obs_width = width;
    } else if resolved.obs_width != width {
        return Err(TrainError::ConfigMismatch(format!(
            "model obs_width {} but dataset observations have width {width}",
            resolved.obs_width
        )));
    }
    Ok(resolved)
}

/// One assembled batch: augmented observation tensors, (possibly perturbed)
/// rotations, and ground-truth tensors.
struct Batch {
    obs_tgt: Tensor2,
    obs_ref: Tensor2,
    rotations: Vec<crate::geometry::RotationMatrix>,
    gt_tgt: Tensor2,
    gt_ref: Tensor2,
}

fn assemble_batch(
    pairs: &[&SamplePair],
    indices: &[usize],
    cfg: &ExperimentConfig,
    mask: &MaskParams,
    rng: &mut ChaCha8Rng,
) -> Batch {
    let n = indices.len();
    let width = pairs[indices[0]].obs_tgt.features.len();
    let mut obs_tgt = Tensor2::zeros(n, width);
    let mut obs_ref = Tensor2::zeros(n, width);
    let mut gt_tgt = Tensor2::zeros(n, 3);
    let mut gt_ref = Tensor2::zeros(n, 3);
    let mut rotations = Vec::with_capacity(n);
    for (row, &idx) in indices.iter().enumerate() {
        let pair = pairs[idx];
        let mut feat_t = pair.obs_tgt.features.clone();
        let mut feat_r = pair.obs_ref.features.clone();
        // Noise first, masking second: masked entries stay exactly zero.
        noise_augment(&mut feat_t, cfg.train.noise_sigma, rng);
        mask_augment(&mut feat_t, mask, rng);
        noise_augment(&mut feat_r, cfg.train.noise_sigma, rng);
        mask_augment(&mut feat_r, mask, rng);
        obs_tgt.row_mut(row).copy_from_slice(&feat_t);
        obs_ref.row_mut(row).copy_from_slice(&feat_r);
        gt_tgt.row_mut(row).copy_from_slice(&pair.gt_tgt.to_array());
        gt_ref.row_mut(row).copy_from_slice(&pair.gt_ref.to_array());
        let rotation = if cfg.train.rotation_noise > 0.0 {
            perturb_rotation(&pair.rotation, cfg.train.rotation_noise, rng)
        } else {
            pair.rotation
        };
        rotations.push(rotation);
    }
    Batch {
        obs_tgt,
        obs_ref,
        rotations,
        gt_tgt,
        gt_ref,
    }
}

/// One optimization step over a batch; returns (total loss, per-block loss).
fn train_step(
    net: &mut FusionNet,
    adam: &mut AdamState,
    batch: &Batch,
) -> Result<(f64, Vec<f64>), TrainError> {
    let input = BatchInput {
        obs_tgt: &batch.obs_tgt,
        obs_ref: &batch.obs_ref,
        rotations: &batch.rotations,
    };
    net.params.zero_grads();
    let pass = net.forward_batch(&input)?;
    let (loss, per_block, grads) = if net.config.variant == Variant::Concat {
        let (loss, grad) = concat_loss_batch(&pass.outputs()[0], &batch.gt_tgt)?;
        (loss, vec![loss], vec![grad])
    } else {
        let (breakdown, grads) = total_loss_batch(
            pass.outputs(),
            &batch.gt_tgt,
            &batch.gt_ref,
            net.config.alpha,
        )?;
        (breakdown.total, breakdown.per_block, grads)
    };
    net.backward_batch(&pass, &grads)?;
    let mut tensors = Vec::new();
    net.params.visit_tensors_mut(&mut tensors);
    adam.step_params(&mut tensors)?;
    Ok((loss, per_block))
}

/// Trains from scratch on an in-memory dataset. Deterministic in
/// (config, dataset): identical inputs give bit-identical checkpoints.
pub fn train_on(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    out_dir: &Path,
) -> Result<(TrainReport, Checkpoint), TrainError> {
    let model_config = resolve_model_config(&cfg.model, dataset)?;
    let net = FusionNet::init(model_config, cfg.train.seed)?;
    let train_pairs = dataset.train_pairs_for_fold(cfg.dataset.eval_fold);
    if train_pairs.is_empty() {
        return Err(TrainError::EmptyTrainingSet(cfg.dataset.eval_fold));
    }
    let batches_per_epoch = train_pairs.len().div_ceil(cfg.train.batch_size);
    let schedule = CyclicLrSchedule::new(
        cfg.train.base_lr,
        cfg.train.max_lr,
        batches_per_epoch,
        cfg.train.lr_decay,
    );
    let adam = AdamState::new(
        AdamConfig {
            weight_decay: cfg.train.weight_decay,
            ..AdamConfig::default()
        },
        schedule,
        &net.params.tensor_lens(),
    );
    let rng = ChaCha8Rng::seed_from_u64(cfg.train.seed ^ 0x9E37_79B9_7F4A_7C15);
    run_epochs(cfg, dataset, net, adam, rng, 0, out_dir)
}

/// Continues a checkpointed run to the configured epoch count; the result is
/// bit-identical to the uninterrupted run.
pub fn resume_training(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    checkpoint: Checkpoint,
    out_dir: &Path,
) -> Result<(TrainReport, Checkpoint), TrainError> {
    let model_config = resolve_model_config(&cfg.model, dataset)?;
    if model_config != checkpoint.model_config {
        return Err(TrainError::ConfigMismatch(
            "checkpoint model config differs from the experiment config".into(),
        ));
    }
    let rng = checkpoint.rng.restore();
    let start_epoch = checkpoint.epoch;
    let net = FusionNet {
        config: checkpoint.model_config,
        params: checkpoint.params,
    };
    run_epochs(
        cfg,
        dataset,
        net,
        checkpoint.optimizer,
        rng,
        start_epoch,
        out_dir,
    )
}

fn run_epochs(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    mut net: FusionNet,
    mut adam: AdamState,
    mut rng: ChaCha8Rng,
    start_epoch: u32,
    out_dir: &Path,
) -> Result<(TrainReport, Checkpoint), TrainError> {
    std::fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let train_pairs = dataset.train_pairs_for_fold(cfg.dataset.eval_fold);
    if train_pairs.is_empty() {
        return Err(TrainError::EmptyTrainingSet(cfg.dataset.eval_fold));
    }
    let mask = MaskParams::from_train(&cfg.train);
    let config_hash = cfg.hash_bytes();

    let mut per_epoch_loss = Vec::new();
    let mut per_epoch_block_loss = Vec::new();
    let last_path = out_dir.join("last.rfck");
    let mut checkpoint = Checkpoint {
        model_config: net.config.clone(),
        params: net.params.clone(),
        optimizer: adam.clone(),
        rng: RngState::capture(&rng),
        epoch: start_epoch,
        config_hash,
    };

    for epoch in start_epoch..cfg.train.epochs {
        // Shuffle from the identity order so a resumed run sees the same
        // permutation as the uninterrupted one.
        let mut indices: Vec<usize> = (0..train_pairs.len()).collect();
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut block_sums: Vec<f64> = Vec::new();
        let mut batches = 0usize;
        for (batch_idx, chunk) in indices.chunks(cfg.train.batch_size).enumerate() {
            let batch = assemble_batch(&train_pairs, chunk, cfg, &mask, &mut rng);
            let (loss, per_block) =
                train_step(&mut net, &mut adam, &batch).map_err(|e| match e {
                    TrainError::Nn(NnError::NonFinite { context })
                    | TrainError::Model(ModelError::Nn(NnError::NonFinite { context })) => {
                        TrainError::NonFiniteLoss {
                            epoch,
                            batch: batch_idx,
                            detail: context.to_string(),
                        }
                    }
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    detail: format!("loss value {loss}"),
                });
            }
            loss_sum += loss;
            if block_sums.len() < per_block.len() {
                block_sums.resize(per_block.len(), 0.0);
            }
            for (acc, lb) in block_sums.iter_mut().zip(per_block.iter()) {
                *acc += lb;
            }
            batches += 1;
        }
        per_epoch_loss.push(loss_sum / batches as f64);
        per_epoch_block_loss.push(block_sums.iter().map(|s| s / batches as f64).collect());

        checkpoint = Checkpoint {
            model_config: net.config.clone(),
            params: net.params.clone(),
            optimizer: adam.clone(),
            rng: RngState::capture(&rng),
            epoch: epoch + 1,
            config_hash,
        };
        checkpoint.save(&last_path)?;
        if cfg.train.keep_epoch_checkpoints {
            checkpoint.save(&out_dir.join(format!("epoch_{:03}.rfck", epoch + 1)))?;
        }
    }

    let report = TrainReport {
        per_epoch_loss,
        per_epoch_block_loss,
        final_checkpoint: last_path,
        wall_seconds: start.elapsed().as_secs_f64(),
        config_hash: cfg.hash_hex(),
    };
    Ok((report, checkpoint))
}

/// Loads the dataset named by the config, then trains.
pub fn train_model(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<(TrainReport, Checkpoint), TrainError> {
    let dataset = Dataset::load(&cfg.dataset.path)?;
    train_on(cfg, &dataset, out_dir)
}
