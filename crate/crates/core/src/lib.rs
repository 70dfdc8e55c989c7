//! Rotation-constrained cross-view feature fusion for multi-view gaze
//! estimation, at desk scale.
//!
//! The crate is organized around six subsystems:
//!
//! - [`geometry`] — SO(3) utilities, normalization geometry, and the two
//!   relative-rotation constructions with their consistency checks.
//! - [`nn`] — minimal dense linear algebra with reverse-mode differentiation
//!   for MLP graphs, Adam with decoupled weight decay, and a cyclic
//!   learning-rate schedule.
//! - [`model`] — the fusion network: shared backbone and rotatable-feature
//!   extractors, stacked rotation-constrained fusion blocks with per-block
//!   gaze heads, the decayed angular loss, and the ablation variants.
//! - [`synth`] — a deterministic synthetic multi-camera benchmark with the
//!   12/3/3 seen/unseen camera split and subject-disjoint folds.
//! - [`train`] — the deterministic training loop, mask augmentation,
//!   checkpointing, and the experiment matrix runner.
//! - [`eval`] — evaluation metrics, per-camera-pair error matrices,
//!   contribution and rotatability analyses, scatter exports, noise sweeps,
//!   and the geometry verification suite.

pub mod config;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod nn;
pub mod synth;
pub mod train;
