//! Confidence-weighted offline policy optimization for binary classifiers.
//!
//! The crate trains a small feed-forward policy to make binary decisions with
//! a clipped policy-gradient surrogate whose reward is shaped by the frozen
//! policy's own confidence, regularized by a value baseline, a supervised
//! cross-entropy term, and an entropy bonus. Supervised fine-tuning and a
//! plain ±1-reward PPO loop are included as baselines, together with data
//! generators, evaluation metrics, and an experiment harness for label-noise
//! and class-imbalance studies.
//!
//! Module map:
//! - [`linalg`]: dense matrix primitives and the seedable PRNG every
//!   stochastic component draws from.
//! - [`model`]: policy/value networks, manual backprop, snapshots,
//!   checkpoints.
//! - [`reward`]: confidence-shaped reward for sampled actions.
//! - [`objective`]: clipped surrogate, value regression, supervised and
//!   entropy terms, KL diagnostics.
//! - [`trainer`]: the epoch/minibatch loop, samplers, optimizers, baselines.
//! - [`data`]: synthetic task generators, label noise, dataset IO, splits.
//! - [`eval`]: accuracy, AUROC, AUPRC, confidence-bin reports.
//! - [`config`]: layered run configuration (defaults < file < flags).
//! - [`harness`]: run directories, manifests, reruns, comparison grids.

pub mod config;
pub mod data;
pub mod eval;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod reward;
pub mod trainer;

#[cfg(test)]
pub(crate) mod testutil;

pub use data::{Dataset, Example};
pub use harness::{CompareReport, RunManifest, TaskSpec};
pub use linalg::{Matrix, Rng};
pub use model::{Action, FrozenPolicy, PolicyParams, ValueParams};
pub use objective::{LossBreakdown, LossWeights, StepRecord};
pub use reward::{RewardShape, RewardSpec};
pub use trainer::{EpochReport, Method, TrainConfig, TrainOutput};
