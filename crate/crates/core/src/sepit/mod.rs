//! SepIt: iterative refinement of separated sources, trained with an SI-SDR
//! loss and stopped at inference time when the mutual information between the
//! mixture and the estimates stops increasing.
//!
//! Speaker order is fixed by the backbone during training; permutation search
//! only appears in the evaluation loss.

mod adam;
mod backbone;
pub mod layers;
mod loss;
mod model;
mod run;
mod train;

use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use backbone::oracle_backbone;
pub use loss::{best_permutation, loss, mean_si_sdr, ordered_loss_with_grad, si_sdr_matrix, si_sdr_with_grad, LOSS_EPS};
pub use model::{Dims, Layout, SepItModel, RES_BLOCKS};
pub use run::{evaluate, mean_mi, run, run_all, stop_index, EvalReport, IterationTrace, StopReason};
pub use train::{grad_step, test_set, train, training_batch, Example, TrainLogEntry, Trained};

use crate::error::{Error, Result};
use crate::mixture::SourceModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SepItConfig {
    /// Speakers.
    pub c: usize,
    /// Latent channels.
    pub n: usize,
    /// Encoder kernel length in samples (even).
    pub k: usize,
    pub res_blocks: usize,
    /// Refinement iterations at inference.
    pub max_iter: usize,
    pub lr: f64,
    /// Learning-rate factor applied once per epoch.
    pub lr_decay: f64,
    pub steps_per_epoch: usize,
    /// Adam steps per block.
    pub steps: usize,
    /// Mixtures per gradient step.
    pub batch: usize,
    /// Training crop length in samples.
    pub crop: usize,
    /// Histogram bins per axis for the stopping criterion.
    pub mi_bins: usize,
    /// One block reused for every iteration instead of one block per iteration.
    pub share_weights: bool,
    /// Backbone signal-to-interference ratio in dB.
    pub interference_db: f64,
    pub source_model: SourceModel,
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for SepItConfig {
    fn default() -> Self {
        Self {
            c: 2,
            n: 16,
            k: 4,
            res_blocks: RES_BLOCKS,
            max_iter: 5,
            lr: 5e-4,
            lr_decay: 0.95,
            steps_per_epoch: 100,
            steps: 2000,
            batch: 2,
            crop: 512,
            mi_bins: 32,
            share_weights: false,
            interference_db: 10.0,
            source_model: SourceModel::ArLaplace,
            sample_rate: crate::signal::DEFAULT_SAMPLE_RATE,
            seed: 0,
        }
    }
}

impl SepItConfig {
    pub fn dims(&self) -> Dims {
        Dims { c: self.c, n: self.n, k: self.k }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims().validate()?;
        if self.res_blocks != RES_BLOCKS {
            return Err(Error::InvalidParameter(format!("res_blocks must be {RES_BLOCKS}")));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.steps_per_epoch == 0 {
            return Err(Error::InvalidParameter("need lr > 0, 0 < lr_decay ≤ 1 and steps_per_epoch ≥ 1".into()));
        }
        if self.batch == 0 || self.crop < self.k || self.mi_bins < 2 {
            return Err(Error::InvalidParameter("need batch ≥ 1, crop ≥ K and mi_bins ≥ 2".into()));
        }
        if !(self.sample_rate > 0.0) || self.interference_db.is_nan() {
            return Err(Error::InvalidParameter("invalid sample rate or interference ratio".into()));
        }
        Ok(())
    }

    /// Learning rate in effect at `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr * self.lr_decay.powi((step / self.steps_per_epoch) as i32)
    }
}
