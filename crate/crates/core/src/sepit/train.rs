//! Sequential training of the per-iteration blocks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::backbone::oracle_backbone;
use super::loss::ordered_loss_with_grad;
use super::model::SepItModel;
use super::SepItConfig;
use crate::error::Result;
use crate::mixture::{synth_mixture_indexed, MixtureSpec};
use crate::scalar::Scalar;

/// Mixture indices at or above this offset are reserved for training data.
const TRAIN_INDEX_BASE: u64 = 1 << 32;

/// One training or test item: mixture, references and current estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub mixture: Vec<T>,
    pub references: Vec<Vec<T>>,
    pub estimates: Vec<Vec<T>>,
}

impl<T: Scalar> Example<T> {
    /// Synthetic mixture `index` of the corpus keyed by `seed`, with oracle
    /// backbone estimates.
    pub fn synthetic(cfg: &SepItConfig, len: usize, seed: u64, index: u64) -> Result<Self> {
        let spec = MixtureSpec {
            speakers: cfg.c,
            duration_s: len as f64 / cfg.sample_rate,
            sample_rate: cfg.sample_rate,
            source_model: cfg.source_model,
        };
        let mix = synth_mixture_indexed::<T>(spec, seed, index)?;
        let estimates = oracle_backbone(&mix.sources, cfg.interference_db)?;
        Ok(Self {
            mixture: mix.mixture.into_samples(),
            references: mix.sources.into_iter().map(|s| s.into_samples()).collect(),
            estimates: estimates.into_iter().map(|s| s.into_samples()).collect(),
        })
    }
}

/// Training batch for `step`, identical for every block.
pub fn training_batch<T: Scalar>(cfg: &SepItConfig, step: usize) -> Result<Vec<Example<T>>> {
    (0..cfg.batch)
        .map(|b| Example::synthetic(cfg, cfg.crop, cfg.seed, TRAIN_INDEX_BASE + (step * cfg.batch + b) as u64))
        .collect()
}

/// One Adam step on the mean ordered SI-SDR loss of `batch`; returns the loss
/// before the update.
pub fn grad_step<T: Scalar>(model: &mut SepItModel<T>, opt: &mut Adam, batch: &[Example<T>], lr: f64) -> Result<f64> {
    let results: Vec<Result<(f64, Vec<T>)>> = batch
        .par_iter()
        .map(|ex| {
            let (loss, _, grad) =
                model.forward_backward(&ex.mixture, &ex.estimates, |out| ordered_loss_with_grad(&ex.references, out))?;
            Ok((loss, grad))
        })
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut total = vec![0.0f64; model.param_count()];
    let mut loss = 0.0;
    for r in results {
        let (l, g) = r?;
        loss += l * scale;
        total.iter_mut().zip(&g).for_each(|(a, b)| *a += b.as_f64() * scale);
    }
    let grad: Vec<T> = total.into_iter().map(T::of).collect();
    opt.update(model.params_mut(), &grad, lr);
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub block: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Trained blocks and the per-step learning curve.
#[derive(Debug, Clone)]
pub struct Trained<T> {
    pub blocks: Vec<SepItModel<T>>,
    pub log: Vec<TrainLogEntry>,
}

/// Trains one block per iteration, each on the outputs of the blocks before
/// it; with `share_weights` a single block is trained on backbone outputs and
/// reused at every iteration.
pub fn train<T: Scalar>(cfg: &SepItConfig) -> Result<Trained<T>> {
    cfg.validate()?;
    let count = if cfg.share_weights { 1 } else { cfg.max_iter };
    let mut blocks: Vec<SepItModel<T>> = Vec::with_capacity(count);
    let mut log = Vec::with_capacity(count * cfg.steps);
    for j in 0..count {
        let mut model = SepItModel::<T>::init(cfg.dims(), cfg.seed, j as u64)?;
        let mut opt = Adam::new(model.param_count());
        for step in 0..cfg.steps {
            let mut batch = training_batch::<T>(cfg, step)?;
            for ex in &mut batch {
                for prev in &blocks {
                    ex.estimates = prev.forward(&ex.mixture, &ex.estimates)?;
                }
            }
            let lr = cfg.lr_at(step);
            let loss = grad_step(&mut model, &mut opt, &batch, lr)?;
            log.push(TrainLogEntry { block: j, step, lr, loss });
            if step % 500 == 0 {
                log::debug!("block {j} step {step} loss {loss:.4}");
            }
        }
        blocks.push(model);
    }
    Ok(Trained { blocks, log })
}

/// `count` held-out examples of `len` samples; indices never overlap training data.
pub fn test_set<T: Scalar>(cfg: &SepItConfig, count: usize, len: usize) -> Result<Vec<Example<T>>> {
    (0..count as u64).map(|i| Example::synthetic(cfg, len, cfg.seed, i)).collect()
}
