//! Inference with the mutual-information stopping rule, and test-set evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::mean_si_sdr;
use super::model::SepItModel;
use super::train::Example;
use super::SepItConfig;
use crate::bound::binned_mi;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MiDecrease,
    MaxIter,
}

/// Iterates `v̄⁰ … v̄^J` of one mixture. Index 0 is the backbone output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace<T> {
    pub estimates: Vec<Vec<Vec<T>>>,
    /// Speaker-averaged `I(m, v̄^j)` in nats.
    pub mi: Vec<f64>,
    /// Mean SI-SDR per iterate, when references were supplied.
    pub si_sdr: Option<Vec<f64>>,
    pub stop_reason: StopReason,
}

impl<T: Scalar> IterationTrace<T> {
    /// Index of the returned iterate.
    pub fn stopped_at(&self) -> usize {
        self.estimates.len() - 1
    }

    pub fn output(&self) -> &[Vec<T>] {
        self.estimates.last().expect("trace holds the backbone output")
    }
}

/// Mean over speakers of the binned mutual information with the mixture.
pub fn mean_mi<T: Scalar>(mixture: &[T], estimates: &[Vec<T>], bins: usize) -> Result<f64> {
    let mut total = 0.0;
    for e in estimates {
        total += binned_mi(mixture, e, bins)?;
    }
    Ok(total / estimates.len() as f64)
}

/// Iterate returned by the stopping rule given the MI series of a full run:
/// the first `j` with `mi[j] < mi[j−1]`, or the last iterate.
pub fn stop_index(mi: &[f64], max_iter: usize) -> (usize, StopReason) {
    let last = max_iter.min(mi.len().saturating_sub(1));
    for j in 1..=last {
        if mi[j] - mi[j - 1] < 0.0 {
            return (j, StopReason::MiDecrease);
        }
    }
    (last, StopReason::MaxIter)
}

fn block_for<T>(blocks: &[SepItModel<T>], j: usize) -> &SepItModel<T> {
    &blocks[(j - 1).min(blocks.len() - 1)]
}

fn iterate<T: Scalar>(
    mixture: &[T],
    backbone: &[Vec<T>],
    blocks: &[SepItModel<T>],
    max_iter: usize,
    mi_bins: usize,
    use_stop_rule: bool,
) -> Result<IterationTrace<T>> {
    if max_iter > 0 && blocks.is_empty() {
        return Err(Error::InvalidParameter("no trained blocks".into()));
    }
    let mut estimates = vec![backbone.to_vec()];
    let mut mi = vec![mean_mi(mixture, backbone, mi_bins)?];
    let mut stop_reason = StopReason::MaxIter;
    for j in 1..=max_iter {
        let next = block_for(blocks, j).forward(mixture, &estimates[j - 1])?;
        mi.push(mean_mi(mixture, &next, mi_bins)?);
        estimates.push(next);
        if use_stop_rule && mi[j] - mi[j - 1] < 0.0 {
            stop_reason = StopReason::MiDecrease;
            break;
        }
    }
    Ok(IterationTrace { estimates, mi, si_sdr: None, stop_reason })
}

/// Refines `backbone` until `I(m, v̄^j)` decreases (ties continue) or
/// `max_iter` iterations have run. No parameters are updated.
pub fn run<T: Scalar>(
    mixture: &[T],
    backbone: &[Vec<T>],
    blocks: &[SepItModel<T>],
    max_iter: usize,
    mi_bins: usize,
) -> Result<IterationTrace<T>> {
    iterate(mixture, backbone, blocks, max_iter, mi_bins, true)
}

/// All `max_iter` iterations regardless of the stopping rule.
pub fn run_all<T: Scalar>(
    mixture: &[T],
    backbone: &[Vec<T>],
    blocks: &[SepItModel<T>],
    max_iter: usize,
    mi_bins: usize,
) -> Result<IterationTrace<T>> {
    iterate(mixture, backbone, blocks, max_iter, mi_bins, false)
}

/// Test-set summary. Per-iteration vectors start at the backbone output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mixtures: usize,
    /// Mean SI-SDR of the unprocessed mixture against each reference.
    pub mixture_si_sdr: f64,
    pub mean_si_sdr: Vec<f64>,
    pub mean_mi: Vec<f64>,
    /// Iterate chosen by the stopping rule, per mixture.
    pub stopped_at: Vec<usize>,
    pub stop_reasons: Vec<StopReason>,
    /// Mean SI-SDR of the iterates chosen by the stopping rule.
    pub sc_si_sdr: f64,
    /// Fixed iteration index with the highest mean SI-SDR.
    pub best_iteration: usize,
    pub best_si_sdr: f64,
}

impl EvalReport {
    /// SI-SDR gain of iterate `j` over the backbone output.
    pub fn improvement_over_backbone(&self, j: usize) -> f64 {
        self.mean_si_sdr[j] - self.mean_si_sdr[0]
    }

    /// SI-SDR gain of iterate `j` over the unprocessed mixture.
    pub fn improvement_over_mixture(&self, j: usize) -> f64 {
        self.mean_si_sdr[j] - self.mixture_si_sdr
    }
}

/// Runs every test example through all iterations and summarises both the
/// fixed-iteration and stopping-rule results.
pub fn evaluate<T: Scalar>(
    cfg: &SepItConfig,
    blocks: &[SepItModel<T>],
    test: &[Example<T>],
) -> Result<(EvalReport, Vec<IterationTrace<T>>)> {
    if test.is_empty() {
        return Err(Error::InvalidParameter("empty test set".into()));
    }
    let traces: Vec<Result<IterationTrace<T>>> = test
        .par_iter()
        .map(|ex| {
            let mut t = run_all(&ex.mixture, &ex.estimates, blocks, cfg.max_iter, cfg.mi_bins)?;
            let scores = t.estimates.iter().map(|e| mean_si_sdr(&ex.references, e)).collect::<Result<Vec<_>>>()?;
            t.si_sdr = Some(scores);
            Ok(t)
        })
        .collect();
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;

    let n = test.len() as f64;
    let iters = cfg.max_iter + 1;
    let mut mean_si = vec![0.0; iters];
    let mut mean_mi_v = vec![0.0; iters];
    let mut stopped_at = Vec::with_capacity(test.len());
    let mut stop_reasons = Vec::with_capacity(test.len());
    let mut sc = 0.0;
    let mut mix_si = 0.0;
    for (t, ex) in traces.iter().zip(test) {
        let s = t.si_sdr.as_ref().expect("scores");
        for j in 0..iters {
            mean_si[j] += s[j] / n;
            mean_mi_v[j] += t.mi[j] / n;
        }
        let (j, reason) = stop_index(&t.mi, cfg.max_iter);
        stopped_at.push(j);
        stop_reasons.push(reason);
        sc += s[j] / n;
        let mix = vec![ex.mixture.clone(); ex.references.len()];
        mix_si += mean_si_sdr(&ex.references, &mix)? / n;
    }
    let (best_iteration, best_si_sdr) = mean_si
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
    let report = EvalReport {
        mixtures: test.len(),
        mixture_si_sdr: mix_si,
        mean_si_sdr: mean_si,
        mean_mi: mean_mi_v,
        stopped_at,
        stop_reasons,
        sc_si_sdr: sc,
        best_iteration,
        best_si_sdr,
    };
    Ok((report, traces))
}
