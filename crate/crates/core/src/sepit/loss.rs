//! SI-SDR training loss, its gradient, and the permutation-invariant
//! evaluation loss.

use crate::error::{Error, Result};
use crate::metrics::{si_sdr_slices, DbCap};
use crate::scalar::{dot, Scalar};

const DB_PER_NEPER: f64 = 10.0 / std::f64::consts::LN_10;

/// Regulariser added to both energy terms of the training SI-SDR, relative
/// to the reference energy, so perfect estimates keep a finite gradient.
pub const LOSS_EPS: f64 = 1e-10;

fn check<T>(references: &[Vec<T>], estimates: &[Vec<T>]) -> Result<()> {
    if references.is_empty() || references.len() != estimates.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} references vs {} estimates",
            references.len(),
            estimates.len()
        )));
    }
    for (r, e) in references.iter().zip(estimates) {
        if r.len() != e.len() {
            return Err(Error::LengthMismatch(r.len(), e.len()));
        }
    }
    Ok(())
}

/// Smooth SI-SDR of one pair and its gradient with respect to the estimate.
pub fn si_sdr_with_grad<T: Scalar>(reference: &[T], estimate: &[T]) -> Result<(f64, Vec<f64>)> {
    let rr = dot(reference, reference);
    if rr <= 0.0 {
        return Err(Error::ZeroReference);
    }
    let re = dot(reference, estimate);
    let ee = dot(estimate, estimate);
    let eps = LOSS_EPS * rr;
    let p = re * re / rr;
    let q = (ee - p).max(0.0);
    let value = DB_PER_NEPER * ((p + eps) / (q + eps)).ln();
    // dp/de = 2<r,e>/||r||² · r,  dq/de = 2e − dp/de.
    let k = 2.0 * re / rr;
    let ip = 1.0 / (p + eps);
    let iq = 1.0 / (q + eps);
    let grad = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| {
            let dp = k * r.as_f64();
            let dq = 2.0 * e.as_f64() - dp;
            DB_PER_NEPER * (dp * ip - dq * iq)
        })
        .collect();
    Ok((value, grad))
}

/// Training loss: negative mean smooth SI-SDR with speakers in the given
/// order, and its gradient per estimate.
pub fn ordered_loss_with_grad<T: Scalar>(references: &[Vec<T>], estimates: &[Vec<T>]) -> Result<(f64, Vec<Vec<T>>)> {
    check(references, estimates)?;
    let c = references.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(references.len());
    for (r, e) in references.iter().zip(estimates) {
        let (v, g) = si_sdr_with_grad(r, e)?;
        total += v;
        grads.push(g.into_iter().map(|x| T::of(-x / c)).collect());
    }
    Ok((-total / c, grads))
}

/// Pairwise SI-SDR matrix, `scores[i][j]` for reference `i` against estimate `j`.
pub fn si_sdr_matrix<T: Scalar>(references: &[Vec<T>], estimates: &[Vec<T>], cap: DbCap) -> Result<Vec<Vec<f64>>> {
    check(references, estimates)?;
    references
        .iter()
        .map(|r| estimates.iter().map(|e| si_sdr_slices(r, e, cap)).collect())
        .collect()
}

/// Assignment `perm` (estimate `perm[i]` for reference `i`) maximising the
/// summed score, by exhaustive search. Ties keep the earliest permutation in
/// lexicographic order.
pub fn best_permutation(scores: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let c = scores.len();
    let mut perm: Vec<usize> = (0..c).collect();
    let mut best = (perm.clone(), f64::NEG_INFINITY);
    loop {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| scores[i][j]).sum();
        if total > best.1 {
            best = (perm.clone(), total);
        }
        if !next_permutation(&mut perm) {
            return best;
        }
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Evaluation loss: negative mean capped SI-SDR under the best permutation.
pub fn loss<T: Scalar>(references: &[Vec<T>], estimates: &[Vec<T>]) -> Result<f64> {
    let scores = si_sdr_matrix(references, estimates, DbCap::default())?;
    let (_, total) = best_permutation(&scores);
    Ok(-total / references.len() as f64)
}

/// Mean capped SI-SDR with speakers in the given order.
pub fn mean_si_sdr<T: Scalar>(references: &[Vec<T>], estimates: &[Vec<T>]) -> Result<f64> {
    check(references, estimates)?;
    let mut total = 0.0;
    for (r, e) in references.iter().zip(estimates) {
        total += si_sdr_slices(r, e, DbCap::default())?;
    }
    Ok(total / references.len() as f64)
}
