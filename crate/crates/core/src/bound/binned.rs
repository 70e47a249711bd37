//! Plug-in mutual information from a joint histogram.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{mean, variance};

/// Histogram range in standard deviations either side of the mean.
pub const SPAN_SIGMAS: f64 = 4.0;

fn bin_indices<T: Scalar>(x: &[T], bins: usize) -> Vec<usize> {
    let mu = mean(x);
    let sd = variance(x).sqrt();
    let (lo, hi) = if sd > 0.0 {
        (mu - SPAN_SIGMAS * sd, mu + SPAN_SIGMAS * sd)
    } else {
        (mu - 0.5, mu + 0.5)
    };
    let scale = bins as f64 / (hi - lo);
    x.iter()
        .map(|v| {
            let pos = ((v.as_f64() - lo) * scale).floor();
            pos.clamp(0.0, (bins - 1) as f64) as usize
        })
        .collect()
}

fn plug_in_entropy(counts: &[u64], n: u64) -> f64 {
    let n = n as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Discrete entropy (nats) of `x` binned over ±4 standard deviations.
pub fn binned_entropy<T: Scalar>(x: &[T], bin_count: usize) -> Result<f64> {
    if bin_count < 2 || x.is_empty() {
        return Err(Error::InvalidParameter("need samples and at least two bins".into()));
    }
    let mut counts = vec![0u64; bin_count];
    bin_indices(x, bin_count).into_iter().for_each(|i| counts[i] += 1);
    Ok(plug_in_entropy(&counts, x.len() as u64))
}

/// Plug-in mutual information `H(X) + H(Y) − H(X,Y)` in nats.
pub fn binned_mi<T: Scalar>(x: &[T], y: &[T], bin_count: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if bin_count < 2 {
        return Err(Error::InvalidParameter("need at least two bins".into()));
    }
    let need = 10 * bin_count * bin_count;
    if x.len() < need {
        return Err(Error::InvalidParameter(format!(
            "{} samples is too few for {bin_count} bins (need {need})",
            x.len()
        )));
    }
    let bx = bin_indices(x, bin_count);
    let by = bin_indices(y, bin_count);
    let mut cx = vec![0u64; bin_count];
    let mut cy = vec![0u64; bin_count];
    let mut cxy = vec![0u64; bin_count * bin_count];
    for (&i, &j) in bx.iter().zip(&by) {
        cx[i] += 1;
        cy[j] += 1;
        cxy[i * bin_count + j] += 1;
    }
    let n = x.len() as u64;
    Ok(plug_in_entropy(&cx, n) + plug_in_entropy(&cy, n) - plug_in_entropy(&cxy, n))
}
