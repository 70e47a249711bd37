//! Distribution check on pooled short segments and the synthetic corpus used
//! when no recordings are supplied.

use serde::{Deserialize, Serialize};

use crate::distributions::{estimate_pdf, fit_laplace, fit_normal, kl_to_laplace, kl_to_normal, Pdf1D};
use crate::distributions::{LaplaceParams, NormalParams};
use crate::error::{Error, Result};
use crate::rng::{laplace, stream_rng, Stage};
use crate::scalar::Scalar;
use crate::signal::{segment, variance, whiten_samples, Signal, SILENCE_REL_THRESHOLD};

pub const DEFAULT_LAPLACE_BINS: usize = 201;
/// Histogram half-width in pooled standard deviations.
pub const LAPLACE_RANGE_SIGMAS: f64 = 6.0;

/// How each segment is scaled before pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentNorm {
    /// Each segment whitened on its own, so segments with different
    /// loudness pool into one law.
    PerSegment,
    /// Raw amplitudes.
    None,
}

impl std::str::FromStr for SegmentNorm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-segment" => Ok(Self::PerSegment),
            "none" => Ok(Self::None),
            other => Err(Error::InvalidParameter(format!("unknown segment normalisation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplaceReport {
    pub window_ms: f64,
    pub segments: usize,
    pub skipped_silent: usize,
    pub silence_rel_threshold: f64,
    pub norm: SegmentNorm,
    pub samples: u64,
    pub clipped: u64,
    pub range: (f64, f64),
    pub empirical: Pdf1D,
    pub laplace: LaplaceParams<f64>,
    pub normal: NormalParams<f64>,
    pub kl_laplace: f64,
    pub kl_normal: f64,
}

impl LaplaceReport {
    /// `(center, empirical, laplace, normal)` density rows for plotting.
    pub fn rows(&self) -> Vec<[f64; 4]> {
        self.empirical
            .centers()
            .into_iter()
            .zip(self.empirical.density())
            .map(|(x, &d)| [x, d, self.laplace.pdf(x), self.normal.pdf(x)])
            .collect()
    }
}

/// Pools the non-silent `window_ms` segments of every signal, fits zero-mean
/// Laplace and normal laws, and reports the KL divergence of the empirical
/// density to each.
pub fn validate_laplace<T: Scalar>(
    signals: &[Signal<T>],
    window_ms: f64,
    bins: usize,
    norm: SegmentNorm,
) -> Result<LaplaceReport> {
    let mut pooled: Vec<f64> = Vec::new();
    let mut segments = 0;
    let mut skipped = 0;
    for s in signals {
        let view = match segment(s, window_ms) {
            Ok(v) => v,
            Err(Error::WindowTooLarge { .. }) => continue,
            Err(e) => return Err(e),
        };
        let floor = SILENCE_REL_THRESHOLD * s.variance();
        for seg in view.iter() {
            let v = variance(seg);
            if v < floor || v < 1e-12 {
                skipped += 1;
                continue;
            }
            segments += 1;
            match norm {
                SegmentNorm::PerSegment => pooled.extend(whiten_samples(seg)?.into_iter().map(|x| x.as_f64())),
                SegmentNorm::None => pooled.extend(seg.iter().map(|x| x.as_f64())),
            }
        }
    }
    if segments == 0 {
        return Err(Error::NoSegments);
    }
    let sd = variance(&pooled).sqrt();
    let range = (-LAPLACE_RANGE_SIGMAS * sd, LAPLACE_RANGE_SIGMAS * sd);
    let est = estimate_pdf(&pooled, bins, range)?;
    let laplace = fit_laplace(&pooled)?;
    let normal = fit_normal(&pooled)?;
    Ok(LaplaceReport {
        window_ms,
        segments,
        skipped_silent: skipped,
        silence_rel_threshold: SILENCE_REL_THRESHOLD,
        norm,
        samples: est.samples,
        clipped: est.clipped,
        range,
        kl_laplace: kl_to_laplace(&est.pdf, laplace),
        kl_normal: kl_to_normal(&est.pdf, normal),
        empirical: est.pdf,
        laplace,
        normal,
    })
}

/// `count` signals of i.i.d. unit-variance Laplace samples.
pub fn synthetic_laplace_corpus(count: usize, duration_s: f64, sample_rate: f64, seed: u64) -> Result<Vec<Signal<f64>>> {
    let len = (duration_s * sample_rate).round();
    if !(len >= 1.0) || count == 0 {
        return Err(Error::InvalidParameter("corpus needs at least one signal and one sample".into()));
    }
    let b = std::f64::consts::FRAC_1_SQRT_2;
    (0..count as u64)
        .map(|i| {
            let mut rng = stream_rng(seed, Stage::Corpus, i);
            let x = (0..len as usize).map(|_| laplace(&mut rng, b)).collect();
            Signal::new(x, sample_rate)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_corpus_has_no_segments() {
        let r = validate_laplace::<f64>(&[], 20.0, 201, SegmentNorm::PerSegment);
        assert!(matches!(r, Err(Error::NoSegments)));
    }

    #[test]
    fn silent_signal_has_no_segments() {
        let s = Signal::new(vec![0.0; 800], 8000.0).unwrap();
        assert!(matches!(validate_laplace(&[s], 20.0, 201, SegmentNorm::None), Err(Error::NoSegments)));
    }

    #[test]
    fn synthetic_corpus_prefers_laplace() {
        let corpus = synthetic_laplace_corpus(5, 4.0, 8000.0, 1).unwrap();
        for norm in [SegmentNorm::PerSegment, SegmentNorm::None] {
            let r = validate_laplace(&corpus, 20.0, 201, norm).unwrap();
            assert_eq!(r.segments, 1000);
            assert!(r.kl_laplace < 0.01, "{norm:?} {}", r.kl_laplace);
            assert!(r.kl_normal > r.kl_laplace);
            assert_eq!(r.rows().len(), 201);
        }
    }
}
