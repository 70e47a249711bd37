//! Energy-conserving mixture coefficients and synthetic mixtures.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::distributions::{Histogram, Pdf1D};
use crate::error::{Error, Result};
use crate::rng::{laplace, open01, run_chunks, stream_rng, Stage};
use crate::scalar::Scalar;
use crate::signal::{whiten_samples, Signal};

/// Default Monte-Carlo trial count for desk runs.
pub const DEFAULT_TRIALS: usize = 1_000_000;
/// Trial count at which the PDF estimates stop moving by more than 1e-4.
pub const CONVERGED_TRIALS: usize = 10_000_000;
/// Pole of the one-pole filter used by [`SourceModel::ArLaplace`].
pub const AR_POLE: f64 = 0.7;

const MAX_GRAM_CONDITION: f64 = 1e8;

/// Positive mixing weights with unit square sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSample {
    a: Vec<f64>,
}

impl CoefficientSample {
    /// Normalises positive weights to unit energy.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        if w.is_empty() || w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("weights must be positive and finite".into()));
        }
        let mut a = w.to_vec();
        normalize_energy(&mut a);
        Ok(Self { a })
    }

    pub fn values(&self) -> &[f64] {
        &self.a
    }

    pub fn speakers(&self) -> usize {
        self.a.len()
    }

    pub fn energy(&self) -> f64 {
        self.a.iter().map(|x| x * x).sum()
    }
}

#[inline]
fn normalize_energy(a: &mut [f64]) {
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    a.iter_mut().for_each(|x| *x /= norm);
}

/// Fills `out` with one energy-normalised draw of i.i.d. Uniform(0,1) weights.
#[inline]
pub fn draw_coefficients<R: RngCore + ?Sized>(rng: &mut R, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = open01(rng));
    normalize_energy(out);
}

fn check_c(c: usize) -> Result<()> {
    if c == 0 {
        return Err(Error::InvalidParameter("speaker count must be at least 1".into()));
    }
    Ok(())
}

/// `m` independent energy-conserving coefficient vectors for `c` speakers.
pub fn sample_coefficients(c: usize, m: usize, seed: u64) -> Result<Vec<CoefficientSample>> {
    sample_coefficients_with(c, m, seed, 0)
}

pub fn sample_coefficients_with(c: usize, m: usize, seed: u64, workers: usize) -> Result<Vec<CoefficientSample>> {
    check_c(c)?;
    if m == 0 {
        return Err(Error::InvalidParameter("trial count must be at least 1".into()));
    }
    let chunks = run_chunks(seed, Stage::Coefficients, m, workers, |rng, n| {
        (0..n)
            .map(|_| {
                let mut a = vec![0.0; c];
                draw_coefficients(rng, &mut a);
                CoefficientSample { a }
            })
            .collect::<Vec<_>>()
    });
    Ok(chunks.into_iter().flatten().collect())
}

/// Histogram of the first coefficient over `m` draws, on `[0, 1]`.
pub fn coefficient_histogram(c: usize, m: usize, bin_count: usize, seed: u64, workers: usize) -> Result<Histogram> {
    check_c(c)?;
    if m == 0 || bin_count < 1 {
        return Err(Error::InvalidParameter("need at least one trial and one bin".into()));
    }
    let empty = Histogram::new(0.0, 1.0, bin_count)?;
    let parts = run_chunks(seed, Stage::Coefficients, m, workers, |rng, n| {
        let mut h = empty.clone();
        let mut a = vec![0.0; c];
        for _ in 0..n {
            draw_coefficients(rng, &mut a);
            h.add(a[0]);
        }
        h
    });
    let mut h = empty;
    parts.iter().for_each(|p| h.merge(p));
    Ok(h)
}

/// Density of the first mixing coefficient on `[0, 1]`.
pub fn coefficient_pdf(c: usize, m: usize, bin_count: usize, seed: u64) -> Result<Pdf1D> {
    coefficient_pdf_with(c, m, bin_count, seed, 0)
}

pub fn coefficient_pdf_with(c: usize, m: usize, bin_count: usize, seed: u64, workers: usize) -> Result<Pdf1D> {
    coefficient_histogram(c, m, bin_count, seed, workers)?.to_pdf()
}

/// Largest absolute density change between `m` and `2m` trials.
pub fn coefficient_pdf_convergence(c: usize, m: usize, bin_count: usize, seed: u64, workers: usize) -> Result<f64> {
    let a = coefficient_pdf_with(c, m, bin_count, seed, workers)?;
    let b = coefficient_pdf_with(c, 2 * m, bin_count, seed ^ 0x9e37_79b9_7f4a_7c15, workers)?;
    Ok(a.density().iter().zip(b.density()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Recovers mixing weights by least squares of the whitened mixture on the
/// whitened sources, then renormalises to unit energy. Weights come back
/// sign-folded since the model only admits positive coefficients.
pub fn estimate_dataset_coefficients<T: Scalar>(sources: &[Signal<T>], mixture: &Signal<T>) -> Result<CoefficientSample> {
    if sources.is_empty() {
        return Err(Error::InvalidParameter("no sources".into()));
    }
    let len = mixture.len();
    if let Some(s) = sources.iter().find(|s| s.len() != len) {
        return Err(Error::LengthMismatch(s.len(), len));
    }
    let c = sources.len();
    let cols: Vec<Vec<T>> = sources.iter().map(|s| whiten_samples(s.samples())).collect::<Result<_>>()?;
    let m = whiten_samples(mixture.samples())?;
    let design = DMatrix::from_fn(len, c, |t, i| cols[i][t].as_f64());
    let target = DVector::from_iterator(len, m.iter().map(|x| x.as_f64()));
    let gram = design.transpose() * &design;
    let sv = gram.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let rhs = design.transpose() * target;
    let sol = gram
        .cholesky()
        .ok_or(Error::IllConditioned(cond))?
        .solve(&rhs);
    let mut a: Vec<f64> = sol.iter().map(|x| x.abs()).collect();
    if a.iter().all(|x| *x == 0.0) {
        return Err(Error::DegenerateSamples("mixture is orthogonal to every source".into()));
    }
    normalize_energy(&mut a);
    Ok(CoefficientSample { a })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceModel {
    /// i.i.d. unit-variance Laplace samples.
    IidLaplace,
    /// Laplace innovations through `x[t] = AR_POLE·x[t−1] + e[t]`.
    ArLaplace,
}

impl std::str::FromStr for SourceModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid-laplace" => Ok(Self::IidLaplace),
            "ar-laplace" => Ok(Self::ArLaplace),
            other => Err(Error::InvalidParameter(format!("unknown source model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub speakers: usize,
    pub duration_s: f64,
    pub sample_rate: f64,
    pub source_model: SourceModel,
}

/// Unit-variance sources, their weights and the whitened mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMixture<T> {
    pub sources: Vec<Signal<T>>,
    pub coefficients: CoefficientSample,
    pub mixture: Signal<T>,
}

impl<T: Scalar> SyntheticMixture<T> {
    /// The coefficient-weighted sources `a_i·v_i` as they appear in the mixture.
    pub fn components(&self) -> Vec<Vec<f64>> {
        self.sources
            .iter()
            .zip(self.coefficients.values())
            .map(|(s, a)| s.samples().iter().map(|x| a * x.as_f64()).collect())
            .collect()
    }
}

pub fn synth_mixture<T: Scalar>(spec: MixtureSpec, seed: u64) -> Result<SyntheticMixture<T>> {
    synth_mixture_indexed(spec, seed, 0)
}

/// Mixture number `index` of the corpus keyed by `seed`.
pub fn synth_mixture_indexed<T: Scalar>(spec: MixtureSpec, seed: u64, index: u64) -> Result<SyntheticMixture<T>> {
    check_c(spec.speakers)?;
    let len = (spec.duration_s * spec.sample_rate).round();
    if !(len >= 2.0) {
        return Err(Error::InvalidParameter("mixture needs at least two samples".into()));
    }
    let len = len as usize;
    let mut rng = stream_rng(seed, Stage::Synthesis, index);
    let mut a = vec![0.0; spec.speakers];
    draw_coefficients(&mut rng, &mut a);
    let coefficients = CoefficientSample { a };

    let b = std::f64::consts::FRAC_1_SQRT_2;
    let mut sources = Vec::with_capacity(spec.speakers);
    for _ in 0..spec.speakers {
        let raw: Vec<f64> = match spec.source_model {
            SourceModel::IidLaplace => (0..len).map(|_| laplace(&mut rng, b)).collect(),
            SourceModel::ArLaplace => {
                let mut prev = 0.0;
                (0..len)
                    .map(|_| {
                        prev = AR_POLE * prev + laplace(&mut rng, b);
                        prev
                    })
                    .collect()
            }
        };
        let white: Vec<T> = whiten_samples(&raw)?.into_iter().map(T::of).collect();
        sources.push(Signal::new(white, spec.sample_rate)?);
    }
    let mut mix = vec![0.0f64; len];
    for (s, w) in sources.iter().zip(coefficients.values()) {
        for (m, x) in mix.iter_mut().zip(s.samples()) {
            *m += w * x.as_f64();
        }
    }
    let mixture = Signal::new(whiten_samples(&mix)?.into_iter().map(T::of).collect(), spec.sample_rate)?;
    Ok(SyntheticMixture { sources, coefficients, mixture })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{estimate_pdf, fit_laplace, fit_normal, kl_divergence, kl_to_laplace, kl_to_normal};
    use crate::metrics::{si_sdr, DEFAULT_DB_CAP};
    use crate::signal::segment;

    #[test]
    fn single_speaker_weight_is_one() {
        let s = sample_coefficients(1, 1000, 4).unwrap();
        assert!(s.iter().all(|x| x.values() == [1.0]));
        let pdf = coefficient_pdf(1, 1000, 20, 4).unwrap();
        assert!((pdf.density()[19] * pdf.width(19) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_is_conserved() {
        for c in 1..=16 {
            for s in sample_coefficients(c, 100_000, c as u64).unwrap() {
                assert!((s.energy() - 1.0).abs() < 1e-12);
                assert!(s.values().iter().all(|a| *a > 0.0));
            }
        }
    }

    #[test]
    fn two_speaker_mean_square() {
        let s = sample_coefficients(2, 1_000_000, 1).unwrap();
        let m = s.iter().map(|x| x.values()[0].powi(2)).sum::<f64>() / s.len() as f64;
        assert!((m - 0.5).abs() < 0.002, "{m}");
    }

    #[test]
    fn mean_coefficient_falls_with_c() {
        let means: Vec<f64> = [2, 3, 5, 10]
            .iter()
            .map(|&c| coefficient_pdf(c, 200_000, 100, 3).unwrap().mean())
            .collect();
        assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
    }

    #[test]
    fn worker_count_does_not_change_pdf() {
        let a = coefficient_pdf_with(3, 100_000, 50, 8, 1).unwrap();
        let b = coefficient_pdf_with(3, 100_000, 50, 8, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recovers_orthogonal_weights() {
        let s0 = Signal::<f64>::new(vec![1.0, -1.0, 1.0, -1.0], 8000.0).unwrap();
        let s1 = Signal::<f64>::new(vec![1.0, 1.0, -1.0, -1.0], 8000.0).unwrap();
        let m: Vec<f64> = s0.samples().iter().zip(s1.samples()).map(|(a, b)| 0.6 * a + 0.8 * b).collect();
        let a = estimate_dataset_coefficients(&[s0, s1], &Signal::new(m, 8000.0).unwrap()).unwrap();
        assert!((a.values()[0] - 0.6).abs() < 1e-12 && (a.values()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn recovers_synthetic_weights() {
        let spec = MixtureSpec { speakers: 3, duration_s: 0.5, sample_rate: 8000.0, source_model: SourceModel::IidLaplace };
        let mix = synth_mixture::<f64>(spec, 21).unwrap();
        let a = estimate_dataset_coefficients(&mix.sources, &mix.mixture).unwrap();
        for (x, y) in a.values().iter().zip(mix.coefficients.values()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicate_source_is_ill_conditioned() {
        let s0 = Signal::<f64>::new(vec![1.0, -2.0, 0.5, 3.0], 8000.0).unwrap();
        let m = s0.clone();
        let err = estimate_dataset_coefficients(&[s0.clone(), s0], &m).unwrap_err();
        assert!(matches!(err, Error::IllConditioned(_)));
    }

    #[test]
    fn synthetic_mixture_properties() {
        let spec = MixtureSpec { speakers: 2, duration_s: 4.0, sample_rate: 8000.0, source_model: SourceModel::IidLaplace };
        let mix = synth_mixture::<f64>(spec, 5).unwrap();
        assert!((mix.mixture.variance() - 1.0).abs() < 1e-6);
        assert_eq!(mix, synth_mixture::<f64>(spec, 5).unwrap());
        for src in &mix.sources {
            let view = segment(src, 20.0).unwrap();
            let pooled: Vec<f64> = view.reconstruct();
            let lp = fit_laplace(&pooled).unwrap();
            let np = fit_normal(&pooled).unwrap();
            let pdf = estimate_pdf(&pooled, 201, (-6.0, 6.0)).unwrap().pdf;
            assert!(kl_to_laplace(&pdf, lp) < kl_to_normal(&pdf, np));
        }

        let solo = MixtureSpec { speakers: 1, ..spec };
        let one = synth_mixture::<f64>(solo, 6).unwrap();
        assert_eq!(si_sdr(&one.sources[0], &one.mixture).unwrap(), DEFAULT_DB_CAP);
    }

    #[test]
    fn recovered_coefficients_follow_theory() {
        // Empirical first-coefficient PDF from recovered weights vs the Monte-Carlo law.
        let bins = 20;
        for c in [2usize, 3, 5, 10] {
            let spec = MixtureSpec { speakers: c, duration_s: 0.02, sample_rate: 8000.0, source_model: SourceModel::IidLaplace };
            let mut h = Histogram::new(0.0, 1.0, bins).unwrap();
            for i in 0..2000 {
                let mix = synth_mixture_indexed::<f64>(spec, 99, i).unwrap();
                h.add(estimate_dataset_coefficients(&mix.sources, &mix.mixture).unwrap().values()[0]);
            }
            let empirical = h.to_pdf().unwrap();
            let theory = coefficient_pdf(c, 1_000_000, bins, 7).unwrap();
            let kl = kl_divergence(&empirical, &theory).unwrap();
            assert!(kl < 0.05, "C={c}: {kl}");
        }
    }
}
