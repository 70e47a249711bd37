//! Gridded densities, zero-mean Laplace / normal fits and KL divergence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const Q_FLOOR: f64 = 1e-300;

/// Piecewise-constant density on strictly increasing bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pdf1D {
    edges: Vec<f64>,
    density: Vec<f64>,
}

impl Pdf1D {
    /// Builds a density, renormalising so the total mass is exactly one.
    pub fn new(edges: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || density.len() + 1 != edges.len() {
            return Err(Error::InvalidParameter(format!(
                "{} edges cannot carry {} bins",
                edges.len(),
                density.len()
            )));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("bin edges must be strictly increasing".into()));
        }
        if density.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::InvalidParameter("density must be finite and nonnegative".into()));
        }
        let mut pdf = Self { edges, density };
        let total = pdf.total_mass();
        if !(total > 0.0) {
            return Err(Error::DegenerateSamples("density carries no mass".into()));
        }
        pdf.density.iter_mut().for_each(|d| *d /= total);
        Ok(pdf)
    }

    /// Rebuilds a stored density exactly, without renormalising. The mass
    /// must already be one to within 1e-6.
    pub fn from_stored(edges: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        let check = Self::new(edges.clone(), density.clone())?;
        let total = Self { edges: edges.clone(), density: density.clone() }.total_mass();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("stored density has mass {total}")));
        }
        drop(check);
        Ok(Self { edges, density })
    }

    /// Density from per-bin probability masses.
    pub fn from_masses(edges: Vec<f64>, masses: &[f64]) -> Result<Self> {
        if masses.len() + 1 != edges.len() {
            return Err(Error::InvalidParameter("mass/edge count mismatch".into()));
        }
        let density = masses.iter().zip(edges.windows(2)).map(|(m, w)| m / (w[1] - w[0])).collect();
        Self::new(edges, density)
    }

    /// Bin-averaged discretisation of an analytic CDF.
    pub fn from_cdf(edges: Vec<f64>, cdf: impl Fn(f64) -> f64) -> Result<Self> {
        let masses: Vec<f64> = edges.windows(2).map(|w| (cdf(w[1]) - cdf(w[0])).max(0.0)).collect();
        Self::from_masses(edges, &masses)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn bins(&self) -> usize {
        self.density.len()
    }

    pub fn width(&self, k: usize) -> f64 {
        self.edges[k + 1] - self.edges[k]
    }

    pub fn center(&self, k: usize) -> f64 {
        0.5 * (self.edges[k] + self.edges[k + 1])
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins()).map(|k| self.center(k)).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        (0..self.bins()).map(|k| self.density[k] * self.width(k)).collect()
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.bins()).map(|k| self.density[k] * self.width(k)).sum()
    }

    pub fn mean(&self) -> f64 {
        (0..self.bins()).map(|k| self.density[k] * self.width(k) * self.center(k)).sum()
    }

    /// Variance of the piecewise-uniform density (includes the within-bin term).
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        (0..self.bins())
            .map(|k| {
                let w = self.width(k);
                self.density[k] * w * ((self.center(k) - mu).powi(2) + w * w / 12.0)
            })
            .sum()
    }

    /// Differential entropy in nats.
    pub fn entropy(&self) -> f64 {
        -(0..self.bins())
            .filter(|&k| self.density[k] > 0.0)
            .map(|k| self.density[k] * self.width(k) * self.density[k].ln())
            .sum::<f64>()
    }

    /// Density at `x` (zero outside the support).
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.edges[0] || x >= self.edges[self.bins()] {
            return 0.0;
        }
        let k = self.edges.partition_point(|&e| e <= x) - 1;
        self.density[k.min(self.bins() - 1)]
    }

    /// Cumulative distribution, exact for the piecewise-constant density.
    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.bins();
        if x <= self.edges[0] {
            return 0.0;
        }
        if x >= self.edges[n] {
            return 1.0;
        }
        let k = self.edges.partition_point(|&e| e <= x) - 1;
        let below: f64 = (0..k).map(|j| self.density[j] * self.width(j)).sum();
        below + self.density[k] * (x - self.edges[k])
    }

    /// Same shape stretched by `factor > 0` about the origin.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            edges: self.edges.iter().map(|e| e * factor).collect(),
            density: self.density.iter().map(|d| d / factor).collect(),
        }
    }

    pub fn same_grid(&self, other: &Pdf1D) -> bool {
        self.edges.len() == other.edges.len()
            && self.edges.iter().zip(&other.edges).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    }
}

pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let step = (hi - lo) / bins as f64;
    (0..=bins).map(|i| if i == bins { hi } else { lo + step * i as f64 }).collect()
}

/// Fixed-range counting histogram. Samples outside the range are clipped
/// into the edge bins and tallied separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    lo: f64,
    hi: f64,
    counts: Vec<u64>,
    clipped: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins < 1 || !(hi > lo) {
            return Err(Error::InvalidParameter(format!("bad histogram range [{lo}, {hi}] / {bins} bins")));
        }
        Ok(Self { lo, hi, counts: vec![0; bins], clipped: 0 })
    }

    #[inline]
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let n = self.counts.len();
        let pos = (x - self.lo) / (self.hi - self.lo) * n as f64;
        if pos >= 0.0 && pos < n as f64 {
            Some(pos as usize)
        } else if x == self.hi {
            // closed upper edge
            Some(n - 1)
        } else {
            None
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        match self.bin_of(x) {
            Some(k) => self.counts[k] += 1,
            None => {
                let k = if x < self.lo { 0 } else { self.counts.len() - 1 };
                self.counts[k] += 1;
                self.clipped += 1;
            }
        }
    }

    /// Adds the counts of `other`; integer counts make merging exact in any order.
    pub fn merge(&mut self, other: &Histogram) {
        debug_assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.clipped += other.clipped;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn clipped(&self) -> u64 {
        self.clipped
    }

    pub fn edges(&self) -> Vec<f64> {
        uniform_edges(self.lo, self.hi, self.counts.len())
    }

    pub fn to_pdf(&self) -> Result<Pdf1D> {
        let masses: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        Pdf1D::from_masses(self.edges(), &masses)
    }
}

/// Empirical density together with how much of the input fell off the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdfEstimate {
    pub pdf: Pdf1D,
    pub samples: u64,
    pub clipped: u64,
    /// Set when fewer than 99% of samples fell inside the range.
    pub coverage_warning: bool,
}

pub fn estimate_pdf<T: Scalar>(samples: &[T], bin_count: usize, range: (f64, f64)) -> Result<PdfEstimate> {
    if bin_count < 2 {
        return Err(Error::InvalidParameter("bin_count must be at least 2".into()));
    }
    if samples.is_empty() {
        return Err(Error::DegenerateSamples("no samples".into()));
    }
    let mut h = Histogram::new(range.0, range.1, bin_count)?;
    samples.iter().for_each(|x| h.add(x.as_f64()));
    finish_estimate(&h)
}

pub(crate) fn finish_estimate(h: &Histogram) -> Result<PdfEstimate> {
    let total = h.total();
    let clipped = h.clipped();
    let coverage_warning = clipped as f64 > 0.01 * total as f64;
    if coverage_warning {
        log::warn!("histogram range covers only {:.2}% of samples", 100.0 * (1.0 - clipped as f64 / total as f64));
    }
    Ok(PdfEstimate { pdf: h.to_pdf()?, samples: total, clipped, coverage_warning })
}

/// Zero-mean Laplace law `exp(-|x|/b) / 2b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceParams<T> {
    pub scale: T,
}

/// Zero-mean normal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams<T> {
    pub sigma: T,
}

impl<T: Scalar> LaplaceParams<T> {
    pub fn new(scale: T) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(Error::InvalidParameter("Laplace scale must be positive".into()));
        }
        Ok(Self { scale })
    }

    /// Scale giving unit variance (`2b² = 1`).
    pub fn unit_variance() -> Self {
        Self { scale: T::of(std::f64::consts::FRAC_1_SQRT_2) }
    }

    pub fn variance(&self) -> T {
        T::of(2.0) * self.scale * self.scale
    }

    pub fn pdf(&self, x: T) -> T {
        eval_laplace(x, *self)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let b = self.scale.as_f64();
        if x < 0.0 {
            0.5 * (x / b).exp()
        } else {
            1.0 - 0.5 * (-x / b).exp()
        }
    }
}

impl<T: Scalar> NormalParams<T> {
    pub fn new(sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) {
            return Err(Error::InvalidParameter("normal sigma must be positive".into()));
        }
        Ok(Self { sigma })
    }

    pub fn pdf(&self, x: T) -> T {
        eval_normal(x, *self)
    }
}

pub fn eval_laplace<T: Scalar>(x: T, p: LaplaceParams<T>) -> T {
    (-(x / p.scale).abs()).exp() / (T::of(2.0) * p.scale)
}

pub fn eval_normal<T: Scalar>(x: T, p: NormalParams<T>) -> T {
    let z = x / p.sigma;
    (-(z * z) / T::of(2.0)).exp() / (p.sigma * T::of((2.0 * std::f64::consts::PI).sqrt()))
}

/// Maximum-likelihood Laplace scale with the location pinned at zero.
pub fn fit_laplace<T: Scalar>(samples: &[T]) -> Result<LaplaceParams<T>> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSamples("need at least two samples".into()));
    }
    let b = samples.iter().map(|x| x.as_f64().abs()).sum::<f64>() / samples.len() as f64;
    if b == 0.0 {
        return Err(Error::DegenerateSamples("mean absolute value is zero".into()));
    }
    Ok(LaplaceParams { scale: T::of(b) })
}

/// Exploratory variant: location at the sample median, scale = mean |x − median|.
pub fn fit_laplace_median<T: Scalar>(samples: &[T]) -> Result<(T, LaplaceParams<T>)> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSamples("need at least two samples".into()));
    }
    let mut sorted: Vec<f64> = samples.iter().map(|x| x.as_f64()).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let med = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    let b = sorted.iter().map(|x| (x - med).abs()).sum::<f64>() / n as f64;
    if b == 0.0 {
        return Err(Error::DegenerateSamples("all samples equal the median".into()));
    }
    Ok((T::of(med), LaplaceParams { scale: T::of(b) }))
}

/// Maximum-likelihood normal sigma with the mean pinned at zero.
pub fn fit_normal<T: Scalar>(samples: &[T]) -> Result<NormalParams<T>> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSamples("need at least two samples".into()));
    }
    let ms = samples.iter().map(|x| x.as_f64().powi(2)).sum::<f64>() / samples.len() as f64;
    if ms == 0.0 {
        return Err(Error::DegenerateSamples("all samples are zero".into()));
    }
    Ok(NormalParams { sigma: T::of(ms.sqrt()) })
}

/// `Σ p_k Δ_k ln(p_k / q_k)` over bins with `p_k > 0`; both densities must share a grid.
pub fn kl_divergence(p: &Pdf1D, q: &Pdf1D) -> Result<f64> {
    if !p.same_grid(q) {
        return Err(Error::GridMismatch);
    }
    Ok(kl_against(p, |k| q.density[k]))
}

/// KL from a gridded density to an analytic one, evaluated at bin midpoints.
pub fn kl_to_density(p: &Pdf1D, q: impl Fn(f64) -> f64) -> f64 {
    kl_against(p, |k| q(p.center(k)))
}

fn kl_against(p: &Pdf1D, q: impl Fn(usize) -> f64) -> f64 {
    (0..p.bins())
        .filter(|&k| p.density[k] > 0.0)
        .map(|k| {
            let pk = p.density[k];
            pk * p.width(k) * (pk / q(k).max(Q_FLOOR)).ln()
        })
        .sum()
}

pub fn kl_to_laplace(p: &Pdf1D, params: LaplaceParams<f64>) -> f64 {
    kl_to_density(p, |x| eval_laplace(x, params))
}

pub fn kl_to_normal(p: &Pdf1D, params: NormalParams<f64>) -> f64 {
    kl_to_density(p, |x| eval_normal(x, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{laplace, open01, std_normal, stream_rng, Stage};
    use proptest::prelude::*;

    #[test]
    fn density_spot_values() {
        let one = LaplaceParams::new(1.0f64).unwrap();
        assert_eq!(eval_laplace(0.0, one), 0.5);
        assert!((eval_laplace(1.0, one) - 0.183_939_720_585_721_2).abs() < 1e-15);
        let n = NormalParams::new(1.0f64).unwrap();
        assert!((eval_normal(0.0, n) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn trivial_fits() {
        assert_eq!(fit_laplace(&[-1.0, 1.0]).unwrap().scale, 1.0);
        assert_eq!(fit_normal(&[-2.0, 2.0]).unwrap().sigma, 2.0);
        assert!(matches!(fit_laplace(&[0.0f64; 5]), Err(Error::DegenerateSamples(_))));
        assert!(matches!(fit_normal(&[0.0f32; 5]), Err(Error::DegenerateSamples(_))));
        let (loc, p) = fit_laplace_median(&[1.0f64, 2.0, 3.0]).unwrap();
        assert_eq!(loc, 2.0);
        assert!((p.scale - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fits_recover_generator() {
        let mut rng = stream_rng(11, Stage::Corpus, 0);
        let lap: Vec<f64> = (0..1_000_000).map(|_| laplace(&mut rng, 1.0)).collect();
        let b = fit_laplace(&lap).unwrap().scale;
        assert!((0.99..=1.01).contains(&b), "{b}");
        let nor: Vec<f64> = (0..1_000_000).map(|_| std_normal(&mut rng)).collect();
        let s = fit_normal(&nor).unwrap().sigma;
        assert!((0.99..=1.01).contains(&s), "{s}");
    }

    #[test]
    fn uniform_histogram_is_flat() {
        let mut rng = stream_rng(5, Stage::Corpus, 1);
        let xs: Vec<f64> = (0..1_000_000).map(|_| open01(&mut rng)).collect();
        let est = estimate_pdf(&xs, 10, (0.0, 1.0)).unwrap();
        assert!(est.pdf.density().iter().all(|d| (d - 1.0).abs() < 0.02));
        assert!(!est.coverage_warning);
    }

    #[test]
    fn repeated_value_fills_one_bin() {
        let est = estimate_pdf(&[0.3f64; 50], 4, (0.0, 1.0)).unwrap();
        let nonzero: Vec<_> = est.pdf.density().iter().filter(|d| **d > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!((est.pdf.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn narrow_range_is_flagged() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let est = estimate_pdf(&xs, 4, (0.0, 50.0)).unwrap();
        assert!(est.coverage_warning);
        // 50.0 sits on the closed upper edge and is kept.
        assert_eq!(est.clipped, 49);
    }

    #[test]
    fn laplace_kl_closed_form() {
        let edges = uniform_edges(-20.0, 20.0, 8000);
        let p1 = LaplaceParams::new(1.0).unwrap();
        let p = Pdf1D::from_cdf(edges, |x| p1.cdf(x)).unwrap();
        let got = kl_to_laplace(&p, LaplaceParams::new(2.0).unwrap());
        let want = 2f64.ln() + 0.5 - 1.0;
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn grid_mismatch() {
        let a = Pdf1D::new(uniform_edges(0.0, 1.0, 4), vec![1.0; 4]).unwrap();
        let b = Pdf1D::new(uniform_edges(0.0, 2.0, 4), vec![1.0; 4]).unwrap();
        assert!(matches!(kl_divergence(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn laplace_samples_prefer_laplace_fit() {
        for seed in 0..20 {
            let mut rng = stream_rng(seed, Stage::Corpus, 2);
            let xs: Vec<f64> = (0..100_000).map(|_| laplace(&mut rng, 0.7)).collect();
            let lp = fit_laplace(&xs).unwrap();
            let np = fit_normal(&xs).unwrap();
            let sd = np.sigma;
            let pdf = estimate_pdf(&xs, 201, (-6.0 * sd, 6.0 * sd)).unwrap().pdf;
            assert!(kl_to_laplace(&pdf, lp) < kl_to_normal(&pdf, np), "seed {seed}");
        }
    }

    proptest! {
        #[test]
        fn estimate_integrates_to_one(xs in prop::collection::vec(-10.0f64..10.0, 1..300), bins in 2usize..64) {
            let est = estimate_pdf(&xs, bins, (-5.0, 5.0)).unwrap();
            prop_assert!((est.pdf.total_mass() - 1.0).abs() < 1e-6);
            prop_assert!(est.pdf.density().iter().all(|d| *d >= 0.0));
        }

        #[test]
        fn kl_is_nonnegative(a in prop::collection::vec(0.0f64..1.0, 8), b in prop::collection::vec(0.01f64..1.0, 8)) {
            prop_assume!(a.iter().sum::<f64>() > 1e-3);
            let edges = uniform_edges(-1.0, 1.0, 8);
            let p = Pdf1D::new(edges.clone(), a).unwrap();
            let q = Pdf1D::new(edges, b).unwrap();
            prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-9);
        }

        #[test]
        fn laplace_fit_scale_equivariant(xs in prop::collection::vec(-10.0f64..10.0, 2..100), c in 1e-3f64..1e3) {
            prop_assume!(xs.iter().any(|x| *x != 0.0));
            let b = fit_laplace(&xs).unwrap().scale;
            let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
            let bc = fit_laplace(&scaled).unwrap().scale;
            prop_assert!((bc - c * b).abs() <= 1e-12 * bc);
        }

        #[test]
        fn histogram_merge_order_free(xs in prop::collection::vec(-3.0f64..3.0, 0..400), split in 0usize..400) {
            let split = split.min(xs.len());
            let mut whole = Histogram::new(-2.0, 2.0, 16).unwrap();
            xs.iter().for_each(|x| whole.add(*x));
            let mut a = Histogram::new(-2.0, 2.0, 16).unwrap();
            let mut b = a.clone();
            xs[..split].iter().for_each(|x| a.add(*x));
            xs[split..].iter().for_each(|x| b.add(*x));
            let mut ba = b.clone();
            ba.merge(&a);
            a.merge(&b);
            prop_assert_eq!(&a, &whole);
            prop_assert_eq!(&ba, &whole);
        }
    }
}
