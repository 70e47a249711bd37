use serde::{Deserialize, Serialize};

use super::{mixture_histogram, GridSpec, UniformGrid};
use crate::distributions::{LaplaceParams, Pdf1D};
use crate::error::{Error, Result};
use crate::rng::Stage;

/// Unit-energy law of the `(C−1)`-speaker remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SliceShape {
    /// One remaining speaker: the analytic unit-variance Laplace.
    Laplace,
    /// Monte-Carlo density of an energy-conserving `(C−1)`-speaker mixture.
    Empirical(Pdf1D),
}

/// Conditional density of the remainder for each target-weight bin.
///
/// Slice `k` is the unit-energy shape stretched by `sqrt(1 − a0_k²)` where
/// `a0_k` is the bin centre. The `a0·v0` shift is applied by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPdfTable {
    pub c: usize,
    pub a0: UniformGrid,
    pub shape: SliceShape,
    scales: Vec<f64>,
    #[serde(skip)]
    cum: Vec<f64>,
}

impl ConditionalPdfTable {
    pub(crate) fn new(c: usize, a0: UniformGrid, shape: SliceShape) -> Self {
        let scales = (0..a0.bins).map(|k| (1.0 - a0.center(k).powi(2)).sqrt()).collect();
        let mut t = Self { c, a0, shape, scales, cum: Vec::new() };
        t.rebuild_cdf();
        t
    }

    fn rebuild_cdf(&mut self) {
        self.cum = match &self.shape {
            SliceShape::Laplace => Vec::new(),
            SliceShape::Empirical(pdf) => {
                let mut acc = 0.0;
                std::iter::once(0.0)
                    .chain(pdf.masses().into_iter().map(|m| {
                        acc += m;
                        acc
                    }))
                    .collect()
            }
        };
    }

    pub fn slices(&self) -> usize {
        self.scales.len()
    }

    /// Standard deviation of slice `k`.
    pub fn scale(&self, k: usize) -> f64 {
        self.scales[k]
    }

    /// CDF of slice `k` at `x`.
    #[inline]
    pub fn slice_cdf(&self, k: usize, x: f64) -> f64 {
        let z = x / self.scales[k];
        match &self.shape {
            SliceShape::Laplace => LaplaceParams::<f64>::unit_variance().cdf(z),
            SliceShape::Empirical(pdf) => {
                let edges = pdf.edges();
                let n = pdf.bins();
                let (lo, hi) = (edges[0], edges[n]);
                if z <= lo {
                    return 0.0;
                }
                if z >= hi {
                    return self.cum[n];
                }
                // Base grid is uniform.
                let w = (hi - lo) / n as f64;
                let j = (((z - lo) / w) as usize).min(n - 1);
                self.cum[j] + pdf.density()[j] * (z - edges[j])
            }
        }
    }

    /// Slice `k` as a gridded density.
    pub fn slice(&self, k: usize) -> Pdf1D {
        let s = self.scales[k];
        match &self.shape {
            SliceShape::Empirical(pdf) => pdf.scaled(s),
            SliceShape::Laplace => {
                let unit = LaplaceParams::<f64>::unit_variance();
                let edges = crate::distributions::uniform_edges(-8.0 * s, 8.0 * s, 512);
                Pdf1D::from_cdf(edges, |x| unit.cdf(x / s)).expect("Laplace slice has mass")
            }
        }
    }

    /// Flat `f64` payload: scales followed by the base density (empty for Laplace).
    pub fn payload(&self) -> Vec<f64> {
        let mut out = self.scales.clone();
        if let SliceShape::Empirical(pdf) = &self.shape {
            out.extend_from_slice(pdf.density());
        }
        out
    }

    pub fn from_payload(c: usize, grid: &GridSpec, payload: &[f64]) -> Result<Self> {
        let k = grid.a0.bins;
        let shape = if c == 2 {
            if payload.len() != k {
                return Err(Error::Corrupt("payload length does not match the grid".into()));
            }
            SliceShape::Laplace
        } else {
            if payload.len() != k + grid.m.bins {
                return Err(Error::Corrupt("payload length does not match the grid".into()));
            }
            SliceShape::Empirical(Pdf1D::from_stored(grid.m.edges(), payload[k..].to_vec())?)
        };
        let mut t = Self { c, a0: grid.a0, shape, scales: payload[..k].to_vec(), cum: Vec::new() };
        t.rebuild_cdf();
        Ok(t)
    }
}

/// Builds the remainder densities for `c ≥ 2` speakers.
pub fn conditional_pdf_table(c: usize, trials: usize, grid: &GridSpec, seed: u64, workers: usize) -> Result<ConditionalPdfTable> {
    if c < 2 {
        return Err(Error::UnsupportedC(c));
    }
    let shape = if c == 2 {
        SliceShape::Laplace
    } else {
        let h = mixture_histogram(c - 1, trials, &grid.m, seed, Stage::ConditionalTable, workers)?;
        SliceShape::Empirical(h.to_pdf()?)
    };
    Ok(ConditionalPdfTable::new(c, grid.a0, shape))
}
