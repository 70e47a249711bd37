//! Numerical evaluation of the segment mutual information `I(m_r; v_{0,r})`
//! and the SDR upper bound built from it.
//!
//! The mixture sample is `m = Σ a_i v_i` with unit-variance Laplace sources
//! and energy-conserving weights. Given the target sample `v0` and its
//! weight `a0`, the remainder is a `(C−1)`-speaker mixture carrying energy
//! `1 − a0²`, so every conditional density is a rescaled copy of one
//! unit-energy `(C−1)`-speaker density shifted by `a0·v0`.

mod binned;
mod table;

pub use binned::{binned_entropy, binned_mi, SPAN_SIGMAS};
pub use table::{conditional_pdf_table, ConditionalPdfTable, SliceShape};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{uniform_edges, Histogram, LaplaceParams, Pdf1D};
use crate::error::{Error, Result};
use crate::mixture::{coefficient_pdf_with, draw_coefficients, DEFAULT_TRIALS};
use crate::rng::{laplace, run_chunks, with_workers, Stage};
use crate::signal::{window_samples, DEFAULT_SAMPLE_RATE};

/// Largest probability mass allowed to fall outside the mixture grid.
pub const MAX_OUTSIDE_MASS: f64 = 0.005;

/// Evenly spaced bins on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl UniformGrid {
    pub const fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self { lo, hi, bins }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        uniform_edges(self.lo, self.hi, self.bins)
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.bins < 2 || !(self.hi > self.lo) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidParameter(format!("{what} grid must have ≥ 2 bins on a finite increasing range")));
        }
        Ok(())
    }
}

/// Integration grids for the mixture value, the target sample and the target weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m: UniformGrid,
    pub v0: UniformGrid,
    pub a0: UniformGrid,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            m: UniformGrid::new(-8.0, 8.0, 512),
            v0: UniformGrid::new(-8.0, 8.0, 256),
            a0: UniformGrid::new(0.0, 1.0, 64),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        self.m.validate("mixture")?;
        self.v0.validate("target")?;
        self.a0.validate("coefficient")?;
        if self.m.lo > -8.0 || self.m.hi < 8.0 {
            return Err(Error::InvalidParameter("mixture grid must cover at least [-8, 8]".into()));
        }
        if self.a0.lo != 0.0 || self.a0.hi != 1.0 {
            return Err(Error::InvalidParameter("coefficient grid must span (0, 1]".into()));
        }
        Ok(())
    }

    /// Every bin count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let scale = |g: UniformGrid| UniformGrid { bins: g.bins * factor, ..g };
        Self { m: scale(self.m), v0: scale(self.v0), a0: scale(self.a0) }
    }
}

/// Which decomposition of the segment information is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiForm {
    /// `h(m) − h(m | v0)`, the target weight marginalised inside the conditional.
    Marginal,
    /// `h(m) − h(m | v0, a0)`: the integrand conditioned on the target weight.
    Joint,
    /// The joint integrand with `log f(a0)` also inside the logarithm.
    Literal,
}

impl std::str::FromStr for MiForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marginal" => Ok(Self::Marginal),
            "joint" => Ok(Self::Joint),
            "literal" => Ok(Self::Literal),
            other => Err(Error::InvalidParameter(format!("unknown MI form {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiUnit {
    Nats,
    Bits,
}

impl MiUnit {
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            MiUnit::Nats => nats,
            MiUnit::Bits => nats / std::f64::consts::LN_2,
        }
    }
}

impl std::str::FromStr for MiUnit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nats" => Ok(Self::Nats),
            "bits" => Ok(Self::Bits),
            other => Err(Error::InvalidParameter(format!("unknown unit {other:?}"))),
        }
    }
}

/// What `Var(v0)` means in the bound, in whitened units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetVariance {
    /// The target source itself: unit variance.
    UnitSource,
    /// The weighted target `a0·v0` averaged over `a0`: `E[a0²] = 1/C`.
    WeightedTarget,
}

impl TargetVariance {
    pub fn value(self, c: usize) -> f64 {
        match self {
            TargetVariance::UnitSource => 1.0,
            TargetVariance::WeightedTarget => 1.0 / c as f64,
        }
    }
}

impl std::str::FromStr for TargetVariance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit-source" => Ok(Self::UnitSource),
            "weighted-target" => Ok(Self::WeightedTarget),
            other => Err(Error::InvalidParameter(format!("unknown variance convention {other:?}"))),
        }
    }
}

/// Everything the bound pipeline needs besides the speaker count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub trials: usize,
    pub grid: GridSpec,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
    pub form: MiForm,
    pub unit: MiUnit,
    pub variance: TargetVariance,
    pub signal_s: f64,
    pub window_s: f64,
    pub sample_rate: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            grid: GridSpec::default(),
            seed: 0,
            workers: 0,
            form: MiForm::Joint,
            unit: MiUnit::Nats,
            variance: TargetVariance::UnitSource,
            signal_s: 4.0,
            window_s: 0.020,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

/// Monte-Carlo mixture density and the share of draws that left the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixturePdf {
    pub pdf: Pdf1D,
    pub outside_fraction: f64,
}

/// Histogram of one mixture sample `Σ a_i v_i` over `trials` draws.
pub(crate) fn mixture_histogram(
    c: usize,
    trials: usize,
    grid: &UniformGrid,
    seed: u64,
    stage: Stage,
    workers: usize,
) -> Result<Histogram> {
    if c == 0 || trials == 0 {
        return Err(Error::InvalidParameter("need C ≥ 1 and at least one trial".into()));
    }
    let empty = Histogram::new(grid.lo, grid.hi, grid.bins)?;
    let b = LaplaceParams::<f64>::unit_variance().scale;
    let parts = run_chunks(seed, stage, trials, workers, |rng, n| {
        let mut h = empty.clone();
        let mut a = vec![0.0; c];
        for _ in 0..n {
            draw_coefficients(rng, &mut a);
            let m: f64 = a.iter().map(|w| w * laplace(rng, b)).sum();
            h.add(m);
        }
        h
    });
    let mut h = empty;
    parts.iter().for_each(|p| h.merge(p));
    Ok(h)
}

/// Marginal density of one mixture sample.
pub fn mixture_pdf(c: usize, trials: usize, grid: &UniformGrid, seed: u64, workers: usize) -> Result<MixturePdf> {
    let h = mixture_histogram(c, trials, grid, seed, Stage::MixturePdf, workers)?;
    let outside_fraction = h.clipped() as f64 / h.total() as f64;
    if outside_fraction > MAX_OUTSIDE_MASS {
        return Err(Error::GridUnderflow { fraction: outside_fraction });
    }
    Ok(MixturePdf { pdf: h.to_pdf()?, outside_fraction })
}

/// All intermediate entropies of one evaluation, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiBreakdown {
    pub h_mixture: f64,
    pub h_given_target: f64,
    pub h_given_target_and_weight: f64,
    pub mean_log_weight_density: f64,
    /// Conditional mass lost off the mixture grid, averaged over (v0, a0).
    pub lost_mass: f64,
}

impl MiBreakdown {
    pub fn mi_nats(&self, form: MiForm) -> f64 {
        match form {
            MiForm::Marginal => self.h_mixture - self.h_given_target,
            MiForm::Joint => self.h_mixture - self.h_given_target_and_weight,
            MiForm::Literal => self.h_mixture - self.h_given_target_and_weight + self.mean_log_weight_density,
        }
    }
}

/// `−Σ P_j ln(P_j / Δ)`: differential entropy of gridded masses.
fn gridded_entropy(masses: &[f64], width: f64) -> f64 {
    -masses.iter().filter(|&&p| p > 0.0).map(|&p| p * (p / width).ln()).sum::<f64>()
}

/// Evaluates every entropy term of the segment information for `c` speakers.
pub fn mi_breakdown(c: usize, cfg: &BoundConfig) -> Result<MiBreakdown> {
    if c < 2 {
        return Err(Error::UnsupportedC(c));
    }
    cfg.grid.validate()?;
    let table = conditional_pdf_table(c, cfg.trials, &cfg.grid, cfg.seed, cfg.workers)?;
    mi_breakdown_with_table(c, cfg, &table)
}

/// [`mi_breakdown`] with a prebuilt (for example cached) conditional table.
pub fn mi_breakdown_with_table(c: usize, cfg: &BoundConfig, table: &ConditionalPdfTable) -> Result<MiBreakdown> {
    if c < 2 {
        return Err(Error::UnsupportedC(c));
    }
    cfg.grid.validate()?;
    let grid = cfg.grid;
    if table.c != c || table.a0 != grid.a0 {
        return Err(Error::InvalidParameter("conditional table does not match C or the coefficient grid".into()));
    }
    let mix = mixture_pdf(c, cfg.trials, &grid.m, cfg.seed, cfg.workers)?;
    let h_mixture = mix.pdf.entropy();

    let weight_pdf = coefficient_pdf_with(c, cfg.trials, grid.a0.bins, cfg.seed, cfg.workers)?;
    let weight_mass = weight_pdf.masses();
    let mean_log_weight_density = weight_mass
        .iter()
        .zip(weight_pdf.density())
        .filter(|(q, _)| **q > 0.0)
        .map(|(q, d)| q * d.ln())
        .sum::<f64>();

    let unit = LaplaceParams::<f64>::unit_variance();
    let v0_pdf = Pdf1D::from_cdf(grid.v0.edges(), |x| unit.cdf(x))?;
    let v0_mass = v0_pdf.masses();
    let m_edges = grid.m.edges();
    let dm = grid.m.width();

    // Per target bin: (joint conditional entropy, marginal conditional entropy, lost mass).
    let per_target: Vec<(f64, f64, f64)> = with_workers(cfg.workers, || {
        (0..grid.v0.bins)
            .into_par_iter()
            .map(|iv| {
                let v = grid.v0.center(iv);
                let mut joint = 0.0;
                let mut lost = 0.0;
                let mut marginal = vec![0.0; grid.m.bins];
                let mut cdf = vec![0.0; m_edges.len()];
                let mut p = vec![0.0; grid.m.bins];
                for (ia, &q) in weight_mass.iter().enumerate() {
                    if q <= 0.0 {
                        continue;
                    }
                    let shift = grid.a0.center(ia) * v;
                    for (f, e) in cdf.iter_mut().zip(&m_edges) {
                        *f = table.slice_cdf(ia, e - shift);
                    }
                    let mut total = 0.0;
                    for (j, pj) in p.iter_mut().enumerate() {
                        *pj = (cdf[j + 1] - cdf[j]).max(0.0);
                        total += *pj;
                    }
                    lost += q * (1.0 - total).max(0.0);
                    if total <= 0.0 {
                        continue;
                    }
                    p.iter_mut().for_each(|x| *x /= total);
                    joint += q * gridded_entropy(&p, dm);
                    marginal.iter_mut().zip(&p).for_each(|(acc, x)| *acc += q * x);
                }
                (joint, gridded_entropy(&marginal, dm), lost)
            })
            .collect()
    });

    let mut h_given_target_and_weight = 0.0;
    let mut h_given_target = 0.0;
    let mut lost_mass = 0.0;
    for (w, (joint, marg, lost)) in v0_mass.iter().zip(&per_target) {
        h_given_target_and_weight += w * joint;
        h_given_target += w * marg;
        lost_mass += w * lost;
    }
    if lost_mass > MAX_OUTSIDE_MASS {
        return Err(Error::GridUnderflow { fraction: lost_mass });
    }
    Ok(MiBreakdown { h_mixture, h_given_target, h_given_target_and_weight, mean_log_weight_density, lost_mass })
}

/// `I(m_r; v_{0,r})` in nats under the configured form.
pub fn mutual_information_segment(c: usize, cfg: &BoundConfig) -> Result<f64> {
    Ok(mi_breakdown(c, cfg)?.mi_nats(cfg.form))
}

/// One point of the bound curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub c: usize,
    /// Segment information in `mi_unit`.
    pub mi: f64,
    pub mi_unit: MiUnit,
    pub var_v0: f64,
    /// Number of jointly estimated segments.
    pub l_over_w: usize,
    pub sdr_bound_db: f64,
}

impl BoundResult {
    pub fn recompute_db(&self) -> f64 {
        bound_db(self.l_over_w, self.var_v0, self.mi)
    }
}

fn bound_db(l_over_w: usize, var_v0: f64, mi: f64) -> f64 {
    10.0 * (l_over_w as f64 * var_v0 * mi).log10()
}

/// `10·log10(L/w · Var(v0) · I)`, with `L/w` the number of whole windows.
pub fn sdr_upper_bound(
    c: usize,
    signal_s: f64,
    window_s: f64,
    sample_rate: f64,
    mi: f64,
    mi_unit: MiUnit,
    var_v0: f64,
) -> Result<BoundResult> {
    if !(mi >= 0.0) {
        return Err(Error::InvalidParameter(format!("mutual information {mi} must be nonnegative")));
    }
    if !(window_s > 0.0 && signal_s >= window_s) {
        return Err(Error::InvalidParameter("need signal length ≥ window length > 0".into()));
    }
    if !(var_v0 > 0.0) {
        return Err(Error::InvalidParameter("target variance must be positive".into()));
    }
    let total = (signal_s * sample_rate).round() as usize;
    let w = window_samples(window_s * 1000.0, sample_rate)?;
    let l_over_w = total / w;
    Ok(BoundResult { c, mi, mi_unit, var_v0, l_over_w, sdr_bound_db: bound_db(l_over_w, var_v0, mi) })
}

/// Bound plus the entropy terms that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub result: BoundResult,
    pub form: MiForm,
    pub variance: TargetVariance,
    pub breakdown: MiBreakdown,
}

pub fn bound_point(c: usize, cfg: &BoundConfig) -> Result<BoundPoint> {
    point_from(c, cfg, mi_breakdown(c, cfg)?)
}

pub fn bound_point_with_table(c: usize, cfg: &BoundConfig, table: &ConditionalPdfTable) -> Result<BoundPoint> {
    point_from(c, cfg, mi_breakdown_with_table(c, cfg, table)?)
}

fn point_from(c: usize, cfg: &BoundConfig, breakdown: MiBreakdown) -> Result<BoundPoint> {
    let mi = cfg.unit.from_nats(breakdown.mi_nats(cfg.form).max(0.0));
    let result = sdr_upper_bound(c, cfg.signal_s, cfg.window_s, cfg.sample_rate, mi, cfg.unit, cfg.variance.value(c))?;
    Ok(BoundPoint { result, form: cfg.form, variance: cfg.variance, breakdown })
}

/// Bound for each speaker count, all with the same grids, trials and seed.
pub fn bound_curve(c_list: &[usize], cfg: &BoundConfig) -> Result<Vec<BoundPoint>> {
    c_list.iter().map(|&c| bound_point(c, cfg)).collect()
}

/// Relative MI change when trials and every grid are doubled.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RefinementCheck {
    pub mi_base: f64,
    pub mi_refined: f64,
    pub relative_change: f64,
}

pub fn refinement_check(c: usize, cfg: &BoundConfig) -> Result<RefinementCheck> {
    let mi_base = mutual_information_segment(c, cfg)?;
    let fine = BoundConfig { trials: cfg.trials * 2, grid: cfg.grid.refined(2), ..*cfg };
    let mi_refined = mutual_information_segment(c, &fine)?;
    Ok(RefinementCheck { mi_base, mi_refined, relative_change: (mi_refined - mi_base).abs() / mi_base.abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::kl_to_laplace;

    fn quick() -> BoundConfig {
        BoundConfig { trials: 200_000, grid: GridSpec::default(), seed: 3, ..Default::default() }
    }

    #[test]
    fn single_speaker_mixture_is_laplace() {
        let mix = mixture_pdf(1, 1_000_000, &UniformGrid::new(-8.0, 8.0, 512), 1, 0).unwrap();
        let kl = kl_to_laplace(&mix.pdf, LaplaceParams::unit_variance());
        assert!(kl < 1e-3, "{kl}");
    }

    #[test]
    fn mixture_variance_is_conserved() {
        for c in [2, 3, 5, 10] {
            let mix = mixture_pdf(c, 200_000, &UniformGrid::new(-8.0, 8.0, 512), 2, 0).unwrap();
            assert!((mix.pdf.variance() - 1.0).abs() < 0.02, "C={c}");
            assert!((mix.pdf.total_mass() - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn narrow_grid_underflows() {
        let err = mixture_pdf(2, 50_000, &UniformGrid::new(-1.0, 1.0, 64), 2, 0).unwrap_err();
        assert!(matches!(err, Error::GridUnderflow { .. }));
    }

    #[test]
    fn bound_formula() {
        let r = sdr_upper_bound(2, 4.0, 0.02, 8000.0, 1.0, MiUnit::Nats, 1.0).unwrap();
        assert_eq!(r.l_over_w, 200);
        assert!((r.sdr_bound_db - 23.010_299_956_639_81).abs() < 1e-12);
        assert_eq!(r.recompute_db(), r.sdr_bound_db);
        let r2 = sdr_upper_bound(2, 8.0, 0.02, 8000.0, 1.0, MiUnit::Nats, 1.0).unwrap();
        assert!((r2.sdr_bound_db - r.sdr_bound_db - 10.0 * 2f64.log10()).abs() < 1e-12);
        assert!(sdr_upper_bound(2, 4.0, 0.02, 8000.0, -0.1, MiUnit::Nats, 1.0).is_err());
        assert!(sdr_upper_bound(2, 0.01, 0.02, 8000.0, 0.1, MiUnit::Nats, 1.0).is_err());
    }

    #[test]
    fn information_falls_with_speakers() {
        let cfg = quick();
        let b: Vec<MiBreakdown> = [2, 3, 5, 10].iter().map(|&c| mi_breakdown(c, &cfg).unwrap()).collect();
        for form in [MiForm::Marginal, MiForm::Joint] {
            let mi: Vec<f64> = b.iter().map(|x| x.mi_nats(form)).collect();
            assert!(mi.iter().all(|x| *x >= -1e-3), "{form:?} {mi:?}");
            assert!(mi.windows(2).all(|w| w[1] < w[0]), "{form:?} {mi:?}");
        }
        // Conditioning on the weight can only lower the conditional entropy.
        assert!(b.iter().all(|x| x.h_given_target_and_weight <= x.h_given_target + 1e-9));
    }

    #[test]
    fn one_speaker_is_rejected() {
        assert!(matches!(mi_breakdown(1, &quick()), Err(Error::UnsupportedC(1))));
    }

    #[test]
    fn bits_scale_nats() {
        assert!((MiUnit::Bits.from_nats(std::f64::consts::LN_2) - 1.0).abs() < 1e-15);
    }
}
