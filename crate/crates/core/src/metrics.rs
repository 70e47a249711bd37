//! SDR, SI-SDR and SI-SDR improvement, all in dB and capped to a finite
//! range so that perfect and orthogonal estimates stay representable.

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use crate::signal::{mean, Signal};

pub const DEFAULT_DB_CAP: f64 = 200.0;

/// Symmetric clamp applied to every dB value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbCap(pub f64);

impl Default for DbCap {
    fn default() -> Self {
        DbCap(DEFAULT_DB_CAP)
    }
}

impl DbCap {
    /// `10·log10(num/den)`, saturating at the cap when either side vanishes.
    pub fn ratio_db(self, num: f64, den: f64) -> f64 {
        let cap = self.0;
        if den <= 0.0 || !den.is_finite() {
            return if num > 0.0 { cap } else { -cap };
        }
        if num <= 0.0 {
            return -cap;
        }
        (10.0 * (num / den).log10()).clamp(-cap, cap)
    }
}

fn check_pair<T: Scalar>(reference: &[T], estimate: &[T]) -> Result<()> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch(reference.len(), estimate.len()));
    }
    if reference.iter().all(|x| x.is_zero()) {
        return Err(Error::ZeroReference);
    }
    Ok(())
}

/// Target energy and residual energy of the scale-invariant projection.
pub(crate) fn si_sdr_terms<T: Scalar>(reference: &[T], estimate: &[T]) -> (f64, f64) {
    let rr = dot(reference, reference);
    let alpha = dot(reference, estimate) / rr;
    let mut target = 0.0;
    let mut resid = 0.0;
    for (&r, &e) in reference.iter().zip(estimate) {
        let t = alpha * r.as_f64();
        target += t * t;
        resid += (e.as_f64() - t).powi(2);
    }
    (target, resid)
}

pub fn si_sdr_slices<T: Scalar>(reference: &[T], estimate: &[T], cap: DbCap) -> Result<f64> {
    check_pair(reference, estimate)?;
    let (target, resid) = si_sdr_terms(reference, estimate);
    // Residual at rounding level means a scaled copy of the reference.
    if resid <= 1e-24 * target.max(f64::MIN_POSITIVE) {
        return Ok(if target > 0.0 { cap.0 } else { -cap.0 });
    }
    Ok(cap.ratio_db(target, resid))
}

/// Scale-invariant SDR in dB.
pub fn si_sdr<T: Scalar>(reference: &Signal<T>, estimate: &Signal<T>) -> Result<f64> {
    si_sdr_slices(reference.samples(), estimate.samples(), DbCap::default())
}

pub fn sdr_slices<T: Scalar>(reference: &[T], estimate: &[T], cap: DbCap) -> Result<f64> {
    check_pair(reference, estimate)?;
    let err: Vec<f64> = reference
        .iter()
        .zip(estimate)
        .map(|(&r, &e)| r.as_f64() - e.as_f64())
        .collect();
    let mu_e = mean(&err);
    let var_e = err.iter().map(|x| (x - mu_e).powi(2)).sum::<f64>() / err.len() as f64;
    let mu_r = mean(reference);
    let var_r = reference.iter().map(|x| (x.as_f64() - mu_r).powi(2)).sum::<f64>() / reference.len() as f64;
    Ok(cap.ratio_db(var_r, var_e))
}

/// `10·log10(Var(reference) / Var(reference − estimate))`.
pub fn sdr<T: Scalar>(reference: &Signal<T>, estimate: &Signal<T>) -> Result<f64> {
    sdr_slices(reference.samples(), estimate.samples(), DbCap::default())
}

pub fn si_sdr_improvement<T: Scalar>(
    mixture: &Signal<T>,
    reference: &Signal<T>,
    estimate: &Signal<T>,
) -> Result<f64> {
    Ok(si_sdr(reference, estimate)? - si_sdr(reference, mixture)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sig(x: &[f64]) -> Signal<f64> {
        Signal::new(x.to_vec(), 8000.0).unwrap()
    }

    #[test]
    fn hand_cases() {
        assert_eq!(si_sdr(&sig(&[1.0, 0.0]), &sig(&[1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(si_sdr(&sig(&[1.0, 0.0]), &sig(&[0.0, 1.0])).unwrap(), -DEFAULT_DB_CAP);
        let v = sig(&[0.3, -1.2, 2.0, 0.1]);
        assert_eq!(si_sdr(&v, &v.scaled(2.0)).unwrap(), DEFAULT_DB_CAP);
        assert_eq!(sdr(&v, &v).unwrap(), DEFAULT_DB_CAP);
    }

    #[test]
    fn negated_estimate_loses_six_db() {
        let v = sig(&[0.3, -1.2, 2.0, 0.1, -0.7]);
        let expected = -10.0 * 4f64.log10();
        assert!((sdr(&v, &v.scaled(-1.0)).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn unit_noise_gives_zero_db() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let v: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let e: Vec<f64> = v
            .iter()
            .map(|x| x + if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let d = sdr(&sig(&v), &sig(&e)).unwrap();
        assert!(d.abs() < 0.1, "{d}");
    }

    #[test]
    fn errors() {
        assert!(matches!(si_sdr(&sig(&[1.0]), &sig(&[1.0, 2.0])), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(sdr(&sig(&[0.0, 0.0]), &sig(&[1.0, 2.0])), Err(Error::ZeroReference)));
    }

    #[test]
    fn improvement_matches_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s0: Vec<f64> = (0..500).map(|_| rng.random::<f64>() - 0.5).collect();
        let s1: Vec<f64> = (0..500).map(|_| rng.random::<f64>() - 0.5).collect();
        let mix: Vec<f64> = s0.iter().zip(&s1).map(|(a, b)| 0.6 * a + 0.8 * b).collect();
        let est: Vec<f64> = s0.iter().zip(&s1).map(|(a, b)| a + 0.1 * b).collect();
        // Independent evaluation of both terms from the projection formula.
        let direct = |r: &[f64], e: &[f64]| {
            let rr: f64 = r.iter().map(|x| x * x).sum();
            let re: f64 = r.iter().zip(e).map(|(a, b)| a * b).sum();
            let t: Vec<f64> = r.iter().map(|x| re / rr * x).collect();
            let tt: f64 = t.iter().map(|x| x * x).sum();
            let ee: f64 = e.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum();
            10.0 * (tt / ee).log10()
        };
        let want = direct(&s0, &est) - direct(&s0, &mix);
        let got = si_sdr_improvement(&sig(&mix), &sig(&s0), &sig(&est)).unwrap();
        assert!((got - want).abs() < 1e-9);
        assert_eq!(si_sdr_improvement(&sig(&mix), &sig(&s0), &sig(&mix)).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn si_sdr_ignores_positive_gain(
            pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4..64),
            gain in 1e-3f64..1e3,
        ) {
            let r: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let e: Vec<f64> = pairs.iter().map(|p| p.0 + 0.5 * p.1).collect();
            let r = sig(&r);
            prop_assume!(r.samples().iter().any(|x| *x != 0.0));
            let a = si_sdr(&r, &sig(&e)).unwrap();
            let b = si_sdr(&r, &sig(&e).scaled(gain)).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn sdr_equals_si_sdr_at_optimal_scale(
            pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8..64),
        ) {
            // Build a zero-mean reference and an estimate whose projection is the
            // reference itself, so both metrics see the same error.
            let mu_r = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
            let r: Vec<f64> = pairs.iter().map(|p| p.0 - mu_r).collect();
            let rr: f64 = r.iter().map(|x| x * x).sum();
            prop_assume!(rr > 1e-3);
            let mu_n = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
            let n: Vec<f64> = pairs.iter().map(|p| p.1 - mu_n).collect();
            let rn: f64 = r.iter().zip(&n).map(|(a, b)| a * b).sum();
            let n: Vec<f64> = n.iter().zip(&r).map(|(x, y)| x - rn / rr * y).collect();
            let e: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + b).collect();
            let nn: f64 = n.iter().map(|x| x * x).sum();
            prop_assume!(nn > 1e-6);
            let a = si_sdr(&sig(&r), &sig(&e)).unwrap();
            let b = sdr(&sig(&r), &sig(&e)).unwrap();
            prop_assert!((a - b).abs() < 1e-8, "{} {}", a, b);
        }
    }
}
