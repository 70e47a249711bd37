//! Synthetic stand-in for a pretrained separator: each output is the
//! whitened source plus a controlled amount of the other sources.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{variance, whiten_samples, Signal};

/// `v̄⁰_i = whiten(v_i + g_i·Σ_{j≠i} v_j)` with `g_i` chosen so the sample
/// signal-to-interference ratio is exactly `interference_db`. `+∞` gives the
/// whitened sources.
pub fn oracle_backbone<T: Scalar>(sources: &[Signal<T>], interference_db: f64) -> Result<Vec<Signal<T>>> {
    if sources.is_empty() {
        return Err(Error::InvalidParameter("no sources".into()));
    }
    if interference_db.is_nan() || interference_db == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(format!("invalid interference ratio {interference_db}")));
    }
    let len = sources[0].len();
    let rate = sources[0].sample_rate();
    if let Some(s) = sources.iter().find(|s| s.len() != len) {
        return Err(Error::LengthMismatch(len, s.len()));
    }
    let mut out = Vec::with_capacity(sources.len());
    for (i, src) in sources.iter().enumerate() {
        let target: Vec<f64> = src.samples().iter().map(|x| x.as_f64()).collect();
        let mut interference = vec![0.0f64; len];
        for (j, other) in sources.iter().enumerate() {
            if j != i {
                interference.iter_mut().zip(other.samples()).for_each(|(a, b)| *a += b.as_f64());
            }
        }
        let var_i = variance(&interference);
        let gain = if interference_db.is_infinite() || var_i == 0.0 {
            0.0
        } else {
            (variance(&target) / (var_i * 10f64.powf(interference_db / 10.0))).sqrt()
        };
        let mixed: Vec<f64> = target.iter().zip(&interference).map(|(s, n)| s + gain * n).collect();
        let white = whiten_samples(&mixed)?;
        out.push(Signal::new(white.into_iter().map(T::of).collect(), rate)?);
    }
    Ok(out)
}
