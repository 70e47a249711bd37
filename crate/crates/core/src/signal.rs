//! Waveforms, whitening and fixed-window segmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sample rate assumed when none is supplied (WSJ0-mix convention).
pub const DEFAULT_SAMPLE_RATE: f64 = 8000.0;

/// Segments whose variance falls below this fraction of the whole-signal
/// variance count as silent.
pub const SILENCE_REL_THRESHOLD: f64 = 1e-6;

const DEGENERATE_VARIANCE: f64 = 1e-12;

/// A uniformly sampled real waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal<T> {
    samples: Vec<T>,
    sample_rate: f64,
}

impl<T: Scalar> Signal<T> {
    pub fn new(samples: Vec<T>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("signal must have at least one sample".into()));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample rate {sample_rate} must be positive")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn from_f64(samples: &[f64], sample_rate: f64) -> Result<Self> {
        Self::new(samples.iter().map(|&x| T::of(x)).collect(), sample_rate)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn mean(&self) -> f64 {
        mean(&self.samples)
    }

    /// Population variance (divides by `n`).
    pub fn variance(&self) -> f64 {
        variance(&self.samples)
    }

    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&x| x * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Same samples with a new backing type.
    pub fn cast<U: Scalar>(&self) -> Signal<U> {
        Signal {
            samples: self.samples.iter().map(|x| U::of(x.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

pub(crate) fn mean<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.as_f64()).sum::<f64>() / x.len() as f64
}

pub(crate) fn variance<T: Scalar>(x: &[T]) -> f64 {
    let mu = mean(x);
    x.iter().map(|v| (v.as_f64() - mu).powi(2)).sum::<f64>() / x.len() as f64
}

/// Removes the mean and scales to unit (population) variance.
pub fn whiten<T: Scalar>(s: &Signal<T>) -> Result<Signal<T>> {
    Ok(Signal {
        samples: whiten_samples(&s.samples)?,
        sample_rate: s.sample_rate,
    })
}

pub(crate) fn whiten_samples<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    if x.len() < 2 {
        return Err(Error::DegenerateSignal { variance: 0.0 });
    }
    let mu = mean(x);
    let var = variance(x);
    if var < DEGENERATE_VARIANCE {
        return Err(Error::DegenerateSignal { variance: var });
    }
    let inv_sd = 1.0 / var.sqrt();
    Ok(x.iter().map(|&v| T::of((v.as_f64() - mu) * inv_sd)).collect())
}

/// Non-overlapping fixed-length windows over a parent signal. The trailing
/// partial window is dropped.
#[derive(Debug, Clone, Copy)]
pub struct SegmentView<'a, T> {
    parent: &'a Signal<T>,
    window_len: usize,
}

impl<'a, T: Scalar> SegmentView<'a, T> {
    pub fn parent(&self) -> &'a Signal<T> {
        self.parent
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn segment_count(&self) -> usize {
        self.parent.len() / self.window_len
    }

    pub fn segment(&self, r: usize) -> &'a [T] {
        &self.parent.samples[r * self.window_len..(r + 1) * self.window_len]
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [T]> + '_ {
        self.parent.samples.chunks_exact(self.window_len)
    }

    /// Segments whose variance is at least `rel_threshold` times the parent
    /// variance.
    pub fn active(&self, rel_threshold: f64) -> impl Iterator<Item = &'a [T]> + '_ {
        let floor = rel_threshold * self.parent.variance();
        self.iter().filter(move |seg| variance(seg) >= floor)
    }

    /// Concatenation of all complete segments.
    pub fn reconstruct(&self) -> Vec<T> {
        self.iter().flatten().copied().collect()
    }
}

/// Window length in samples for a window given in milliseconds.
pub fn window_samples(window_ms: f64, sample_rate: f64) -> Result<usize> {
    let w = (window_ms * sample_rate / 1000.0).round();
    if !(w >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "window of {window_ms} ms at {sample_rate} Hz is shorter than one sample"
        )));
    }
    Ok(w as usize)
}

pub fn segment<T: Scalar>(s: &Signal<T>, window_ms: f64) -> Result<SegmentView<'_, T>> {
    let window_len = window_samples(window_ms, s.sample_rate)?;
    if window_len > s.len() {
        return Err(Error::WindowTooLarge { window: window_len, len: s.len() });
    }
    Ok(SegmentView { parent: s, window_len })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alternating_signal_is_already_white() {
        let s = Signal::<f64>::new(vec![1.0, -1.0, 1.0, -1.0], 8000.0).unwrap();
        assert_eq!(whiten(&s).unwrap(), s);
    }

    #[test]
    fn zero_signal_is_degenerate() {
        let s = Signal::<f64>::new(vec![0.0; 4], 8000.0).unwrap();
        assert!(matches!(whiten(&s), Err(Error::DegenerateSignal { .. })));
    }

    #[test]
    fn whitening_removes_mean() {
        let s = Signal::<f64>::new(vec![3.0, 5.0, 4.0, 8.0, 10.0], 16000.0).unwrap();
        let w = whiten(&s).unwrap();
        assert!(w.mean().abs() < 1e-12);
        assert!((w.variance() - 1.0).abs() < 1e-6);
        assert_eq!(w.sample_rate(), 16000.0);
    }

    #[test]
    fn segment_counts() {
        let s = Signal::<f32>::new(vec![0.0; 32000], 8000.0).unwrap();
        let v = segment(&s, 20.0).unwrap();
        assert_eq!((v.segment_count(), v.window_len()), (200, 160));
        assert!(v.iter().all(|seg| seg.len() == 160));
        assert_eq!(segment(&s, 4000.0).unwrap().segment_count(), 1);

        let short = Signal::<f32>::new(vec![0.0; 100], 8000.0).unwrap();
        assert!(matches!(segment(&short, 20.0), Err(Error::WindowTooLarge { window: 160, len: 100 })));
    }

    #[test]
    fn quiet_segments_are_skipped() {
        let mut x = vec![0.0f64; 320];
        for (i, v) in x.iter_mut().enumerate().take(160) {
            *v = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let s = Signal::new(x, 8000.0).unwrap();
        let view = segment(&s, 20.0).unwrap();
        assert_eq!(view.active(SILENCE_REL_THRESHOLD).count(), 1);
    }

    proptest! {
        #[test]
        fn whiten_is_scale_invariant_and_idempotent(
            x in prop::collection::vec(-100.0f64..100.0, 8..200),
            c in 0.01f64..100.0,
        ) {
            let s = Signal::new(x, 8000.0).unwrap();
            prop_assume!(s.variance() > 1e-6);
            let w = whiten(&s).unwrap();
            let wc = whiten(&s.scaled(c)).unwrap();
            let ww = whiten(&w).unwrap();
            for ((a, b), d) in w.samples().iter().zip(wc.samples()).zip(ww.samples()) {
                prop_assert!((a - b).abs() < 1e-9);
                prop_assert!((a - d).abs() < 1e-9);
            }
            prop_assert!((w.variance() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn segments_reconstruct_prefix(len in 1usize..2000, w_ms in 0.125f64..50.0) {
            let s = Signal::new((0..len).map(|i| i as f64).collect(), 8000.0).unwrap();
            if let Ok(view) = segment(&s, w_ms) {
                let n = view.segment_count() * view.window_len();
                prop_assert_eq!(view.reconstruct(), s.samples()[..n].to_vec());
                prop_assert_eq!(view.segment_count(), len / view.window_len());
            }
        }
    }
}
