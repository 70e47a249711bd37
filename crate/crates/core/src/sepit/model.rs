//! Parameters and forward / backward passes of one SepIt refinement block.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::layers::{
    conv3, conv3_backward, decode, decode_backward, encode_backward, encode_pre, frame_count, pad_for_frames, relu,
    relu_backward,
};
use crate::error::{Error, Result};
use crate::rng::{std_normal, stream_rng, Stage};
use crate::scalar::Scalar;

/// Residual blocks in the mask network.
pub const RES_BLOCKS: usize = 3;

/// Layer sizes of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Speakers.
    pub c: usize,
    /// Latent channels.
    pub n: usize,
    /// Encoder kernel length; the hop is `k / 2`.
    pub k: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        if self.c == 0 || self.n == 0 || self.k < 2 || !self.k.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("invalid SepIt dims {self:?} (need C, N ≥ 1 and even K ≥ 2)")));
        }
        Ok(())
    }
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub encoder: Range<usize>,
    /// Per residual block: conv1 weight, conv1 bias, conv2 weight, conv2 bias.
    pub res: [[Range<usize>; 4]; RES_BLOCKS],
    pub combiner_w: Range<usize>,
    pub combiner_b: Range<usize>,
    pub decoder: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(d: Dims) -> Self {
        let mut at = 0;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let nn3 = d.n * d.n * 3;
        let encoder = take(d.n * d.k);
        let res = std::array::from_fn(|_| [take(nn3), take(d.n), take(nn3), take(d.n)]);
        let nc = d.n * d.c;
        let combiner_w = take(nc * nc);
        let combiner_b = take(nc);
        let decoder = take(d.n * d.k);
        Self { encoder, res, combiner_w, combiner_b, decoder, total: at }
    }

    /// Named tensors, for reporting and per-tensor checks.
    pub fn tensors(&self) -> Vec<(String, Range<usize>)> {
        let mut out = vec![("encoder".to_string(), self.encoder.clone())];
        for (i, r) in self.res.iter().enumerate() {
            for (name, range) in ["conv1.w", "conv1.b", "conv2.w", "conv2.b"].iter().zip(r) {
                out.push((format!("res{i}.{name}"), range.clone()));
            }
        }
        out.push(("combiner.w".into(), self.combiner_w.clone()));
        out.push(("combiner.b".into(), self.combiner_b.clone()));
        out.push(("decoder".into(), self.decoder.clone()));
        out
    }
}

/// One refinement block: shared encoder, ResBlock mask network, cross-speaker
/// 1×1 combiner and overlap-add decoder, with a skip connection.
#[derive(Debug, Clone, PartialEq)]
pub struct SepItModel<T> {
    dims: Dims,
    layout: Layout,
    params: Vec<T>,
}

/// Activations kept for the backward pass.
struct Cache<T> {
    frames: usize,
    len: usize,
    mix_pad: Vec<T>,
    mix_pre: Vec<T>,
    mix_lat: Vec<T>,
    speakers: Vec<SpeakerCache<T>>,
    masked: Vec<T>,
    residual: Vec<T>,
}

struct SpeakerCache<T> {
    pad: Vec<T>,
    pre: Vec<T>,
    /// Inputs to each residual block, then the mask.
    h: Vec<Vec<T>>,
    /// conv1 pre-activations per block.
    a: Vec<Vec<T>>,
}

impl<T: Scalar> SepItModel<T> {
    /// Random initialisation from the model-init stream of `seed`; `index`
    /// distinguishes blocks of one run.
    pub fn init(dims: Dims, seed: u64, index: u64) -> Result<Self> {
        dims.validate()?;
        let layout = Layout::new(dims);
        let mut params = vec![T::zero(); layout.total];
        let mut rng = stream_rng(seed, Stage::ModelInit, index);
        let mut fill = |r: &Range<usize>, sd: f64| {
            for p in &mut params[r.clone()] {
                *p = T::of(sd * std_normal(&mut rng));
            }
        };
        let (n, k, c) = (dims.n as f64, dims.k as f64, dims.c as f64);
        fill(&layout.encoder, (2.0 / k).sqrt());
        for r in &layout.res {
            fill(&r[0], (2.0 / (3.0 * n)).sqrt());
            // Second conv starts small so every block begins near the identity.
            fill(&r[2], 0.1 * (1.0 / (3.0 * n)).sqrt());
        }
        fill(&layout.combiner_w, 0.01 / (n * c).sqrt());
        fill(&layout.decoder, (1.0 / n).sqrt());
        Ok(Self { dims, layout, params })
    }

    pub fn from_params(dims: Dims, params: Vec<T>) -> Result<Self> {
        dims.validate()?;
        let layout = Layout::new(dims);
        if params.len() != layout.total {
            return Err(Error::ShapeMismatch(format!("expected {} parameters, got {}", layout.total, params.len())));
        }
        Ok(Self { dims, layout, params })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Sets the combiner weights and bias to zero, which makes the block the identity.
    pub fn zero_combiner(&mut self) {
        let l = &self.layout;
        for r in [l.combiner_w.clone(), l.combiner_b.clone()] {
            self.params[r].iter_mut().for_each(|p| *p = T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> SepItModel<U> {
        SepItModel {
            dims: self.dims,
            layout: self.layout.clone(),
            params: self.params.iter().map(|p| U::of(p.as_f64())).collect(),
        }
    }

    fn check_inputs(&self, mixture: &[T], estimates: &[Vec<T>]) -> Result<()> {
        if estimates.len() != self.dims.c {
            return Err(Error::ShapeMismatch(format!("model expects {} speakers, got {}", self.dims.c, estimates.len())));
        }
        if mixture.is_empty() {
            return Err(Error::ShapeMismatch("empty mixture".into()));
        }
        if let Some(e) = estimates.iter().find(|e| e.len() != mixture.len()) {
            return Err(Error::ShapeMismatch(format!("estimate length {} vs mixture length {}", e.len(), mixture.len())));
        }
        Ok(())
    }

    /// Latent representation `ReLU(E * s)` with `N × frames` layout.
    pub fn encode(&self, s: &[T]) -> (Vec<T>, usize) {
        let frames = frame_count(s.len(), self.dims.k);
        let pad = pad_for_frames(s, self.dims.k);
        let pre = encode_pre(&self.params[self.layout.encoder.clone()], self.dims.n, self.dims.k, &pad, frames);
        (relu(&pre), frames)
    }

    fn forward_cached(&self, mixture: &[T], estimates: &[Vec<T>]) -> (Vec<Vec<T>>, Cache<T>) {
        let Dims { c, n, k } = self.dims;
        let p = &self.params;
        let l = &self.layout;
        let len = mixture.len();
        let frames = frame_count(len, k);
        let enc = &p[l.encoder.clone()];

        let mix_pad = pad_for_frames(mixture, k);
        let mix_pre = encode_pre(enc, n, k, &mix_pad, frames);
        let mix_lat = relu(&mix_pre);

        let nf = n * frames;
        let mut speakers = Vec::with_capacity(c);
        let mut masked = vec![T::zero(); c * nf];
        for (s, est) in estimates.iter().enumerate() {
            let pad = pad_for_frames(est, k);
            let pre = encode_pre(enc, n, k, &pad, frames);
            let mut h = vec![relu(&pre)];
            let mut a = Vec::with_capacity(RES_BLOCKS);
            for r in &l.res {
                let x = h.last().expect("block input");
                let pre1 = conv3(&p[r[0].clone()], &p[r[1].clone()], x, n, frames);
                let z = relu(&pre1);
                let y = conv3(&p[r[2].clone()], &p[r[3].clone()], &z, n, frames);
                let next: Vec<T> = x.iter().zip(&y).map(|(u, v)| *u + *v).collect();
                a.push(pre1);
                h.push(next);
            }
            let mask = h.last().expect("mask");
            for ((o, m), e) in masked[s * nf..(s + 1) * nf].iter_mut().zip(mask).zip(&mix_lat) {
                *o = *m * *e;
            }
            speakers.push(SpeakerCache { pad, pre, h, a });
        }

        // 1×1 combiner over all speakers' channels.
        let nc = n * c;
        let cw = &p[l.combiner_w.clone()];
        let cb = &p[l.combiner_b.clone()];
        let mut residual = vec![T::zero(); c * nf];
        for o in 0..nc {
            let row = &mut residual[o * frames..(o + 1) * frames];
            row.iter_mut().for_each(|v| *v = cb[o]);
            for i in 0..nc {
                let w = cw[o * nc + i];
                if w == T::zero() {
                    continue;
                }
                for (v, x) in row.iter_mut().zip(&masked[i * frames..(i + 1) * frames]) {
                    *v += w * *x;
                }
            }
        }

        let dec = &p[l.decoder.clone()];
        let outputs = estimates
            .iter()
            .enumerate()
            .map(|(s, est)| {
                let d = decode(dec, n, k, &residual[s * nf..(s + 1) * nf], frames, len);
                est.iter().zip(&d).map(|(a, b)| *a + *b).collect()
            })
            .collect();
        let cache = Cache { frames, len, mix_pad, mix_pre, mix_lat, speakers, masked, residual };
        (outputs, cache)
    }

    /// Refined estimates `v̄ + D(P_c(P_m(E v̄) ∘ E m))`.
    pub fn forward(&self, mixture: &[T], estimates: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        self.check_inputs(mixture, estimates)?;
        Ok(self.forward_cached(mixture, estimates).0)
    }

    /// Forward pass plus the parameter gradient of `Σ_s <grad_fn(outputs)_s, outputs_s>`,
    /// where `grad_fn` maps outputs to (loss, d loss / d outputs).
    pub fn forward_backward(
        &self,
        mixture: &[T],
        estimates: &[Vec<T>],
        grad_fn: impl FnOnce(&[Vec<T>]) -> Result<(f64, Vec<Vec<T>>)>,
    ) -> Result<(f64, Vec<Vec<T>>, Vec<T>)> {
        self.check_inputs(mixture, estimates)?;
        let (outputs, cache) = self.forward_cached(mixture, estimates);
        let (loss, dout) = grad_fn(&outputs)?;
        let grad = self.backward(&cache, &dout);
        Ok((loss, outputs, grad))
    }

    fn backward(&self, cache: &Cache<T>, dout: &[Vec<T>]) -> Vec<T> {
        let Dims { c, n, k } = self.dims;
        let p = &self.params;
        let l = &self.layout;
        let frames = cache.frames;
        let nf = n * frames;
        let nc = n * c;
        let mut g = vec![T::zero(); l.total];

        // Decoder.
        let mut dresidual = vec![T::zero(); c * nf];
        {
            let mut ddec = vec![T::zero(); l.decoder.len()];
            for s in 0..c {
                let dz = decode_backward(
                    &p[l.decoder.clone()],
                    n,
                    k,
                    &cache.residual[s * nf..(s + 1) * nf],
                    frames,
                    &dout[s][..cache.len],
                    &mut ddec,
                );
                dresidual[s * nf..(s + 1) * nf].copy_from_slice(&dz);
            }
            g[l.decoder.clone()].copy_from_slice(&ddec);
        }

        // Combiner.
        let cw = &p[l.combiner_w.clone()];
        let mut dmasked = vec![T::zero(); c * nf];
        {
            let (gw, gb) = {
                let mut gw = vec![T::zero(); nc * nc];
                let mut gb = vec![T::zero(); nc];
                for o in 0..nc {
                    let d = &dresidual[o * frames..(o + 1) * frames];
                    gb[o] = d.iter().copied().sum();
                    for i in 0..nc {
                        let x = &cache.masked[i * frames..(i + 1) * frames];
                        let mut acc = T::zero();
                        for (a, b) in d.iter().zip(x) {
                            acc += *a * *b;
                        }
                        gw[o * nc + i] = acc;
                        let w = cw[o * nc + i];
                        if w != T::zero() {
                            for (dm, dv) in dmasked[i * frames..(i + 1) * frames].iter_mut().zip(d) {
                                *dm += w * *dv;
                            }
                        }
                    }
                }
                (gw, gb)
            };
            g[l.combiner_w.clone()].copy_from_slice(&gw);
            g[l.combiner_b.clone()].copy_from_slice(&gb);
        }

        // Masking and the mask network, per speaker.
        let mut dmix_lat = vec![T::zero(); nf];
        let mut denc = vec![T::zero(); l.encoder.len()];
        let mut dres: Vec<[Vec<T>; 4]> = l
            .res
            .iter()
            .map(|r| std::array::from_fn(|j| vec![T::zero(); r[j].len()]))
            .collect();
        for (s, sc) in cache.speakers.iter().enumerate() {
            let dm = &dmasked[s * nf..(s + 1) * nf];
            let mask = sc.h.last().expect("mask");
            for ((acc, d), m) in dmix_lat.iter_mut().zip(dm).zip(mask) {
                *acc += *d * *m;
            }
            let mut dh: Vec<T> = dm.iter().zip(&cache.mix_lat).map(|(d, e)| *d * *e).collect();
            for (b, r) in l.res.iter().enumerate().rev() {
                let z = relu(&sc.a[b]);
                let [dw1, db1, dw2, db2] = &mut dres[b];
                let mut dz = conv3_backward(&p[r[2].clone()], &z, &dh, n, frames, dw2, db2);
                relu_backward(&sc.a[b], &mut dz);
                let dx = conv3_backward(&p[r[0].clone()], &sc.h[b], &dz, n, frames, dw1, db1);
                dh.iter_mut().zip(&dx).for_each(|(a, b)| *a += *b);
            }
            relu_backward(&sc.pre, &mut dh);
            encode_backward(&dh, n, k, &sc.pad, frames, &mut denc);
        }
        relu_backward(&cache.mix_pre, &mut dmix_lat);
        encode_backward(&dmix_lat, n, k, &cache.mix_pad, frames, &mut denc);

        g[l.encoder.clone()].copy_from_slice(&denc);
        for (r, d) in l.res.iter().zip(&dres) {
            for (range, vals) in r.iter().zip(d) {
                g[range.clone()].copy_from_slice(vals);
            }
        }
        g
    }
}
