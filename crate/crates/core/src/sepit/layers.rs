//! Channel-major 1-D layers with explicit backward passes.
//!
//! Feature maps are `[channels][frames]` flattened row-major.

use crate::scalar::Scalar;

/// Frames produced by a kernel-`k`, stride-`k/2` encoder over `len` samples,
/// after zero-padding to a whole number of hops plus one trailing hop.
pub fn frame_count(len: usize, k: usize) -> usize {
    len.div_ceil(k / 2)
}

/// Zero-padded copy of `x` long enough for every frame.
pub fn pad_for_frames<T: Scalar>(x: &[T], k: usize) -> Vec<T> {
    let hop = k / 2;
    let frames = frame_count(x.len(), k);
    let mut out = vec![T::zero(); frames * hop + hop];
    out[..x.len()].copy_from_slice(x);
    out
}

/// `pre[n][f] = Σ_k w[n][k] · x[f·hop + k]`.
pub fn encode_pre<T: Scalar>(w: &[T], n: usize, k: usize, xpad: &[T], frames: usize) -> Vec<T> {
    let hop = k / 2;
    let mut pre = vec![T::zero(); n * frames];
    for c in 0..n {
        let taps = &w[c * k..(c + 1) * k];
        let row = &mut pre[c * frames..(c + 1) * frames];
        for (f, out) in row.iter_mut().enumerate() {
            let seg = &xpad[f * hop..f * hop + k];
            let mut acc = T::zero();
            for (a, b) in taps.iter().zip(seg) {
                acc += *a * *b;
            }
            *out = acc;
        }
    }
    pre
}

/// Accumulates `dw[n][k] += Σ_f dpre[n][f] · x[f·hop + k]`.
pub fn encode_backward<T: Scalar>(dpre: &[T], n: usize, k: usize, xpad: &[T], frames: usize, dw: &mut [T]) {
    let hop = k / 2;
    for c in 0..n {
        let row = &dpre[c * frames..(c + 1) * frames];
        let g = &mut dw[c * k..(c + 1) * k];
        for (f, &d) in row.iter().enumerate() {
            if d == T::zero() {
                continue;
            }
            for (gk, &x) in g.iter_mut().zip(&xpad[f * hop..f * hop + k]) {
                *gk += d * x;
            }
        }
    }
}

pub fn relu<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// Zeroes `grad` where the pre-activation was not positive.
pub fn relu_backward<T: Scalar>(pre: &[T], grad: &mut [T]) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Same-length convolution, kernel 3, `ch → ch` channels, zero padding.
/// `w` is `[out][in][3]`.
pub fn conv3<T: Scalar>(w: &[T], b: &[T], x: &[T], ch: usize, frames: usize) -> Vec<T> {
    let mut y = vec![T::zero(); ch * frames];
    for o in 0..ch {
        let yo = &mut y[o * frames..(o + 1) * frames];
        yo.iter_mut().for_each(|v| *v = b[o]);
        for i in 0..ch {
            let xi = &x[i * frames..(i + 1) * frames];
            let wk = &w[(o * ch + i) * 3..(o * ch + i) * 3 + 3];
            if frames == 0 {
                continue;
            }
            // tap 0 reads x[f-1], tap 1 reads x[f], tap 2 reads x[f+1]
            for (yv, xv) in yo[1..].iter_mut().zip(&xi[..frames - 1]) {
                *yv += wk[0] * *xv;
            }
            for (yv, xv) in yo.iter_mut().zip(xi) {
                *yv += wk[1] * *xv;
            }
            for (yv, xv) in yo[..frames - 1].iter_mut().zip(&xi[1..]) {
                *yv += wk[2] * *xv;
            }
        }
    }
    y
}

/// Backward of [`conv3`]; accumulates into `dw`, `db` and returns `dx`.
pub fn conv3_backward<T: Scalar>(
    w: &[T],
    x: &[T],
    dy: &[T],
    ch: usize,
    frames: usize,
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    let mut dx = vec![T::zero(); ch * frames];
    if frames == 0 {
        return dx;
    }
    for o in 0..ch {
        let dyo = &dy[o * frames..(o + 1) * frames];
        db[o] += dyo.iter().copied().sum();
        for i in 0..ch {
            let xi = &x[i * frames..(i + 1) * frames];
            let base = (o * ch + i) * 3;
            let mut g0 = T::zero();
            let mut g1 = T::zero();
            let mut g2 = T::zero();
            for (d, xv) in dyo[1..].iter().zip(&xi[..frames - 1]) {
                g0 += *d * *xv;
            }
            for (d, xv) in dyo.iter().zip(xi) {
                g1 += *d * *xv;
            }
            for (d, xv) in dyo[..frames - 1].iter().zip(&xi[1..]) {
                g2 += *d * *xv;
            }
            dw[base] += g0;
            dw[base + 1] += g1;
            dw[base + 2] += g2;
            let (w0, w1, w2) = (w[base], w[base + 1], w[base + 2]);
            let dxi = &mut dx[i * frames..(i + 1) * frames];
            for (g, d) in dxi[..frames - 1].iter_mut().zip(&dyo[1..]) {
                *g += w0 * *d;
            }
            for (g, d) in dxi.iter_mut().zip(dyo) {
                *g += w1 * *d;
            }
            for (g, d) in dxi[1..].iter_mut().zip(&dyo[..frames - 1]) {
                *g += w2 * *d;
            }
        }
    }
    dx
}

/// Overlap-add synthesis: `y[f·hop + k] += Σ_n w[n][k] · z[n][f]`, cropped to `len`.
pub fn decode<T: Scalar>(w: &[T], n: usize, k: usize, z: &[T], frames: usize, len: usize) -> Vec<T> {
    let hop = k / 2;
    let mut y = vec![T::zero(); frames * hop + hop];
    for c in 0..n {
        let taps = &w[c * k..(c + 1) * k];
        for (f, &v) in z[c * frames..(c + 1) * frames].iter().enumerate() {
            if v == T::zero() {
                continue;
            }
            for (out, &t) in y[f * hop..f * hop + k].iter_mut().zip(taps) {
                *out += t * v;
            }
        }
    }
    y.truncate(len);
    y
}

/// Backward of [`decode`]; accumulates `dw` and returns `dz`.
pub fn decode_backward<T: Scalar>(
    w: &[T],
    n: usize,
    k: usize,
    z: &[T],
    frames: usize,
    dy: &[T],
    dw: &mut [T],
) -> Vec<T> {
    let hop = k / 2;
    let mut dypad = vec![T::zero(); frames * hop + hop];
    dypad[..dy.len()].copy_from_slice(dy);
    let mut dz = vec![T::zero(); n * frames];
    for c in 0..n {
        let taps = &w[c * k..(c + 1) * k];
        let g = &mut dw[c * k..(c + 1) * k];
        for f in 0..frames {
            let seg = &dypad[f * hop..f * hop + k];
            let zv = z[c * frames + f];
            let mut acc = T::zero();
            for ((t, gk), d) in taps.iter().zip(g.iter_mut()).zip(seg) {
                acc += *t * *d;
                *gk += zv * *d;
            }
            dz[c * frames + f] = acc;
        }
    }
    dz
}
