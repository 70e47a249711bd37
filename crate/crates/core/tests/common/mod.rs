//! Shared oracles for the integration tests.
#![allow(dead_code)]

use scss::rng::{std_normal, stream_rng, Stage};
use scss::sepit::{ordered_loss_with_grad, Dims, Example, SepItModel};

pub fn noise(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stage::Corpus, 7);
    (0..len).map(|_| std_normal(&mut rng)).collect()
}

/// Direct per-sample evaluation of the block, written without the layer
/// helpers: every convolution is an explicit sum over taps.
pub fn reference_forward(model: &SepItModel<f64>, mix: &[f64], est: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Dims { c, n, k } = model.dims();
    let p = model.params();
    let l = model.layout();
    let hop = k / 2;
    let len = mix.len();
    let frames = len.div_ceil(hop);
    let sample = |x: &[f64], i: usize| if i < x.len() { x[i] } else { 0.0 };
    let enc = |x: &[f64]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|ch| {
                (0..frames)
                    .map(|f| {
                        let s: f64 = (0..k).map(|t| p[l.encoder.start + ch * k + t] * sample(x, f * hop + t)).sum();
                        s.max(0.0)
                    })
                    .collect()
            })
            .collect()
    };
    let conv = |w: &[f64], b: &[f64], x: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..n)
            .map(|o| {
                (0..frames)
                    .map(|f| {
                        let mut s = b[o];
                        for i in 0..n {
                            for t in 0..3 {
                                let src = f as isize + t as isize - 1;
                                if src >= 0 && (src as usize) < frames {
                                    s += w[(o * n + i) * 3 + t] * x[i][src as usize];
                                }
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect()
    };
    let em = enc(mix);
    let mut masked: Vec<Vec<f64>> = Vec::new();
    for e in est {
        let mut h = enc(e);
        for r in &l.res {
            let z: Vec<Vec<f64>> = conv(&p[r[0].clone()], &p[r[1].clone()], &h)
                .into_iter()
                .map(|row| row.into_iter().map(|v| v.max(0.0)).collect())
                .collect();
            let y = conv(&p[r[2].clone()], &p[r[3].clone()], &z);
            for ch in 0..n {
                for f in 0..frames {
                    h[ch][f] += y[ch][f];
                }
            }
        }
        for ch in 0..n {
            masked.push((0..frames).map(|f| h[ch][f] * em[ch][f]).collect());
        }
    }
    let nc = n * c;
    let resid: Vec<Vec<f64>> = (0..nc)
        .map(|o| {
            (0..frames)
                .map(|f| {
                    p[l.combiner_b.start + o]
                        + (0..nc).map(|i| p[l.combiner_w.start + o * nc + i] * masked[i][f]).sum::<f64>()
                })
                .collect()
        })
        .collect();
    (0..c)
        .map(|s| {
            (0..len)
                .map(|t| {
                    let mut y = est[s][t];
                    for f in 0..frames {
                        if t >= f * hop && t < f * hop + k {
                            for ch in 0..n {
                                y += p[l.decoder.start + ch * k + (t - f * hop)] * resid[s * n + ch][f];
                            }
                        }
                    }
                    y
                })
                .collect()
        })
        .collect()
}

pub fn randomised(dims: Dims, seed: u64) -> SepItModel<f64> {
    let mut m = SepItModel::<f64>::init(dims, seed, 0).unwrap();
    // Default init makes the second conv and the combiner tiny; widen them so
    // every path contributes visibly.
    let noise = noise(seed + 100, m.param_count());
    for (p, z) in m.params_mut().iter_mut().zip(noise) {
        *p += 0.3 * z;
    }
    m
}

pub fn loss_of(model: &SepItModel<f64>, ex: &Example<f64>) -> f64 {
    let out = model.forward(&ex.mixture, &ex.estimates).unwrap();
    ordered_loss_with_grad(&ex.references, &out).unwrap().0
}

/// Small two-speaker example with estimates near the references.
pub fn gradient_example(len: usize) -> Example<f64> {
    let refs = vec![noise(22, len), noise(23, len)];
    let estimates: Vec<Vec<f64>> = refs
        .iter()
        .zip([noise(24, len), noise(25, len)])
        .map(|(r, z)| r.iter().zip(z).map(|(a, b)| a + 0.4 * b).collect())
        .collect();
    let mixture: Vec<f64> = refs[0].iter().zip(&refs[1]).map(|(a, b)| 0.6 * a + 0.8 * b).collect();
    Example { mixture, references: refs, estimates }
}

/// Worst relative error per tensor between the analytic gradient and central
/// differences with step `h`. Magnitudes below `1e-6` are compared absolutely.
pub fn gradient_errors(model: &SepItModel<f64>, ex: &Example<f64>, h: f64) -> Vec<(String, f64)> {
    let (_, _, grad) = model
        .forward_backward(&ex.mixture, &ex.estimates, |out| ordered_loss_with_grad(&ex.references, out))
        .unwrap();
    model
        .layout()
        .tensors()
        .into_iter()
        .map(|(name, range)| {
            let mut worst: f64 = 0.0;
            for i in range {
                let mut up = model.clone();
                up.params_mut()[i] += h;
                let mut dn = model.clone();
                dn.params_mut()[i] -= h;
                let fd = (loss_of(&up, ex) - loss_of(&dn, ex)) / (2.0 * h);
                let scale = grad[i].abs().max(fd.abs()).max(1e-6);
                worst = worst.max((grad[i] - fd).abs() / scale);
            }
            (name, worst)
        })
        .collect()
}
