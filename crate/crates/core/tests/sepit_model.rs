mod common;

use common::{gradient_errors, gradient_example, loss_of, noise, randomised, reference_forward};
use scss::sepit::layers::frame_count;
use scss::sepit::{grad_step, run, train, training_batch, Adam, Dims, Example, SepItConfig, SepItModel, StopReason};

#[test]
fn forward_matches_straight_line_evaluation() {
    let dims = Dims { c: 2, n: 4, k: 4 };
    let model = randomised(dims, 1);
    let mix = noise(2, 64);
    let est = vec![noise(3, 64), noise(4, 64)];
    let fast = model.forward(&mix, &est).unwrap();
    let slow = reference_forward(&model, &mix, &est);
    for (a, b) in fast.iter().flatten().zip(slow.iter().flatten()) {
        assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn forward_matches_on_ragged_lengths() {
    let dims = Dims { c: 3, n: 2, k: 6 };
    let model = randomised(dims, 5);
    for len in [7usize, 13, 30] {
        let mix = noise(6, len);
        let est = vec![noise(7, len), noise(8, len), noise(9, len)];
        let fast = model.forward(&mix, &est).unwrap();
        let slow = reference_forward(&model, &mix, &est);
        for (a, b) in fast.iter().flatten().zip(slow.iter().flatten()) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn zero_combiner_is_bit_exact_identity() {
    let mut model = randomised(Dims { c: 2, n: 4, k: 4 }, 11);
    model.zero_combiner();
    let mix = noise(12, 200);
    let est = vec![noise(13, 200), noise(14, 200)];
    assert_eq!(model.forward(&mix, &est).unwrap(), est);
    let m32 = model.cast::<f32>();
    let est32: Vec<Vec<f32>> = est.iter().map(|e| e.iter().map(|&x| x as f32).collect()).collect();
    let mix32: Vec<f32> = mix.iter().map(|&x| x as f32).collect();
    assert_eq!(m32.forward(&mix32, &est32).unwrap(), est32);
}

#[test]
fn latent_length_is_two_l_over_k() {
    assert_eq!(frame_count(32000, 4), 16000);
    let model = SepItModel::<f32>::init(Dims { c: 2, n: 3, k: 4 }, 0, 0).unwrap();
    let (lat, frames) = model.encode(&vec![0.0f32; 32000]);
    assert_eq!(frames, 16000);
    assert_eq!(lat.len(), 3 * 16000);
    assert!(lat.iter().all(|&v| v == 0.0));
}

#[test]
fn impulse_reproduces_rectified_taps() {
    let dims = Dims { c: 1, n: 2, k: 4 };
    let mut model = SepItModel::<f64>::init(dims, 0, 0).unwrap();
    let enc = model.layout().encoder.clone();
    let taps = [1.0, -2.0, 3.0, -4.0, -0.5, 0.25, -1.5, 2.5];
    model.params_mut()[enc].copy_from_slice(&taps);
    let mut x = vec![0.0; 16];
    x[6] = 1.0;
    let (lat, frames) = model.encode(&x);
    assert_eq!(frames, 8);
    // Sample 6 with hop 2 is tap 2 of frame 2 and tap 0 of frame 3.
    let at = |ch: usize, f: usize| lat[ch * frames + f];
    assert_eq!(at(0, 2), 3.0);
    assert_eq!(at(0, 3), 1.0);
    assert_eq!(at(1, 2), 0.0);
    assert_eq!(at(1, 3), 0.0);
    let nonzero = lat.iter().filter(|&&v| v != 0.0).count();
    assert_eq!(nonzero, 2);
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let model = randomised(Dims { c: 2, n: 2, k: 4 }, 21);
    assert!(model.param_count() <= 500);
    for (name, worst) in gradient_errors(&model, &gradient_example(48), 1e-4) {
        assert!(worst < 1e-4, "{name}: relative error {worst:e}");
    }
}

#[test]
fn combiner_stays_put_at_stationary_point() {
    let cfg = SepItConfig { n: 3, crop: 64, batch: 2, ..Default::default() };
    let mut model = SepItModel::<f64>::init(cfg.dims(), 0, 0).unwrap();
    model.zero_combiner();
    let dec = model.layout().decoder.clone();
    model.params_mut()[dec].iter_mut().for_each(|p| *p = 0.0);
    let before = model.clone();
    let batch = training_batch::<f64>(&cfg, 0).unwrap();
    let mut opt = Adam::new(model.param_count());
    grad_step(&mut model, &mut opt, &batch, cfg.lr).unwrap();
    let l = model.layout().clone();
    for r in [l.combiner_w, l.combiner_b] {
        for i in r {
            assert!((model.params()[i] - before.params()[i]).abs() < 1e-8);
        }
    }
}

#[test]
fn short_training_lowers_the_loss() {
    for seed in 0..20u64 {
        let cfg = SepItConfig { n: 4, crop: 256, batch: 1, steps: 200, max_iter: 1, seed, ..Default::default() };
        let batch = training_batch::<f64>(&cfg, 0).unwrap();
        let mut model = SepItModel::<f64>::init(cfg.dims(), seed, 0).unwrap();
        let start: f64 = batch.iter().map(|ex| loss_of(&model, ex)).sum();
        let mut opt = Adam::new(model.param_count());
        for step in 0..cfg.steps {
            grad_step(&mut model, &mut opt, &batch, cfg.lr_at(step)).unwrap();
        }
        let end: f64 = batch.iter().map(|ex| loss_of(&model, ex)).sum();
        assert!(end < start, "seed {seed}: {start} -> {end}");
    }
}

#[test]
fn run_respects_iteration_cap() {
    let cfg = SepItConfig { n: 3, steps: 5, max_iter: 3, crop: 64, ..Default::default() };
    let trained = train::<f64>(&cfg).unwrap();
    let ex = Example::<f64>::synthetic(&cfg, 12000, 5, 0).unwrap();

    let t0 = run(&ex.mixture, &ex.estimates, &trained.blocks, 0, 32).unwrap();
    assert_eq!(t0.estimates.len(), 1);
    assert_eq!(t0.stop_reason, StopReason::MaxIter);
    assert_eq!(t0.output(), &ex.estimates[..]);

    let t = run(&ex.mixture, &ex.estimates, &trained.blocks, 3, 32).unwrap();
    assert!(t.estimates.len() <= 4);
    assert_eq!(t.mi.len(), t.estimates.len());
    if t.stop_reason == StopReason::MiDecrease {
        let j = t.stopped_at();
        assert!(t.mi[j] < t.mi[j - 1]);
    }
}

#[test]
fn identity_blocks_tie_and_continue() {
    let cfg = SepItConfig { n: 2, ..Default::default() };
    let mut block = SepItModel::<f64>::init(cfg.dims(), 0, 0).unwrap();
    block.zero_combiner();
    let ex = Example::<f64>::synthetic(&cfg, 12000, 9, 0).unwrap();
    let t = run(&ex.mixture, &ex.estimates, &[block], 4, 32).unwrap();
    // Unchanged estimates give u = 0 at every step, which keeps iterating.
    assert_eq!(t.stop_reason, StopReason::MaxIter);
    assert_eq!(t.estimates.len(), 5);
    assert!(t.mi.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn training_is_deterministic() {
    let cfg = SepItConfig { n: 3, steps: 20, max_iter: 2, crop: 128, seed: 4, ..Default::default() };
    let a = train::<f32>(&cfg).unwrap();
    let b = train::<f32>(&cfg).unwrap();
    assert_eq!(a.blocks, b.blocks);
    assert_eq!(a.log, b.log);
}
