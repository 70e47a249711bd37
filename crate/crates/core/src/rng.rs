//! Seeded, splittable random streams for Monte-Carlo work.
//!
//! Every experiment draws from ChaCha8 keyed by the user seed. Work is cut
//! into fixed-size chunks and chunk `i` of a pipeline stage reads stream
//! `(stage << 40) | i`, so the numbers consumed by a chunk never depend on
//! which worker ran it or in what order chunks finished.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Recorded in output metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), stream = stage<<40 | chunk";

/// Trials per Monte-Carlo chunk.
pub const CHUNK_TRIALS: usize = 1 << 15;

/// Pipeline stages; each gets a disjoint block of streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Coefficients = 1,
    MixturePdf = 2,
    ConditionalTable = 3,
    Synthesis = 4,
    Backbone = 5,
    ModelInit = 6,
    Training = 7,
    Corpus = 8,
    Convergence = 9,
}

pub fn stream_rng(seed: u64, stage: Stage, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stage as u64) << 40) | index);
    rng
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Zero-mean Laplace draw with scale `b` by inverse CDF.
#[inline]
pub fn laplace<R: RngCore + ?Sized>(rng: &mut R, b: f64) -> f64 {
    let u = open01(rng) - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Standard normal draw (Box-Muller, one output per call).
#[inline]
pub fn std_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u1 = open01(rng);
    let u2 = open01(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Runs `f(rng, trials)` over `total` trials split into fixed chunks, and
/// returns per-chunk results in chunk order. `workers = 0` uses the global
/// rayon pool.
pub fn run_chunks<A, F>(seed: u64, stage: Stage, total: usize, workers: usize, f: F) -> Vec<A>
where
    A: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> A + Sync,
{
    let n_chunks = total.div_ceil(CHUNK_TRIALS);
    let job = || {
        (0..n_chunks)
            .into_par_iter()
            .map(|i| {
                let count = CHUNK_TRIALS.min(total - i * CHUNK_TRIALS);
                let mut rng = stream_rng(seed, stage, i as u64);
                f(&mut rng, count)
            })
            .collect()
    };
    with_workers(workers, job)
}

/// Runs `job` on a dedicated pool of `workers` threads (0 = global pool).
pub fn with_workers<R: Send>(workers: usize, job: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return job();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_are_worker_independent() {
        let run = |w| {
            run_chunks(7, Stage::MixturePdf, 100_000, w, |rng, n| {
                (0..n).map(|_| laplace(rng, 1.0)).sum::<f64>()
            })
        };
        let a = run(1);
        assert_eq!(a.len(), 4);
        assert_eq!(a, run(3));
    }

    #[test]
    fn laplace_moments() {
        let mut rng = stream_rng(1, Stage::Corpus, 0);
        let n = 400_000;
        let xs: Vec<f64> = (0..n).map(|_| laplace(&mut rng, 2.0)).collect();
        let mean_abs = xs.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        assert!((mean_abs - 2.0).abs() < 0.02);
        assert!(xs.iter().all(|x| x.is_finite()));
    }
}
