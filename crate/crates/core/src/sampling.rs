//! Seeded, order-independent sample fan-out.
//!
//! Sample `i` always draws from its own ChaCha stream, so the merged result
//! does not depend on how samples are split across worker threads.

use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::report::CheckResult;

/// Env var capping the number of sampling threads.
pub const THREADS_ENV: &str = "INVALG_THREADS";

#[derive(Clone, Copy, Debug)]
pub struct Check {
    pub name: &'static str,
    pub tolerance: f64,
}

impl Check {
    pub const fn new(name: &'static str, tolerance: f64) -> Self {
        Check { name, tolerance }
    }
}

/// Residuals of one sample, aligned with the check list, plus a printable
/// form of the input.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub residuals: Vec<f64>,
    pub input: String,
}

impl Outcome {
    /// A sample that could not be evaluated: every check sees an infinite
    /// residual.
    pub fn failed(n: usize, input: String) -> Self {
        Outcome {
            residuals: vec![f64::INFINITY; n],
            input,
        }
    }
}

pub fn rng_for(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn worker_count() -> usize {
    let available = thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => n.min(available.max(1)),
        _ => available,
    }
}

fn rank(x: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        x
    }
}

#[derive(Clone)]
struct Worst {
    residual: f64,
    index: usize,
    input: Option<String>,
}

/// Evaluates `f` on `samples` seeded streams and keeps the largest residual
/// per check. Ties go to the lowest sample index. Zero samples yield no
/// checks at all.
pub fn run<F>(samples: usize, seed: u64, checks: &[Check], f: F) -> Vec<CheckResult>
where
    F: Fn(&mut ChaCha8Rng) -> Outcome + Sync,
{
    if samples == 0 {
        return Vec::new();
    }
    let workers = worker_count().min(samples).max(1);
    let chunk = samples.div_ceil(workers);
    let n = checks.len();

    let eval_range = |lo: usize, hi: usize| -> Vec<Worst> {
        let mut worst = vec![
            Worst {
                residual: 0.0,
                index: usize::MAX,
                input: None
            };
            n
        ];
        for i in lo..hi {
            let mut rng = rng_for(seed, i);
            let out = f(&mut rng);
            for (k, w) in worst.iter_mut().enumerate() {
                let r = out.residuals.get(k).copied().unwrap_or(f64::NAN);
                if w.input.is_none() || rank(r) > rank(w.residual) {
                    *w = Worst {
                        residual: r,
                        index: i,
                        input: Some(out.input.clone()),
                    };
                }
            }
        }
        worst
    };

    let partials: Vec<Vec<Worst>> = if workers == 1 {
        vec![eval_range(0, samples)]
    } else {
        thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let lo = w * chunk;
                    let hi = ((w + 1) * chunk).min(samples);
                    let eval = &eval_range;
                    s.spawn(move || eval(lo, hi))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sampling worker panicked"))
                .collect()
        })
    };

    checks
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut best: Option<&Worst> = None;
            for p in &partials {
                let w = &p[k];
                if w.input.is_none() {
                    continue;
                }
                best = match best {
                    None => Some(w),
                    Some(b) if rank(w.residual) > rank(b.residual) => Some(w),
                    Some(b) if rank(w.residual) == rank(b.residual) && w.index < b.index => Some(w),
                    keep => keep,
                };
            }
            let b = best.expect("at least one sample");
            CheckResult::new(c.name, samples, seed, b.residual, c.tolerance)
                .with_input(format!("sample {}: {}", b.index, b.input.clone().unwrap_or_default()))
        })
        .collect()
}
