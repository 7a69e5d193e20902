//! Exact trajectory generation with per-trajectory random substreams.
//!
//! Trajectory `i` of an ensemble is drawn from a ChaCha8 generator keyed by the
//! global seed and using `i` as its stream id, so every path is a pure
//! function of `(seed, i)` no matter how the work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::PathMeasure;
use crate::path::{Jump, JumpPath};
use crate::process::{ProcessMeasure, ProtocolForm, RateProtocol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededStream {
    pub seed: u64,
    pub index: u64,
}

impl SeededStream {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for an independent family of substreams, e.g. the backward ensemble.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingMethod {
    /// Per-interval inversion of the integrated exit rate (piecewise protocols only).
    Exact,
    /// Thinning against the bound `K̄ (N - 1)` on the total exit rate.
    Thinning,
}

pub(crate) fn sample_categorical<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Places a jump time strictly after `prev` and strictly before `end`.
fn nudge(time: f64, prev: f64, end: f64) -> f64 {
    let mut t = time;
    if t >= end {
        t = end.next_down();
    }
    if t <= prev {
        t = prev.next_up();
    }
    t
}

fn sample_initial<R: Rng>(m: &ProcessMeasure, rng: &mut R) -> usize {
    sample_categorical(rng, m.initial().masses().iter().copied())
}

fn sample_exact(
    protocol: &RateProtocol,
    breakpoints: &[f64],
    x0: usize,
    rng: &mut ChaCha8Rng,
) -> Result<JumpPath> {
    let horizon = protocol.horizon();
    let ProtocolForm::PiecewiseConstant { matrices, .. } = protocol.form() else {
        unreachable!("exact sampling is dispatched for piecewise protocols only");
    };
    let m = matrices.len();
    let mut state = x0;
    let mut t = 0.0;
    let mut k = 0usize;
    let mut jumps = Vec::new();
    'outer: loop {
        let mut budget: f64 = rng.sample(Exp1);
        loop {
            let end = breakpoints[k + 1];
            let lam = matrices[k].exit(state);
            let mass = lam * (end - t);
            if lam > 0.0 && mass > budget {
                let prev = jumps.last().map_or(0.0, |j: &Jump| j.time);
                let tau = nudge(t + budget / lam, prev, end);
                let mat = &matrices[k];
                let target = sample_categorical(rng, (0..mat.size()).map(|j| mat.get(state, j)));
                jumps.push(Jump { time: tau, state: target });
                state = target;
                t = tau;
                continue 'outer;
            }
            budget -= mass;
            t = end;
            k += 1;
            if k == m {
                break 'outer;
            }
        }
    }
    JumpPath::new(x0, jumps, horizon)
}

fn sample_thinning(protocol: &RateProtocol, x0: usize, rng: &mut ChaCha8Rng) -> Result<JumpPath> {
    let horizon = protocol.horizon();
    let n = protocol.states();
    let bound = protocol.rate_bound();
    let total = bound * (n - 1) as f64;
    let mut state = x0;
    let mut t = 0.0;
    let mut jumps: Vec<Jump> = Vec::new();
    loop {
        let dt: f64 = rng.sample(Exp1);
        t += dt / total;
        if t >= horizon {
            break;
        }
        let mut candidate = rng.random_range(0..n - 1);
        if candidate >= state {
            candidate += 1;
        }
        let k = protocol.rate(state, candidate, t);
        if k > bound {
            return Err(Error::ThinningBound { rate: k, bound, time: t });
        }
        if rng.random::<f64>() * bound < k {
            let prev = jumps.last().map_or(0.0, |j| j.time);
            let tau = nudge(t, prev, horizon);
            jumps.push(Jump { time: tau, state: candidate });
            state = candidate;
            t = tau;
        }
    }
    JumpPath::new(x0, jumps, horizon)
}

/// Draws one path from `m`: exact inversion for piecewise protocols, thinning
/// for functional ones.
pub fn sample_path(m: &ProcessMeasure, stream: &SeededStream) -> Result<JumpPath> {
    let method = if m.protocol().is_piecewise_constant() {
        SamplingMethod::Exact
    } else {
        SamplingMethod::Thinning
    };
    sample_path_with(m, stream, method)
}

pub fn sample_path_with(m: &ProcessMeasure, stream: &SeededStream, method: SamplingMethod) -> Result<JumpPath> {
    let mut rng = stream.rng();
    let x0 = sample_initial(m, &mut rng);
    match (method, m.protocol().breakpoints()) {
        (SamplingMethod::Exact, Some(b)) => sample_exact(m.protocol(), b, x0, &mut rng),
        (SamplingMethod::Exact, None) => Err(Error::InvalidArgument(
            "exact sampling requires a piecewise-constant protocol".into(),
        )),
        (SamplingMethod::Thinning, _) => sample_thinning(m.protocol(), x0, &mut rng),
    }
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// `n` paths, path `i` drawn from `SeededStream(seed, i)`.
pub fn sample_ensemble<M: PathMeasure + ?Sized>(m: &M, n: usize, seed: u64) -> Result<Vec<JumpPath>> {
    if n == 0 {
        return Err(Error::InvalidArgument("ensemble size must be at least 1".into()));
    }
    let results: Vec<Result<JumpPath>> = (0..n)
        .into_par_iter()
        .map(|i| m.sample(&SeededStream::new(seed, i as u64)))
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Sample { index, source: Box::new(e) }))
        .collect()
}

pub fn sample_ensemble_with_workers<M: PathMeasure + ?Sized>(
    m: &M,
    n: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<JumpPath>> {
    with_workers(workers, || sample_ensemble(m, n, seed))?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{InitialDistribution, RateFn, RateMatrix};
    use std::sync::Arc;

    fn unit_chain(horizon: f64) -> ProcessMeasure {
        let p = RateProtocol::constant(
            RateMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            horizon,
        )
        .unwrap();
        ProcessMeasure::finite(p, InitialDistribution::dirac(2, 0).unwrap()).unwrap()
    }

    #[test]
    fn same_stream_same_path() {
        let m = unit_chain(3.0);
        let s = SeededStream::new(17, 5);
        assert_eq!(sample_path(&m, &s).unwrap(), sample_path(&m, &s).unwrap());
        assert_ne!(
            sample_path(&m, &SeededStream::new(17, 6)).unwrap(),
            sample_path(&m, &s).unwrap()
        );
    }

    #[test]
    fn ensemble_member_matches_single_draw() {
        let m = unit_chain(2.0);
        let batch = sample_ensemble(&m, 20, 99).unwrap();
        assert_eq!(batch[7], sample_path(&m, &SeededStream::new(99, 7)).unwrap());
    }

    #[test]
    fn worker_count_does_not_change_the_ensemble() {
        let m = unit_chain(2.0);
        let one = sample_ensemble_with_workers(&m, 500, 3, Some(1)).unwrap();
        let eight = sample_ensemble_with_workers(&m, 500, 3, Some(8)).unwrap();
        assert_eq!(one, eight);
    }

    #[test]
    fn thinning_rejects_a_false_bound() {
        // Bound is declared large enough for the validation grid but the true
        // rate spikes between grid points.
        let rate: RateFn = Arc::new(|_, _, s: f64| {
            if (s - (0.5 + 0.5 / 256.0)).abs() < 1e-3 { 50.0 } else { 1.0 }
        });
        let p = RateProtocol::functional(2, 1.0, rate, 1.0).unwrap();
        let m = ProcessMeasure::finite(p, InitialDistribution::uniform(2).unwrap()).unwrap();
        let mut saw_error = false;
        for i in 0..20_000 {
            if let Err(Error::ThinningBound { .. }) = sample_path(&m, &SeededStream::new(1, i)) {
                saw_error = true;
                break;
            }
        }
        assert!(saw_error);
    }

    #[test]
    fn nudge_keeps_times_inside() {
        assert!(nudge(1.0, 0.5, 1.0) < 1.0);
        assert!(nudge(0.5, 0.5, 1.0) > 0.5);
        assert_eq!(nudge(0.7, 0.5, 1.0), 0.7);
    }
}
