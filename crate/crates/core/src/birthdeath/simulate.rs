use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bd_heat, BiasSpec};
use crate::error::{Error, Result};
use crate::likelihood::PathMeasure;
use crate::path::{Jump, JumpPath};
use crate::sampler::SeededStream;

/// One simulated trajectory summarised by its jump count, endpoint and heat.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdSample {
    pub jumps: usize,
    pub final_state: usize,
    pub heat: f64,
}

/// Unit-rate Poisson jump times on `(0, t)`, strictly increasing.
fn poisson_times<R: Rng>(rng: &mut R, t: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let mut s = 0.0;
    loop {
        let e: f64 = rng.sample(Exp1);
        s += e;
        if s >= t {
            return times;
        }
        if let Some(&last) = times.last() {
            if s <= last {
                s = f64::next_up(last);
            }
        }
        if s <= 0.0 {
            s = f64::MIN_POSITIVE;
        }
        times.push(s);
    }
}

fn walk_step<R: Rng>(rng: &mut R, b: &BiasSpec, x: usize) -> usize {
    if x == 0 || rng.random::<f64>() < b.p(x) {
        x + 1
    } else {
        x - 1
    }
}

/// `n` heat samples from the chain started at 0, trajectory `i` drawn from
/// `SeededStream(seed, i)`.
pub fn simulate_bd(b: &BiasSpec, t: f64, n: usize, seed: u64) -> Result<Vec<BdSample>> {
    b.validate()?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = SeededStream::new(seed, i as u64).rng();
            let jumps = poisson_times(&mut rng, t).len();
            let mut x = 0;
            for _ in 0..jumps {
                x = walk_step(&mut rng, b, x);
            }
            BdSample { jumps, final_state: x, heat: bd_heat(b, x) }
        })
        .collect())
}

/// Birth–death law on paths over `[0, T]` with a geometric initial law
/// `μ(k) = (1 - ρ) ρ^k`, which charges every state.
#[derive(Clone, Debug, PartialEq)]
pub struct BirthDeathMeasure {
    bias: BiasSpec,
    horizon: f64,
    rho: f64,
}

impl BirthDeathMeasure {
    pub fn new(bias: BiasSpec, horizon: f64, rho: f64) -> Result<Self> {
        bias.validate()?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid horizon {horizon}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidDistribution(format!("geometric parameter must lie in (0, 1), got {rho}")));
        }
        Ok(Self { bias, horizon, rho })
    }

    pub fn bias(&self) -> &BiasSpec {
        &self.bias
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

impl PathMeasure for BirthDeathMeasure {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn log_initial_mass(&self, x: usize) -> f64 {
        (-self.rho).ln_1p() + x as f64 * self.rho.ln()
    }

    fn rate(&self, i: usize, j: usize, _s: f64) -> f64 {
        if j == i + 1 {
            self.bias.p(i)
        } else if i > 0 && j == i - 1 {
            self.bias.q(i)
        } else {
            0.0
        }
    }

    fn integrated_exit(&self, _i: usize, a: f64, b: f64) -> Result<f64> {
        Ok(b - a)
    }

    fn sample(&self, stream: &SeededStream) -> Result<JumpPath> {
        let mut rng = stream.rng();
        // Geometric number of failures with success probability 1 - ρ.
        let u: f64 = rng.random();
        let x0 = ((1.0 - u).ln() / self.rho.ln()).floor() as usize;
        let times = poisson_times(&mut rng, self.horizon);
        let mut x = x0;
        let jumps = times
            .into_iter()
            .map(|time| {
                x = walk_step(&mut rng, &self.bias, x);
                Jump { time, state: x }
            })
            .collect();
        JumpPath::new(x0, jumps, self.horizon)
    }
}
