//! Birth–death chains on the nonnegative integers with unit exit rate, the
//! MGF of their heat by series summation, and divergence diagnostics.
//!
//! With `p_j + q_j = 1` the jump times form a unit-rate Poisson process, so
//! `M(λ,t) = Σ_n e^{-t} t^n / n! · E[e^{λ h(X_n)}]` where `X_n` is the
//! embedded walk after `n` steps and `h(k)` the heat released on reaching `k`.

mod simulate;

pub use simulate::{simulate_bd, BdSample, BirthDeathMeasure};

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_add_exp;

/// Largest truncation accepted by the series routines.
pub const N_MAX_CAP: usize = 10_000;
/// Relative tail size below which a truncated sum counts as converged.
pub const TAIL_TOL: f64 = 1e-8;
/// Number of trailing term ratios inspected by the ratio diagnostics.
const RATIO_WINDOW: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BiasSpec {
    /// `p_j / q_j = α` for `j ≥ 1`.
    Constant(f64),
    /// `p_j / q_j = 2^j`.
    Strong,
    /// `p_j / q_j = j`.
    Linear,
    /// `p_1, p_2, ...`; the last entry repeats forever.
    Custom(Vec<f64>),
}

impl BiasSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            BiasSpec::Constant(a) if !(a.is_finite() && *a > 1.0) => {
                Err(Error::InvalidBias(format!("constant bias needs α > 1, got {a}")))
            }
            BiasSpec::Custom(t) if t.is_empty() => Err(Error::InvalidBias("empty custom table".into())),
            BiasSpec::Custom(t) => match t.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
                Some(p) => Err(Error::InvalidBias(format!("custom p_j = {p} outside (0, 1)"))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// `log p_j`.
    pub fn log_p(&self, j: usize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        match self {
            BiasSpec::Constant(a) => (a / (a + 1.0)).ln(),
            BiasSpec::Strong => -strong_ln1p(j),
            BiasSpec::Linear => (j as f64).ln() - (j as f64 + 1.0).ln(),
            BiasSpec::Custom(t) => t[(j - 1).min(t.len() - 1)].ln(),
        }
    }

    /// `log q_j`; `-inf` at `j = 0`.
    pub fn log_q(&self, j: usize) -> f64 {
        if j == 0 {
            return f64::NEG_INFINITY;
        }
        match self {
            BiasSpec::Constant(a) => -(a + 1.0).ln(),
            BiasSpec::Strong => -(j as f64) * LN_2 - strong_ln1p(j),
            BiasSpec::Linear => -(j as f64 + 1.0).ln(),
            BiasSpec::Custom(t) => (-t[(j - 1).min(t.len() - 1)]).ln_1p(),
        }
    }

    pub fn p(&self, j: usize) -> f64 {
        self.log_p(j).exp()
    }

    pub fn q(&self, j: usize) -> f64 {
        self.log_q(j).exp()
    }

    /// Whether every heat increment `log p_j / q_{j+1}` is nonnegative, so
    /// that `e^{λ h} ≤ 1` for `λ ≤ 0`.
    fn rightward(&self) -> bool {
        match self {
            BiasSpec::Custom(t) => (0..=t.len() + 1).all(|j| self.log_p(j) >= self.log_q(j + 1)),
            _ => true,
        }
    }
}

/// `ln(1 + 2^{-j})`.
fn strong_ln1p(j: usize) -> f64 {
    (-(j as f64) * LN_2).exp().ln_1p()
}

/// Rate tables `p_j`, `q_j` for `j = 0..=max_state`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdRates {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

pub fn bd_protocol(b: &BiasSpec, max_state: usize) -> Result<BdRates> {
    b.validate()?;
    Ok(BdRates {
        p: (0..=max_state).map(|j| b.p(j)).collect(),
        q: (0..=max_state).map(|j| b.q(j)).collect(),
    })
}

/// `Q(0,t) = Σ_{j<k} log(p_j / q_{j+1})` for final state `k`.
pub fn bd_heat(b: &BiasSpec, k: usize) -> f64 {
    (0..k).map(|j| b.log_p(j) - b.log_q(j + 1)).sum()
}

fn heat_table(b: &BiasSpec, kmax: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(kmax + 1);
    let mut acc = 0.0;
    h.push(0.0);
    for j in 0..kmax {
        acc += b.log_p(j) - b.log_q(j + 1);
        h.push(acc);
    }
    h
}

/// `ln n!` for `n = 0..=n_max`.
fn log_factorials(n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for n in 1..=n_max {
        acc += (n as f64).ln();
        out.push(acc);
    }
    out
}

fn log_poisson(mu: f64, n: usize, log_fact: f64) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -mu + n as f64 * mu.ln() - log_fact
}

/// `log P(Poisson(μ) > n)` bounded by a geometric majorant; `0` when no
/// better bound than 1 is available.
fn log_poisson_tail(mu: f64, n: usize) -> f64 {
    let m = (n + 1) as f64;
    if m + 1.0 <= mu {
        return 0.0;
    }
    let log_fact: f64 = (1..=n + 1).map(|k| (k as f64).ln()).sum();
    let first = log_poisson(mu, n + 1, log_fact);
    (first - (-mu / (m + 1.0)).ln_1p()).min(0.0)
}

/// Truncated MGF series of the heat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfSeries {
    pub lambda: f64,
    pub t: f64,
    pub n_max: usize,
    /// `log` of the `n`-th term, `n = 0..=n_max`.
    pub terms_log: Vec<f64>,
    /// `log` of the partial sum through term `n`.
    pub partial_sums_log: Vec<f64>,
    pub partial_sum_log: f64,
    /// `log` of a rigorous bound on the omitted tail, when one is available.
    pub tail_bound_log: Option<f64>,
    pub converged: bool,
    /// Largest `|Σ_k w_n(k) - 1|` seen in the embedded-walk recursion.
    pub dp_mass_error: f64,
}

impl MgfSeries {
    /// `log(term_n / term_{n-1})` for `n = 1..=n_max`.
    pub fn term_ratios_log(&self) -> Vec<f64> {
        self.terms_log.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Tail relative to the sum, in log space.
    pub fn relative_tail_log(&self) -> Option<f64> {
        self.tail_bound_log.map(|t| t - self.partial_sum_log)
    }
}

fn ratios_decay(ratios: &[f64]) -> bool {
    if ratios.len() < RATIO_WINDOW {
        return false;
    }
    let tail = &ratios[ratios.len() - RATIO_WINDOW..];
    tail.iter().all(|&r| r < 0.0) && tail.windows(2).all(|w| w[1] <= w[0])
}

/// `Σ_{n ≤ N_max} e^{-t} t^n/n! Σ_k w_n(k) e^{λ h(k)}`, including `k = 0`.
pub fn bd_mgf_truncated(b: &BiasSpec, lambda: f64, t: f64, n_max: usize) -> Result<MgfSeries> {
    b.validate()?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda {lambda} is not finite")));
    }
    if n_max == 0 || n_max > N_MAX_CAP {
        return Err(Error::InvalidArgument(format!("N_max must lie in 1..={N_MAX_CAP}, got {n_max}")));
    }
    let h = heat_table(b, n_max + 1);
    let log_p: Vec<f64> = (0..=n_max + 1).map(|j| b.log_p(j)).collect();
    let log_q: Vec<f64> = (0..=n_max + 1).map(|j| b.log_q(j)).collect();
    let log_fact = log_factorials(n_max);

    let mut w = vec![f64::NEG_INFINITY; n_max + 2];
    w[0] = 0.0;
    let mut next = w.clone();
    let mut terms_log = Vec::with_capacity(n_max + 1);
    let mut partial_sums_log = Vec::with_capacity(n_max + 1);
    let mut acc = f64::NEG_INFINITY;
    let mut dp_mass_error: f64 = 0.0;
    for n in 0..=n_max {
        if n > 0 {
            for k in 0..=n {
                let up = if k > 0 { w[k - 1] + log_p[k - 1] } else { f64::NEG_INFINITY };
                let down = w[k + 1] + log_q[k + 1];
                next[k] = log_add_exp(up, down);
            }
            std::mem::swap(&mut w, &mut next);
        }
        let mut mass = f64::NEG_INFINITY;
        let mut inner = f64::NEG_INFINITY;
        for k in (n % 2..=n).step_by(2) {
            mass = log_add_exp(mass, w[k]);
            inner = log_add_exp(inner, w[k] + lambda * h[k]);
        }
        dp_mass_error = dp_mass_error.max(mass.exp_m1().abs());
        let term = log_poisson(t, n, log_fact[n]) + inner;
        terms_log.push(term);
        acc = log_add_exp(acc, term);
        partial_sums_log.push(acc);
    }

    let tail_bound_log = match b {
        _ if lambda <= 0.0 && b.rightward() => Some(log_poisson_tail(t, n_max)),
        BiasSpec::Constant(a) if lambda > 0.0 => {
            let mu = t * a.powf(lambda);
            let prefactor = lambda * ((a + 1.0) / a).ln();
            Some(prefactor + (mu - t) + log_poisson_tail(mu, n_max))
        }
        _ => None,
    };
    let ratios: Vec<f64> = terms_log.windows(2).map(|w| w[1] - w[0]).collect();
    let converged = match tail_bound_log {
        Some(tail) => tail - acc <= TAIL_TOL.ln(),
        None => ratios_decay(&ratios),
    };
    Ok(MgfSeries {
        lambda,
        t,
        n_max,
        terms_log,
        partial_sums_log,
        partial_sum_log: acc,
        tail_bound_log,
        converged,
        dp_mass_error,
    })
}

/// Smallest power-of-two truncation (from 64) whose tail bound certifies
/// convergence, or the cap.
pub fn bd_mgf_auto(b: &BiasSpec, lambda: f64, t: f64) -> Result<MgfSeries> {
    let mut n = 64;
    loop {
        let s = bd_mgf_truncated(b, lambda, t, n)?;
        if s.converged || n == N_MAX_CAP {
            return Ok(s);
        }
        n = (n * 2).min(N_MAX_CAP);
    }
}

/// Finite-time free-energy estimate `(1/t) log M(λ,t)` for constant bias,
/// with the two analytic bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergy {
    pub lambda: f64,
    pub t: f64,
    pub n_max: usize,
    pub partial_sum_log: f64,
    pub tail_bound_log: Option<f64>,
    pub converged: bool,
    /// `α^{1+λ}/(α+1) - 1`.
    pub lower_bound: f64,
    /// `(α+1)^λ - 1`.
    pub upper_bound: f64,
    pub estimate: f64,
    /// Whether the tail is below `TAIL_TOL` of the sum.
    pub reliable: bool,
    pub inside_bounds: bool,
}

pub fn constant_bias_bounds(alpha: f64, lambda: f64) -> (f64, f64) {
    (alpha.powf(1.0 + lambda) / (alpha + 1.0) - 1.0, (alpha + 1.0).powf(lambda) - 1.0)
}

/// `n_max = None` picks the truncation automatically.
pub fn bd_free_energy(b: &BiasSpec, lambda: f64, t: f64, n_max: Option<usize>) -> Result<FreeEnergy> {
    let BiasSpec::Constant(alpha) = *b else {
        return Err(Error::InvalidBias("free-energy bounds are available for constant bias only".into()));
    };
    let s = match n_max {
        Some(n) => bd_mgf_truncated(b, lambda, t, n)?,
        None => bd_mgf_auto(b, lambda, t)?,
    };
    let (lower_bound, upper_bound) = constant_bias_bounds(alpha, lambda);
    let estimate = s.partial_sum_log / t;
    Ok(FreeEnergy {
        lambda,
        t,
        n_max: s.n_max,
        partial_sum_log: s.partial_sum_log,
        tail_bound_log: s.tail_bound_log,
        converged: s.converged,
        lower_bound,
        upper_bound,
        estimate,
        reliable: s.converged,
        inside_bounds: lower_bound < estimate && estimate < upper_bound,
    })
}

pub const BD_CSV_HEADER: &str =
    "lambda,t,N_max,partial_sum_log,tail_bound_log,converged,lower_bound,upper_bound,estimate";

impl FreeEnergy {
    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{:?},{},{:?},{:?},{},{:?},{:?},{:?}",
            self.lambda,
            self.t,
            self.n_max,
            self.partial_sum_log,
            self.tail_bound_log.unwrap_or(f64::NAN),
            self.converged,
            self.lower_bound,
            self.upper_bound,
            self.estimate
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesVerdict {
    Divergent,
    Convergent,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceScan {
    pub lambda: f64,
    pub t: f64,
    pub n_list: Vec<usize>,
    /// `log` of the partial sum at each entry of `n_list`.
    pub partial_sums_log: Vec<f64>,
    /// `log10` of the growth factor between consecutive entries of `n_list`.
    pub growth_log10: Vec<f64>,
    /// `log(term_n / term_{n-1})` for `n = 1..=max(n_list)`.
    pub term_ratios_log: Vec<f64>,
    /// First `n` from which every term ratio exceeds 1 and keeps increasing.
    pub divergence_onset: Option<usize>,
    /// Strong bias only: `log` of the partial sums of the lower-bound series
    /// `Σ e^{-t} t^n Π_{k≤n} 2^k/(2^k+1) Π_{j≤n} 2^{λj}/j` at each entry of `n_list`.
    pub lower_series_log: Option<Vec<f64>>,
    pub tail_bound_log: Option<f64>,
    pub verdict: SeriesVerdict,
    pub eta: EtaProduct,
}

impl DivergenceScan {
    pub fn converged(&self) -> bool {
        self.verdict == SeriesVerdict::Convergent
    }

    pub fn csv_row(&self, i: usize) -> String {
        format!(
            "{:?},{:?},{},{:?},{:?},{},,,",
            self.lambda,
            self.t,
            self.n_list[i],
            self.partial_sums_log[i],
            self.tail_bound_log.unwrap_or(f64::NAN),
            self.converged()
        )
    }
}

/// Partial products of `η = Π_{k≥0} 2^k/(2^k+1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaProduct {
    /// `η_K` for `K = 0..=80`.
    pub partials: Vec<f64>,
    pub value: f64,
    /// `|η_80 - η_60|`.
    pub stability: f64,
}

pub fn eta_product() -> EtaProduct {
    let mut log_eta = 0.0;
    let partials: Vec<f64> = (0..=80)
        .map(|k| {
            log_eta -= strong_ln1p(k);
            log_eta.exp()
        })
        .collect();
    EtaProduct { value: partials[80], stability: (partials[80] - partials[60]).abs(), partials }
}

fn divergence_onset(ratios: &[f64]) -> Option<usize> {
    // ratios[i] is log(term_{i+1}/term_i)
    let mut onset = None;
    for i in (0..ratios.len()).rev() {
        let ok = ratios[i] > 0.0 && (i + 1 == ratios.len() || ratios[i + 1] > ratios[i]);
        if ok {
            onset = Some(i + 1);
        } else {
            break;
        }
    }
    onset.filter(|&n| ratios.len() + 1 - n >= RATIO_WINDOW)
}

fn strong_lower_series(lambda: f64, t: f64, n_list: &[usize]) -> Vec<f64> {
    let n_top = *n_list.iter().max().unwrap_or(&0);
    let mut term = -t; // n = 0
    let mut acc = term;
    let mut sums = Vec::with_capacity(n_top + 1);
    sums.push(acc);
    for n in 1..=n_top {
        let j = n as f64;
        term += t.ln() - strong_ln1p(n) + lambda * j * LN_2 - j.ln();
        acc = log_add_exp(acc, term);
        sums.push(acc);
    }
    n_list.iter().map(|&n| sums[n]).collect()
}

/// Partial sums of the MGF series at each `N` in `n_list`, with term-ratio
/// diagnostics and a divergence or convergence certificate.
pub fn bd_divergence_scan(b: &BiasSpec, lambda: f64, t: f64, n_list: &[usize]) -> Result<DivergenceScan> {
    let n_top = *n_list
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidArgument("empty N list".into()))?;
    let s = bd_mgf_truncated(b, lambda, t, n_top)?;
    let partial_sums_log: Vec<f64> = n_list.iter().map(|&n| s.partial_sums_log[n]).collect();
    let growth_log10 = partial_sums_log
        .windows(2)
        .map(|w| (w[1] - w[0]) / std::f64::consts::LN_10)
        .collect();
    let ratios = s.term_ratios_log();
    let onset = if lambda > 0.0 { divergence_onset(&ratios) } else { None };
    let verdict = if onset.is_some() {
        SeriesVerdict::Divergent
    } else if s.converged {
        SeriesVerdict::Convergent
    } else {
        SeriesVerdict::Undetermined
    };
    let lower_series_log = matches!(b, BiasSpec::Strong).then(|| strong_lower_series(lambda, t, n_list));
    Ok(DivergenceScan {
        lambda,
        t,
        n_list: n_list.to_vec(),
        partial_sums_log,
        growth_log10,
        term_ratios_log: ratios,
        divergence_onset: onset,
        lower_series_log,
        tail_bound_log: s.tail_bound_log,
        verdict,
        eta: eta_product(),
    })
}
