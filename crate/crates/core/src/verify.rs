//! Monte-Carlo checks of the MGF symmetry, the integral identity and the
//! distributional symmetry of log-likelihood ratios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{PairKind, PathMeasure, Score, ScorePair};
use crate::sampler::{derive_seed, SeededStream};

/// Number of batches for batch-means standard errors.
pub const BATCHES: usize = 20;
/// Agreement threshold in standard errors.
pub const SE_THRESHOLD: f64 = 3.0;
/// Bins need this many samples in both ensembles to be scored.
pub const MIN_BIN_COUNT: usize = 25;
/// Fraction of scored bins that must agree.
pub const BIN_PASS_FRACTION: f64 = 0.95;
/// Fraction of the pooled sample covered by the histogram range.
pub const CENTRAL_MASS: f64 = 0.995;
pub const MIN_SAMPLES: usize = 1000;
/// Upper limit on the number of histogram bins.
pub const MAX_BINS: usize = 2000;
/// Absolute agreement floor, so that exact ties with zero variance are not
/// failed by rounding noise.
pub const ABS_FLOOR: f64 = 1e-12;
/// Narrowest histogram bin. Spreads below this are rounding noise around a
/// single value and are binned together.
pub const MIN_BIN_WIDTH: f64 = 1e-9;

const BACKWARD_TAG: u64 = 0xB4C6_3A9D;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Scores of `n` forward paths under `P` and `n` backward paths under `Q`.
#[derive(Clone, Debug)]
pub struct ScoreSamples {
    pub forward: Vec<Score>,
    pub backward: Vec<Score>,
}

/// Seed of the backward ensemble derived from the run seed.
pub fn backward_seed(seed: u64) -> u64 {
    derive_seed(seed, BACKWARD_TAG)
}

fn scores_of<M, F>(m: &M, n: usize, seed: u64, f: F) -> Result<Vec<Score>>
where
    M: PathMeasure,
    F: Fn(&crate::path::JumpPath) -> Result<Score> + Sync,
{
    let out: Vec<Result<Score>> = (0..n)
        .into_par_iter()
        .map(|i| m.sample(&SeededStream::new(seed, i as u64)).and_then(|w| f(&w)))
        .collect();
    out.into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Sample { index, source: Box::new(e) }))
        .collect()
}

pub fn sample_scores<M: PathMeasure>(pair: &ScorePair<M>, n: usize, seed: u64) -> Result<ScoreSamples> {
    if n < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {n}")));
    }
    let forward = scores_of(&pair.p, n, seed, |w| pair.forward(w))?;
    let backward = scores_of(&pair.q, n, backward_seed(seed), |w| pair.backward(w))?;
    Ok(ScoreSamples { forward, backward })
}

/// Mean of `exp(v_i)` with a batch-means standard error and the largest
/// summand's share of the total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpMean {
    pub mean: f64,
    /// `log mean`, finite even when `mean` under- or overflows.
    pub log_mean: f64,
    pub se: f64,
    pub max_share: f64,
}

fn batch_bounds(n: usize, b: usize) -> (usize, usize) {
    (b * n / BATCHES, (b + 1) * n / BATCHES)
}

pub fn exp_mean(v: &[f64]) -> ExpMean {
    let n = v.len();
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if n == 0 || top == f64::NEG_INFINITY {
        return ExpMean { mean: 0.0, log_mean: f64::NEG_INFINITY, se: 0.0, max_share: 0.0 };
    }
    if top == f64::INFINITY {
        return ExpMean { mean: f64::INFINITY, log_mean: f64::INFINITY, se: f64::INFINITY, max_share: 1.0 };
    }
    let scaled: Vec<f64> = v.iter().map(|x| (x - top).exp()).collect();
    let total: f64 = scaled.iter().sum();
    let mean = top.exp() * (total / n as f64);
    let max_share = 1.0 / total;
    let se = if n >= BATCHES {
        let means: Vec<f64> = (0..BATCHES)
            .map(|b| {
                let (lo, hi) = batch_bounds(n, b);
                scaled[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            })
            .collect();
        let m = means.iter().sum::<f64>() / BATCHES as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
        top.exp() * (var / BATCHES as f64).sqrt()
    } else {
        f64::INFINITY
    };
    ExpMean { mean, log_mean: top + (total / n as f64).ln(), se, max_share }
}

fn agrees(a: f64, a_se: f64, b: f64, b_se: f64) -> bool {
    (a - b).abs() <= (SE_THRESHOLD * a_se.hypot(b_se)).max(ABS_FLOOR)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfPoint {
    pub lambda: f64,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub pass: bool,
    /// Set for λ outside `[-1, 0]`, where the identity is not guaranteed.
    pub outside_strip: bool,
    pub lhs_max_share: f64,
    pub rhs_max_share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfGrid {
    pub n: usize,
    pub seed: u64,
    pub points: Vec<MgfPoint>,
    pub pass: bool,
}

fn check_grid(lambdas: &[f64], allow_outside: bool) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    for &l in lambdas {
        if !l.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda {l} is not finite")));
        }
        if !(-1.0..=0.0).contains(&l) && !allow_outside {
            return Err(Error::InvalidArgument(format!(
                "lambda {l} outside [-1, 0]; enable out-of-strip probing to evaluate it"
            )));
        }
    }
    Ok(())
}

/// `E_P[e^{λ S_P}]` against `E_Q[e^{-(1+λ) S_Q}]` on `lambdas`.
pub fn mgf_from_scores(samples: &ScoreSamples, lambdas: &[f64], seed: u64, allow_outside: bool) -> Result<MgfGrid> {
    check_grid(lambdas, allow_outside)?;
    let points: Vec<MgfPoint> = lambdas
        .iter()
        .map(|&lambda| {
            let l: Vec<f64> = samples.forward.iter().map(|s| lambda * s.value).collect();
            let r: Vec<f64> = samples.backward.iter().map(|s| -(1.0 + lambda) * s.value).collect();
            let (lhs, rhs) = (exp_mean(&l), exp_mean(&r));
            MgfPoint {
                lambda,
                lhs: lhs.mean,
                lhs_se: lhs.se,
                rhs: rhs.mean,
                rhs_se: rhs.se,
                pass: agrees(lhs.mean, lhs.se, rhs.mean, rhs.se),
                outside_strip: !(-1.0..=0.0).contains(&lambda),
                lhs_max_share: lhs.max_share,
                rhs_max_share: rhs.max_share,
            }
        })
        .collect();
    // Out-of-strip points are diagnostics; only guaranteed points decide.
    let pass = points.iter().filter(|p| !p.outside_strip).all(|p| p.pass);
    Ok(MgfGrid { n: samples.forward.len(), seed, points, pass })
}

pub fn estimate_mgf_pair<M: PathMeasure>(
    pair: &ScorePair<M>,
    lambdas: &[f64],
    n: usize,
    seed: u64,
    allow_outside: bool,
) -> Result<MgfGrid> {
    check_grid(lambdas, allow_outside)?;
    let samples = sample_scores(pair, n, seed)?;
    mgf_from_scores(&samples, lambdas, seed, allow_outside)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralReport {
    pub estimate: f64,
    pub se: f64,
    pub max_share: f64,
    pub pass: bool,
}

pub fn integral_from_scores(forward: &[Score]) -> IntegralReport {
    let v: Vec<f64> = forward.iter().map(|s| -s.value).collect();
    let m = exp_mean(&v);
    IntegralReport { estimate: m.mean, se: m.se, max_share: m.max_share, pass: agrees(m.mean, m.se, 1.0, 0.0) }
}

/// `E_P[e^{-S_P}]`, which equals 1.
pub fn integral_ft_check<M: PathMeasure>(pair: &ScorePair<M>, n: usize, seed: u64) -> Result<IntegralReport> {
    if n < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {n}")));
    }
    let forward = scores_of(&pair.p, n, seed, |w| pair.forward(w))?;
    Ok(integral_from_scores(&forward))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Functional {
    /// `S_P` of a BC1 pair.
    Entropy,
    /// `S_P` of a BC2 pair.
    Work,
    /// The current component alone.
    Heat,
}

impl Functional {
    fn extract(self, s: &Score) -> f64 {
        match self {
            Functional::Entropy | Functional::Work => s.value,
            Functional::Heat => s.current,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioBin {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    pub count_f: usize,
    pub count_g: usize,
    /// `log(dF̂/dĜ)` over the bin.
    pub log_ratio: f64,
    /// `log E_G[e^x | bin]`: the value the bin ratio takes when `dF/dG = e^x`.
    pub x_eff: f64,
    pub se: f64,
    /// `|log_ratio - center|`.
    pub deviation_center: f64,
    /// `|log_ratio - x_eff|`.
    pub deviation: f64,
    pub scored: bool,
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub functional: Functional,
    pub n_forward: usize,
    pub n_backward: usize,
    pub bin_width: f64,
    pub bins: Vec<RatioBin>,
    pub scored_bins: usize,
    pub agreeing_bins: usize,
    pub verdict: Verdict,
    /// Mean signed deviation `log_ratio - x_eff` over failing bins with
    /// `x > 0` and with `x < 0`.
    pub upper_tail_excess: Option<f64>,
    pub lower_tail_excess: Option<f64>,
    pub direction: Option<String>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Freedman–Diaconis histogram over the central `CENTRAL_MASS` of the pooled
/// sample. Returns `(edges, width)`.
pub fn fd_edges(f: &[f64], g: &[f64]) -> (Vec<f64>, f64) {
    central_edges(f, g, None)
}

/// Equal-width bins over the central range; `bins = None` picks the count by
/// the Freedman–Diaconis rule.
pub fn central_edges(f: &[f64], g: &[f64], bins: Option<usize>) -> (Vec<f64>, f64) {
    let mut pooled: Vec<f64> = f.iter().chain(g).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let tail = (1.0 - CENTRAL_MASS) / 2.0;
    let lo = quantile(&pooled, tail);
    let hi = quantile(&pooled, 1.0 - tail);
    let iqr = quantile(&pooled, 0.75) - quantile(&pooled, 0.25);
    let width = (2.0 * iqr / (pooled.len() as f64).cbrt()).max(MIN_BIN_WIDTH);
    if !(hi - lo > MIN_BIN_WIDTH) {
        let pad = lo.abs().max(1.0) * 1e-9;
        return (vec![lo - pad, hi + pad], hi - lo + 2.0 * pad);
    }
    let count = match bins {
        Some(k) => k.clamp(1, MAX_BINS),
        None => (((hi - lo) / width).ceil() as usize).clamp(1, MAX_BINS),
    };
    let width = (hi - lo) / count as f64;
    let edges = (0..=count).map(|k| if k == count { hi } else { lo + width * k as f64 }).collect();
    (edges, width)
}

fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    let m = edges.len() - 1;
    if x < edges[0] || x > edges[m] {
        return None;
    }
    Some(edges.partition_point(|&e| e <= x).saturating_sub(1).min(m - 1))
}

/// Compares the histogram of `f` (forward values) with the histogram of `g`
/// (negated backward values) against the identity `dF/dG(x) = e^x`.
pub fn ratio_test(functional: Functional, f: &[f64], g: &[f64]) -> RatioReport {
    ratio_test_binned(functional, f, g, None)
}

pub fn ratio_test_binned(functional: Functional, f: &[f64], g: &[f64], bins: Option<usize>) -> RatioReport {
    let (edges, width) = central_edges(f, g, bins);
    let m = edges.len() - 1;
    let mut cf = vec![0usize; m];
    let mut g_in: Vec<Vec<f64>> = vec![Vec::new(); m];
    for &x in f {
        if let Some(b) = bin_of(&edges, x) {
            cf[b] += 1;
        }
    }
    for &x in g {
        if let Some(b) = bin_of(&edges, x) {
            g_in[b].push(x);
        }
    }
    let (nf, ng) = (f.len() as f64, g.len() as f64);
    let mut bins = Vec::with_capacity(m);
    for b in 0..m {
        let (a, c) = (cf[b], g_in[b].len());
        let center = 0.5 * (edges[b] + edges[b + 1]);
        let scored = a >= MIN_BIN_COUNT && c >= MIN_BIN_COUNT;
        let (mut log_ratio, mut x_eff, mut se) = (f64::NAN, f64::NAN, f64::NAN);
        if a > 0 && c > 0 {
            let (pf, pg) = (a as f64 / nf, c as f64 / ng);
            log_ratio = pf.ln() - pg.ln();
            let top = g_in[b].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = g_in[b].iter().map(|x| (x - top).exp()).collect();
            let mean_w = w.iter().sum::<f64>() / c as f64;
            x_eff = top + mean_w.ln();
            let var_w = if c > 1 {
                w.iter().map(|v| (v - mean_w).powi(2)).sum::<f64>() / (c - 1) as f64
            } else {
                0.0
            };
            let var_ratio = (1.0 - pf) / a as f64 + (1.0 - pg) / c as f64;
            let var_eff = var_w / (c as f64 * mean_w * mean_w);
            se = (var_ratio + var_eff).sqrt();
        }
        let deviation = (log_ratio - x_eff).abs();
        bins.push(RatioBin {
            lo: edges[b],
            hi: edges[b + 1],
            center,
            count_f: a,
            count_g: c,
            log_ratio,
            x_eff,
            se,
            deviation_center: (log_ratio - center).abs(),
            deviation,
            scored,
            within: scored && deviation <= (SE_THRESHOLD * se).max(ABS_FLOOR),
        });
    }
    let scored_bins = bins.iter().filter(|b| b.scored).count();
    let agreeing_bins = bins.iter().filter(|b| b.within).count();
    let verdict = if scored_bins == 0 {
        Verdict::Inconclusive
    } else if agreeing_bins as f64 >= BIN_PASS_FRACTION * scored_bins as f64 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let excess = |upper: bool| {
        let sel: Vec<f64> = bins
            .iter()
            .filter(|b| b.scored && !b.within && (b.x_eff > 0.0) == upper)
            .map(|b| b.log_ratio - b.x_eff)
            .collect();
        (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
    };
    let (upper_tail_excess, lower_tail_excess) = (excess(true), excess(false));
    let direction = (verdict == Verdict::Fail).then(|| describe(upper_tail_excess, lower_tail_excess));
    RatioReport {
        functional,
        n_forward: f.len(),
        n_backward: g.len(),
        bin_width: width,
        bins,
        scored_bins,
        agreeing_bins,
        verdict,
        upper_tail_excess,
        lower_tail_excess,
        direction,
    }
}

fn describe(upper: Option<f64>, lower: Option<f64>) -> String {
    let side = |e: f64| if e > 0.0 { "above" } else { "below" };
    let mut parts = Vec::new();
    if let Some(u) = upper {
        parts.push(format!("for x > 0 the forward/backward ratio lies {} e^x (mean log excess {u:.3})", side(u)));
    }
    if let Some(l) = lower {
        parts.push(format!("for x < 0 it lies {} e^x (mean log excess {l:.3})", side(l)));
    }
    parts.join("; ")
}

pub fn ratio_from_scores(samples: &ScoreSamples, functional: Functional) -> RatioReport {
    ratio_from_scores_binned(samples, functional, None)
}

pub fn ratio_from_scores_binned(samples: &ScoreSamples, functional: Functional, bins: Option<usize>) -> RatioReport {
    let f: Vec<f64> = samples.forward.iter().map(|s| functional.extract(s)).collect();
    let g: Vec<f64> = samples.backward.iter().map(|s| -functional.extract(s)).collect();
    ratio_test_binned(functional, &f, &g, bins)
}

pub fn distributional_test<M: PathMeasure>(
    pair: &ScorePair<M>,
    functional: Functional,
    n: usize,
    seed: u64,
) -> Result<RatioReport> {
    let needed = match functional {
        Functional::Entropy => Some(PairKind::EntropyProduction),
        Functional::Work => Some(PairKind::DissipatedWork),
        Functional::Heat => None,
    };
    if let Some(kind) = needed {
        if pair.kind() != kind {
            return Err(Error::InvalidArgument(format!(
                "{functional:?} needs a {kind:?} pair, got {:?}",
                pair.kind()
            )));
        }
    }
    let samples = sample_scores(pair, n, seed)?;
    Ok(ratio_from_scores(&samples, functional))
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

impl MgfGrid {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,lhs,lhs_se,rhs,rhs_se,pass,outside_strip,lhs_max_share,rhs_max_share\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                fmt(p.lambda),
                fmt(p.lhs),
                fmt(p.lhs_se),
                fmt(p.rhs),
                fmt(p.rhs_se),
                p.pass,
                p.outside_strip,
                fmt(p.lhs_max_share),
                fmt(p.rhs_max_share)
            ));
        }
        out
    }
}

impl RatioReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "lo,hi,center,count_f,count_g,log_ratio,x_eff,se,deviation_center,deviation,scored,within\n",
        );
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                fmt(b.lo),
                fmt(b.hi),
                fmt(b.center),
                b.count_f,
                b.count_g,
                fmt(b.log_ratio),
                fmt(b.x_eff),
                fmt(b.se),
                fmt(b.deviation_center),
                fmt(b.deviation),
                b.scored,
                b.within
            ));
        }
        out
    }
}
