//! Exact oracle on discrete-time finite chains: every path is enumerated and
//! the identities are checked as finite sums.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::NORMALIZATION_TOL;

/// Largest number of paths `N^(n+1)` that will be enumerated.
pub const MAX_PATHS: usize = 10_000_000;
/// Values of `S_P` closer than this are treated as one support point.
pub const GROUPING_TOL: f64 = 1e-9;
/// Relative tolerance for the point-wise distributional identity.
pub const POINTWISE_TOL: f64 = 1e-10;
/// Relative tolerance for the MGF identity on the λ grid.
pub const MGF_TOL: f64 = 1e-10;
/// Absolute tolerance for `Σ P e^{-S_P} = 1`.
pub const INTEGRAL_TOL: f64 = 1e-12;

/// Markov chain `x_0, ..., x_n` with step matrices `M_1..M_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteChain {
    initial: Vec<f64>,
    steps: Vec<Vec<Vec<f64>>>,
}

fn check_probabilities(v: &[f64], what: &str) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::InvalidChain(format!("{what} has invalid entry {x}")));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidChain(format!("{what} sums to {total}")));
    }
    Ok(())
}

impl DiscreteChain {
    pub fn new(initial: Vec<f64>, steps: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = initial.len();
        if n < 2 {
            return Err(Error::InvalidChain("need at least 2 states".into()));
        }
        if steps.is_empty() {
            return Err(Error::InvalidChain("need at least one step".into()));
        }
        check_probabilities(&initial, "initial law")?;
        for (k, m) in steps.iter().enumerate() {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidChain(format!("step matrix {} is not {n}x{n}", k + 1)));
            }
            for (i, row) in m.iter().enumerate() {
                check_probabilities(row, &format!("row {i} of step matrix {}", k + 1))?;
            }
        }
        Ok(Self { initial, steps })
    }

    /// Same matrix at every step.
    pub fn homogeneous(initial: Vec<f64>, matrix: Vec<Vec<f64>>, steps: usize) -> Result<Self> {
        Self::new(initial, vec![matrix; steps])
    }

    /// Chain with entries drawn uniformly from `[0.05, 1)` and normalised.
    pub fn random<R: Rng>(states: usize, steps: usize, rng: &mut R) -> Result<Self> {
        let draw = |rng: &mut R| -> Vec<f64> {
            let v: Vec<f64> = (0..states).map(|_| rng.random_range(0.05..1.0)).collect();
            let t: f64 = v.iter().sum();
            v.into_iter().map(|x| x / t).collect()
        };
        let initial = draw(rng);
        let steps = (0..steps)
            .map(|_| (0..states).map(|_| draw(rng)).collect())
            .collect();
        Self::new(initial, steps)
    }

    pub fn states(&self) -> usize {
        self.initial.len()
    }

    pub fn steps(&self) -> usize {
        self.steps.len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn step_matrices(&self) -> &[Vec<Vec<f64>>] {
        &self.steps
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.initial.iter().all(|&x| x > 0.0)
            && self.steps.iter().flatten().flatten().all(|&x| x > 0.0)
    }

    pub fn probability(&self, path: &[usize]) -> f64 {
        let mut p = self.initial[path[0]];
        for (k, w) in path.windows(2).enumerate() {
            p *= self.steps[k][w[0]][w[1]];
        }
        p
    }

    pub fn log_probability(&self, path: &[usize]) -> f64 {
        let mut p = self.initial[path[0]].ln();
        for (k, w) in path.windows(2).enumerate() {
            p += self.steps[k][w[0]][w[1]].ln();
        }
        p
    }

    fn path_count(&self) -> Result<usize> {
        let total = (self.states() as f64).powi(self.steps() as i32 + 1);
        if total > MAX_PATHS as f64 {
            return Err(Error::EnumerationTooLarge { paths: total, limit: MAX_PATHS });
        }
        Ok(total as usize)
    }
}

/// Permutation of the time coordinates, `(σω)_i = ω_{σ(i)}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinatePermutation {
    sigma: Vec<usize>,
}

impl CoordinatePermutation {
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; sigma.len()];
        for &i in &sigma {
            if i >= sigma.len() || seen[i] {
                return Err(Error::InvalidArgument(format!("{sigma:?} is not a permutation")));
            }
            seen[i] = true;
        }
        if sigma.is_empty() {
            return Err(Error::InvalidArgument("empty permutation".into()));
        }
        Ok(Self { sigma })
    }

    pub fn identity(steps: usize) -> Self {
        Self { sigma: (0..=steps).collect() }
    }

    /// `σ(i) = n - i`.
    pub fn reversal(steps: usize) -> Self {
        Self { sigma: (0..=steps).rev().collect() }
    }

    /// `σ(i) = (i + k) mod (n + 1)`.
    pub fn cyclic(steps: usize, k: usize) -> Self {
        let len = steps + 1;
        Self { sigma: (0..len).map(|i| (i + k) % len).collect() }
    }

    /// Uniformly random permutation (Fisher–Yates).
    pub fn random<R: Rng>(steps: usize, rng: &mut R) -> Self {
        let mut sigma: Vec<usize> = (0..=steps).collect();
        for i in (1..sigma.len()).rev() {
            let j = rng.random_range(0..=i);
            sigma.swap(i, j);
        }
        Self { sigma }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.sigma.len()];
        for (i, &j) in self.sigma.iter().enumerate() {
            inv[j] = i;
        }
        Self { sigma: inv }
    }

    pub fn is_involution(&self) -> bool {
        self.inverse() == *self
    }

    pub fn apply(&self, path: &[usize]) -> Vec<usize> {
        self.sigma.iter().map(|&i| path[i]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumeratedPath {
    pub states: Vec<usize>,
    pub probability: f64,
}

fn decode(mut code: usize, states: usize, len: usize, out: &mut [usize]) {
    for slot in out[..len].iter_mut().rev() {
        *slot = code % states;
        code /= states;
    }
}

fn encode(path: &[usize], states: usize) -> usize {
    path.iter().fold(0, |acc, &x| acc * states + x)
}

/// All paths in lexicographic order with their probabilities.
pub fn enumerate_paths(c: &DiscreteChain) -> Result<Vec<EnumeratedPath>> {
    let total = c.path_count()?;
    let (n, len) = (c.states(), c.steps() + 1);
    let mut buf = vec![0; len];
    Ok((0..total)
        .map(|code| {
            decode(code, n, len, &mut buf);
            EnumeratedPath { states: buf.clone(), probability: c.probability(&buf) }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    /// Probability-weighted representative of the grouped `S_P` values.
    pub x: f64,
    /// `P(S_P = x)`.
    pub p_forward: f64,
    /// `Q(S_Q = -x)`.
    pub q_backward: f64,
    /// `|P(S_P = x) - e^x Q(S_Q = -x)| / P(S_P = x)`.
    pub rel_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactMgfPoint {
    pub lambda: f64,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactReport {
    pub states: usize,
    pub steps: usize,
    pub sigma: Vec<usize>,
    pub involution: bool,
    pub paths: usize,
    pub support: Vec<SupportPoint>,
    pub pointwise_pass: bool,
    pub max_rel_error: f64,
    pub mgf: Vec<ExactMgfPoint>,
    pub mgf_pass: bool,
    pub integral: f64,
    pub integral_pass: bool,
    pub pass: bool,
}

/// Groups `(value, weight)` pairs into clusters of width `GROUPING_TOL`
/// measured from the smallest member; returns `(weighted value, mass, members)`.
fn group(mut items: Vec<(f64, f64, usize)>) -> Vec<(f64, f64, Vec<usize>)> {
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    let mut out: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    let mut start = f64::NEG_INFINITY;
    for (v, w, idx) in items {
        match out.last_mut() {
            Some((sum, mass, members)) if v - start <= GROUPING_TOL => {
                *sum += v * w;
                *mass += w;
                members.push(idx);
            }
            _ => {
                start = v;
                out.push((v * w, w, vec![idx]));
            }
        }
    }
    out.into_iter()
        .map(|(sum, mass, members)| (if mass > 0.0 { sum / mass } else { start }, mass, members))
        .collect()
}

/// Checks the distributional identity at every support point of `S_P`, the
/// MGF identity on `lambdas` and `Σ P e^{-S_P} = 1` for the pair `(P, Q)`
/// under the coordinate permutation `sigma`.
pub fn exact_verify(
    p: &DiscreteChain,
    q: &DiscreteChain,
    sigma: &CoordinatePermutation,
    lambdas: &[f64],
) -> Result<ExactReport> {
    if p.states() != q.states() || p.steps() != q.steps() {
        return Err(Error::InvalidChain("chains differ in state count or length".into()));
    }
    if sigma.len() != p.steps() + 1 {
        return Err(Error::InvalidArgument(format!(
            "permutation acts on {} coordinates, paths have {}",
            sigma.len(),
            p.steps() + 1
        )));
    }
    if !p.is_strictly_positive() || !q.is_strictly_positive() {
        return Err(Error::InvalidChain(
            "every initial mass and transition probability must be positive".into(),
        ));
    }
    let total = p.path_count()?;
    let (n, len) = (p.states(), p.steps() + 1);
    let mut log_p = vec![0.0; total];
    let mut log_q = vec![0.0; total];
    let mut fwd = vec![0; total];
    let mut inv = vec![0; total];
    let sigma_inv = sigma.inverse();
    let mut buf = vec![0; len];
    for code in 0..total {
        decode(code, n, len, &mut buf);
        log_p[code] = p.log_probability(&buf);
        log_q[code] = q.log_probability(&buf);
        fwd[code] = encode(&sigma.apply(&buf), n);
        inv[code] = encode(&sigma_inv.apply(&buf), n);
    }
    let s_p: Vec<f64> = (0..total).map(|c| log_p[c] - log_q[fwd[c]]).collect();
    let s_q: Vec<f64> = (0..total).map(|c| log_q[c] - log_p[inv[c]]).collect();
    let prob_p: Vec<f64> = log_p.iter().map(|x| x.exp()).collect();
    let prob_q: Vec<f64> = log_q.iter().map(|x| x.exp()).collect();

    // Backward values are grouped independently so the comparison does not
    // lean on the exact negation S_Q(σω) = -S_P(ω).
    let groups_p = group((0..total).map(|c| (s_p[c], prob_p[c], c)).collect());
    let groups_q = group((0..total).map(|c| (-s_q[c], prob_q[c], c)).collect());
    let support: Vec<SupportPoint> = groups_p
        .iter()
        .map(|(x, mass, _)| {
            let q_mass: f64 = groups_q
                .iter()
                .filter(|(y, _, _)| (y - x).abs() <= GROUPING_TOL)
                .map(|(_, m, _)| m)
                .sum();
            let rel_error = (mass - x.exp() * q_mass).abs() / mass;
            SupportPoint { x: *x, p_forward: *mass, q_backward: q_mass, rel_error, pass: rel_error <= POINTWISE_TOL }
        })
        .collect();
    let max_rel_error = support.iter().map(|s| s.rel_error).fold(0.0, f64::max);
    let pointwise_pass = support.iter().all(|s| s.pass);

    let mgf: Vec<ExactMgfPoint> = lambdas
        .iter()
        .map(|&lambda| {
            let lhs: f64 = (0..total).map(|c| prob_p[c] * (lambda * s_p[c]).exp()).sum();
            let rhs: f64 = (0..total).map(|c| prob_q[c] * (-(1.0 + lambda) * s_q[c]).exp()).sum();
            let pass = (lhs - rhs).abs() <= MGF_TOL * lhs.abs().max(rhs.abs());
            ExactMgfPoint { lambda, lhs, lhs_se: 0.0, rhs, rhs_se: 0.0, pass }
        })
        .collect();
    let mgf_pass = mgf.iter().all(|m| m.pass);
    let integral: f64 = (0..total).map(|c| prob_p[c] * (-s_p[c]).exp()).sum();
    let integral_pass = (integral - 1.0).abs() <= INTEGRAL_TOL;
    Ok(ExactReport {
        states: n,
        steps: p.steps(),
        sigma: sigma.as_slice().to_vec(),
        involution: sigma.is_involution(),
        paths: total,
        support,
        pointwise_pass,
        max_rel_error,
        mgf,
        mgf_pass,
        integral,
        integral_pass,
        pass: pointwise_pass && mgf_pass && integral_pass,
    })
}

impl ExactReport {
    pub fn mgf_csv(&self) -> String {
        let mut out = String::from("lambda,lhs,lhs_se,rhs,rhs_se,pass\n");
        for m in &self.mgf {
            out.push_str(&format!(
                "{:?},{:?},{:?},{:?},{:?},{}\n",
                m.lambda, m.lhs, m.lhs_se, m.rhs, m.rhs_se, m.pass
            ));
        }
        out
    }

    pub fn support_csv(&self) -> String {
        let mut out = String::from("x,p_forward,q_backward,rel_error,pass\n");
        for s in &self.support {
            out.push_str(&format!(
                "{:?},{:?},{:?},{:?},{}\n",
                s.x, s.p_forward, s.q_backward, s.rel_error, s.pass
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, RowDVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const GRID: [f64; 5] = [-1.0, -0.75, -0.5, -0.25, 0.0];

    fn example() -> DiscreteChain {
        DiscreteChain::homogeneous(vec![0.5, 0.5], vec![vec![0.7, 0.3], vec![0.4, 0.6]], 1).unwrap()
    }

    #[test]
    fn two_state_two_steps_has_eight_paths() {
        let c = DiscreteChain::homogeneous(vec![0.5, 0.5], vec![vec![0.7, 0.3], vec![0.4, 0.6]], 2).unwrap();
        let paths = enumerate_paths(&c).unwrap();
        assert_eq!(paths.len(), 8);
        assert_eq!(paths[1].states, vec![0, 0, 1]);
        let total: f64 = paths.iter().map(|p| p.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_initial_mass_gives_zero_probability_paths() {
        let c = DiscreteChain::homogeneous(vec![1.0, 0.0], vec![vec![0.7, 0.3], vec![0.4, 0.6]], 2).unwrap();
        for p in enumerate_paths(&c).unwrap() {
            if p.states[0] == 1 {
                assert_eq!(p.probability, 0.0);
            }
        }
        let err = exact_verify(&c, &c, &CoordinatePermutation::reversal(2), &GRID);
        assert!(matches!(err, Err(Error::InvalidChain(_))));
    }

    #[test]
    fn marginal_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = DiscreteChain::random(3, 4, &mut rng).unwrap();
        let mut mu = RowDVector::from_row_slice(c.initial());
        for m in c.step_matrices() {
            let mat = DMatrix::from_fn(3, 3, |i, j| m[i][j]);
            mu = mu * mat;
        }
        let mut marginal = [0.0; 3];
        for p in enumerate_paths(&c).unwrap() {
            marginal[*p.states.last().unwrap()] += p.probability;
        }
        for x in 0..3 {
            assert!((marginal[x] - mu[x]).abs() < 1e-14);
        }
    }

    #[test]
    fn hand_computed_two_state_example() {
        let c = example();
        let r = exact_verify(&c, &c, &CoordinatePermutation::reversal(1), &GRID).unwrap();
        let x = 0.75f64.ln();
        let pt = r.support.iter().find(|s| (s.x - x).abs() < 1e-12).expect("log 0.75 in support");
        assert!((pt.p_forward - 0.15).abs() < 1e-15);
        assert!((pt.p_forward - 0.75 * pt.q_backward).abs() < 1e-15);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn identity_pair_is_degenerate() {
        let c = example();
        let r = exact_verify(&c, &c, &CoordinatePermutation::identity(1), &GRID).unwrap();
        assert_eq!(r.support.len(), 1);
        assert_eq!(r.support[0].x, 0.0);
        assert!(r.mgf.iter().all(|m| (m.lhs - 1.0).abs() < 1e-15 && (m.rhs - 1.0).abs() < 1e-15));
        assert!(r.pass);
    }

    #[test]
    fn noninvolutive_shift_on_unrelated_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = DiscreteChain::random(3, 2, &mut rng).unwrap();
        let q = DiscreteChain::random(3, 2, &mut rng).unwrap();
        let sigma = CoordinatePermutation::cyclic(2, 1);
        assert!(!sigma.is_involution());
        let r = exact_verify(&p, &q, &sigma, &GRID).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_rel_error < 1e-10);
    }

    #[test]
    fn size_guard() {
        let c = DiscreteChain::homogeneous(vec![0.5, 0.5], vec![vec![0.5, 0.5]; 2], 30).unwrap();
        assert!(matches!(enumerate_paths(&c), Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn invalid_chains_are_rejected() {
        assert!(DiscreteChain::homogeneous(vec![0.5, 0.6], vec![vec![0.5, 0.5]; 2], 1).is_err());
        assert!(DiscreteChain::homogeneous(vec![0.5, 0.5], vec![vec![0.5, 0.4]; 2], 1).is_err());
        assert!(CoordinatePermutation::new(vec![0, 0]).is_err());
    }
}
