//! Log path densities and the log-likelihood ratios built from them.
//!
//! Densities are taken against the reference measure "counting measure on
//! jump skeletons times Lebesgue measure on jump times". Every
//! [`PathTransform`] preserves that measure, so `log dP/d(φQ)(ω)` is the
//! difference `log p_P(ω) - log p_Q(φω)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::JumpPath;
use crate::process::{
    evolve_law, gibbs_distribution, Hamiltonian, InitialDistribution, ProcessMeasure,
};
use crate::sampler::{sample_path, SeededStream};
use crate::transforms::{apply_transform, PathTransform};

/// Tolerance used to decide whether an initial law is the Gibbs law.
pub const GIBBS_TOL: f64 = 1e-10;

/// A law on right-continuous paths over `[0, T]` with a density against the
/// reference measure.
pub trait PathMeasure: Sync {
    fn horizon(&self) -> f64;

    /// `log μ0(x)`, `-inf` off the support.
    fn log_initial_mass(&self, x: usize) -> f64;

    fn rate(&self, i: usize, j: usize, s: f64) -> f64;

    /// `∫_a^b Λ_i(s) ds`.
    fn integrated_exit(&self, i: usize, a: f64, b: f64) -> Result<f64>;

    fn sample(&self, stream: &SeededStream) -> Result<JumpPath>;

    fn log_path_density(&self, path: &JumpPath) -> Result<f64> {
        let d = density_parts(self, path)?;
        Ok(d.initial + d.dynamics)
    }
}

impl PathMeasure for ProcessMeasure {
    fn horizon(&self) -> f64 {
        ProcessMeasure::horizon(self)
    }

    fn log_initial_mass(&self, x: usize) -> f64 {
        self.initial().mass(x).ln()
    }

    fn rate(&self, i: usize, j: usize, s: f64) -> f64 {
        if i >= self.states() || j >= self.states() {
            return 0.0;
        }
        self.protocol().rate(i, j, s)
    }

    fn integrated_exit(&self, i: usize, a: f64, b: f64) -> Result<f64> {
        self.protocol().integrated_exit(i, a, b)
    }

    fn sample(&self, stream: &SeededStream) -> Result<JumpPath> {
        sample_path(self, stream)
    }
}

/// Log density split into the initial-law term and the dynamical term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityParts {
    pub initial: f64,
    pub dynamics: f64,
}

pub fn density_parts<M: PathMeasure + ?Sized>(m: &M, path: &JumpPath) -> Result<DensityParts> {
    if path.horizon() != m.horizon() {
        return Err(Error::InvalidArgument(format!(
            "path horizon {} differs from measure horizon {}",
            path.horizon(),
            m.horizon()
        )));
    }
    let initial = m.log_initial_mass(path.initial_state());
    if !(initial > f64::NEG_INFINITY) {
        return Err(Error::OutsideSupport(format!(
            "initial state {} has zero mass",
            path.initial_state()
        )));
    }
    let mut dynamics = 0.0;
    let mut prev = path.initial_state();
    for j in path.jumps() {
        let k = m.rate(prev, j.state, j.time);
        if !(k > 0.0) {
            return Err(Error::OutsideSupport(format!(
                "rate {prev} -> {} vanishes at {}",
                j.state, j.time
            )));
        }
        dynamics += k.ln();
        prev = j.state;
    }
    for (state, a, b) in path.segments() {
        dynamics -= m.integrated_exit(state, a, b)?;
    }
    Ok(DensityParts { initial, dynamics })
}

/// `log μ0(x0) + Σ log k(t_i) - Σ ∫ Λ` for `path` under `m`.
pub fn log_path_density<M: PathMeasure + ?Sized>(m: &M, path: &JumpPath) -> Result<f64> {
    m.log_path_density(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `S_P = log dP/d(φQ)`, evaluated on P-paths.
    Forward,
    /// `S_Q = log dQ/d(φ⁻¹P)`, evaluated on Q-paths.
    Backward,
}

/// A log-likelihood ratio in nats, split into the initial-law difference
/// (`boundary`) and the dynamical difference (`current`). Under time reversal
/// with a reversed protocol the current term is the heat `βQ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub direction: Direction,
    pub boundary: f64,
    pub current: f64,
}

fn equivalence(path: &JumpPath, e: Error) -> Error {
    match e {
        Error::OutsideSupport(reason) => Error::Equivalence { path: path.to_string(), reason },
        other => other,
    }
}

fn ratio<A, B>(num: &A, den: &B, path: &JumpPath, image: &JumpPath, direction: Direction) -> Result<Score>
where
    A: PathMeasure + ?Sized,
    B: PathMeasure + ?Sized,
{
    let top = density_parts(num, path).map_err(|e| equivalence(path, e))?;
    let bottom = density_parts(den, image).map_err(|e| equivalence(path, e))?;
    let boundary = top.initial - bottom.initial;
    let current = top.dynamics - bottom.dynamics;
    Ok(Score { value: boundary + current, direction, boundary, current })
}

/// `S_P(ω)` (forward) or `S_Q(ω)` (backward) for measures `p`, `q` and
/// transform `phi`.
pub fn score<A, B>(p: &A, q: &B, phi: &PathTransform, path: &JumpPath, direction: Direction) -> Result<Score>
where
    A: PathMeasure + ?Sized,
    B: PathMeasure + ?Sized,
{
    match direction {
        Direction::Forward => {
            let image = apply_transform(phi, path)?;
            ratio(p, q, path, &image, direction)
        }
        Direction::Backward => {
            let image = apply_transform(&phi.inverse(), path)?;
            ratio(q, p, path, &image, direction)
        }
    }
}

/// Which boundary condition produced the comparison measure of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairKind {
    Custom,
    /// BC1: `S_P` is the entropy production.
    EntropyProduction,
    /// BC2: `S_P` is the dissipated work.
    DissipatedWork,
}

/// Forward measure, comparison measure and transform, with the inverse
/// transform cached.
#[derive(Clone, Debug)]
pub struct ScorePair<M> {
    pub p: M,
    pub q: M,
    pub phi: PathTransform,
    phi_inv: PathTransform,
    kind: PairKind,
}

impl<M: PathMeasure> ScorePair<M> {
    pub fn new(p: M, q: M, phi: PathTransform) -> Result<Self> {
        if p.horizon() != q.horizon() {
            return Err(Error::InvalidArgument(format!(
                "horizons differ: {} vs {}",
                p.horizon(),
                q.horizon()
            )));
        }
        let phi_inv = phi.inverse();
        Ok(Self { p, q, phi, phi_inv, kind: PairKind::Custom })
    }

    pub fn kind(&self) -> PairKind {
        self.kind
    }

    pub fn phi_inverse(&self) -> &PathTransform {
        &self.phi_inv
    }

    pub fn forward(&self, path: &JumpPath) -> Result<Score> {
        let image = apply_transform(&self.phi, path)?;
        ratio(&self.p, &self.q, path, &image, Direction::Forward)
    }

    pub fn backward(&self, path: &JumpPath) -> Result<Score> {
        let image = apply_transform(&self.phi_inv, path)?;
        ratio(&self.q, &self.p, path, &image, Direction::Backward)
    }
}

/// How the backward initial law `μ(·,T)` is obtained under BC1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinalLaw {
    /// Solve the forward equation.
    Exact,
    /// Approximate: add-one smoothed histogram of `X_T` over `n` sampled
    /// forward paths.
    Empirical { n: usize, seed: u64 },
}

fn empirical_final_law(p: &ProcessMeasure, n: usize, seed: u64) -> Result<InitialDistribution> {
    let paths = crate::sampler::sample_ensemble(p, n, seed)?;
    let k = p.states();
    let mut counts = vec![1.0; k];
    for w in &paths {
        counts[w.final_state()] += 1.0;
    }
    let total = (n + k) as f64;
    InitialDistribution::new(counts.into_iter().map(|c| c / total).collect())
}

impl ScorePair<ProcessMeasure> {
    /// BC1: comparison measure runs the reversed protocol from `μ(·,T)`.
    pub fn entropy_production(p: ProcessMeasure, phi: PathTransform) -> Result<Self> {
        Self::entropy_production_with(p, phi, FinalLaw::Exact)
    }

    pub fn entropy_production_with(p: ProcessMeasure, phi: PathTransform, law: FinalLaw) -> Result<Self> {
        let mu_t = match law {
            FinalLaw::Exact => evolve_law(&p, p.horizon())?,
            FinalLaw::Empirical { n, seed } => empirical_final_law(&p, n, seed)?,
        };
        let q = p.protocol_reversed().with_initial(mu_t)?;
        let mut pair = Self::new(p, q, phi)?;
        pair.kind = PairKind::EntropyProduction;
        Ok(pair)
    }

    /// BC2: `p` must start from the Gibbs law at time 0; the comparison measure
    /// runs the reversed protocol from the Gibbs law at time `T`.
    pub fn dissipated_work(p: ProcessMeasure, h: &Hamiltonian, phi: PathTransform) -> Result<Self> {
        check_gibbs(&p, h)?;
        let (end, _) = gibbs_distribution(h, h.horizon())?;
        let q = p.protocol_reversed().with_initial(end)?;
        let mut pair = Self::new(p, q, phi)?;
        pair.kind = PairKind::DissipatedWork;
        Ok(pair)
    }
}

fn check_gibbs(p: &ProcessMeasure, h: &Hamiltonian) -> Result<()> {
    if h.states() != p.states() || h.horizon() != p.horizon() {
        return Err(Error::InvalidArgument(
            "hamiltonian and process disagree on states or horizon".into(),
        ));
    }
    let (start, _) = gibbs_distribution(h, 0.0)?;
    let gap = start.max_abs_diff(p.initial());
    if gap > GIBBS_TOL {
        return Err(Error::BoundaryCondition(format!(
            "initial law differs from the Gibbs law by {gap:e}"
        )));
    }
    Ok(())
}

/// Whether `law` is the Gibbs law of `h` at time `s`.
pub fn is_gibbs(law: &InitialDistribution, h: &Hamiltonian, s: f64) -> Result<bool> {
    let (g, _) = gibbs_distribution(h, s)?;
    Ok(law.len() == g.len() && g.max_abs_diff(law) <= GIBBS_TOL)
}

/// `βQ(0,T) = Σ log k_{x_{i-1} x_i}(t_i) / k_{x_i x_{i-1}}(t_i)`.
pub fn heat_dissipation<M: PathMeasure + ?Sized>(m: &M, path: &JumpPath) -> Result<f64> {
    let mut total = 0.0;
    let mut prev = path.initial_state();
    for j in path.jumps() {
        let fwd = m.rate(prev, j.state, j.time);
        let back = m.rate(j.state, prev, j.time);
        if !(fwd > 0.0 && back > 0.0) {
            return Err(Error::OutsideSupport(format!(
                "heat undefined at {}: rates {prev}->{} = {fwd}, back = {back}",
                j.time, j.state
            )));
        }
        total += fwd.ln() - back.ln();
        prev = j.state;
    }
    Ok(total)
}

/// Entropy production `log dP/dP^B` under BC1 with the boundary term `ΔS`
/// and the current term `βQ` taken from [`heat_dissipation`].
pub fn entropy_production(p: &ProcessMeasure, path: &JumpPath) -> Result<Score> {
    let pair = ScorePair::entropy_production(p.clone(), PathTransform::TimeReversal)?;
    with_heat(pair.forward(path)?, p, path)
}

/// Dissipated work `βW - βΔF` under BC2, with boundary
/// `βH(x_T,T) - βH(x_0,0) + log Z(T) - log Z(0)` and current `βQ`.
pub fn dissipated_work(p: &ProcessMeasure, h: &Hamiltonian, path: &JumpPath) -> Result<Score> {
    let pair = ScorePair::dissipated_work(p.clone(), h, PathTransform::TimeReversal)?;
    let s = pair.forward(path)?;
    let (_, log_z0) = gibbs_distribution(h, 0.0)?;
    let (_, log_zt) = gibbs_distribution(h, h.horizon())?;
    let beta = h.beta();
    let boundary = beta * h.energy(path.final_state(), h.horizon()) - beta * h.energy(path.initial_state(), 0.0)
        + log_zt
        - log_z0;
    let current = heat_dissipation(p, path)?;
    Ok(Score { value: s.value, direction: Direction::Forward, boundary, current })
}

fn with_heat(s: Score, p: &ProcessMeasure, path: &JumpPath) -> Result<Score> {
    Ok(Score { current: heat_dissipation(p, path)?, ..s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{build_ldb_protocol, Energy, RateMatrix, RateProtocol};

    fn two_state(a: f64, b: f64, mu: Vec<f64>) -> ProcessMeasure {
        let p = RateProtocol::constant(RateMatrix::from_rows(&[vec![0.0, a], vec![b, 0.0]]).unwrap(), 1.0)
            .unwrap();
        ProcessMeasure::finite(p, InitialDistribution::new(mu).unwrap()).unwrap()
    }

    fn one_jump() -> JumpPath {
        JumpPath::from_pairs(0, &[(0.3, 1)], 1.0).unwrap()
    }

    #[test]
    fn density_closed_form() {
        let m = two_state(1.0, 2.0, vec![0.5, 0.5]);
        let got = log_path_density(&m, &one_jump()).unwrap();
        assert!((got - (0.5f64.ln() - 1.7)).abs() < 1e-14);
        let unit = two_state(1.0, 1.0, vec![1.0, 0.0]);
        let flat = JumpPath::constant(0, 1.0).unwrap();
        assert!((log_path_density(&unit, &flat).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_initial_mass_is_a_support_error() {
        let m = two_state(1.0, 1.0, vec![0.0, 1.0]);
        assert!(matches!(log_path_density(&m, &one_jump()), Err(Error::OutsideSupport(_))));
    }

    #[test]
    fn zero_rate_is_a_support_error() {
        let m = two_state(0.0, 1.0, vec![0.5, 0.5]);
        assert!(matches!(log_path_density(&m, &one_jump()), Err(Error::OutsideSupport(_))));
        let q = two_state(1.0, 1.0, vec![0.5, 0.5]);
        let err = score(&q, &m, &PathTransform::Identity, &one_jump(), Direction::Forward);
        assert!(matches!(err, Err(Error::Equivalence { .. })));
    }

    #[test]
    fn distinct_constant_protocols() {
        let p = two_state(1.0, 2.0, vec![0.5, 0.5]);
        let q = two_state(2.0, 1.0, vec![0.5, 0.5]);
        let s = score(&p, &q, &PathTransform::Identity, &one_jump(), Direction::Forward).unwrap();
        assert!((s.value - (-0.4 - 2f64.ln())).abs() < 1e-14);
        assert!((s.value - s.boundary - s.current).abs() < 1e-15);
    }

    #[test]
    fn backward_score_negates_forward_score() {
        let p = two_state(1.0, 2.0, vec![0.3, 0.7]);
        let q = two_state(0.5, 1.5, vec![0.6, 0.4]);
        let pair = ScorePair::new(p, q, PathTransform::holding_cyclic()).unwrap();
        let w = JumpPath::from_pairs(0, &[(0.2, 1), (0.25, 0), (0.9, 1)], 1.0).unwrap();
        let fwd = pair.forward(&w).unwrap();
        let image = apply_transform(&pair.phi, &w).unwrap();
        let back = pair.backward(&image).unwrap();
        assert!((fwd.value + back.value).abs() < 1e-12);
    }

    #[test]
    fn single_jump_heat_is_the_rate_ratio() {
        let h = Hamiltonian::new(2, 1.0, 1.0, Energy::Static(vec![0.0, 1.0])).unwrap();
        let p = build_ldb_protocol(&h, 1.0, None).unwrap();
        let m = ProcessMeasure::finite(p, InitialDistribution::uniform(2).unwrap()).unwrap();
        assert!((heat_dissipation(&m, &one_jump()).unwrap() + 1.0).abs() < 1e-14);
        let cycle = JumpPath::from_pairs(0, &[(0.3, 1), (0.6, 0)], 1.0).unwrap();
        assert!(heat_dissipation(&m, &cycle).unwrap().abs() < 1e-15);
    }

    #[test]
    fn reversible_stationary_chain_has_zero_entropy_production() {
        let (a, b) = (0.8, 1.7);
        let m = two_state(a, b, vec![b / (a + b), a / (a + b)]);
        let w = JumpPath::from_pairs(1, &[(0.1, 0), (0.5, 1), (0.55, 0)], 1.0).unwrap();
        let s = entropy_production(&m, &w).unwrap();
        assert!(s.value.abs() < 1e-12, "{s:?}");
    }

    #[test]
    fn dissipated_work_rejects_non_gibbs_start() {
        let h = Hamiltonian::new(2, 1.0, 1.0, Energy::Static(vec![0.0, 1.0])).unwrap();
        let p = build_ldb_protocol(&h, 1.0, None).unwrap();
        let m = ProcessMeasure::finite(p, InitialDistribution::uniform(2).unwrap()).unwrap();
        assert!(matches!(
            dissipated_work(&m, &h, &one_jump()),
            Err(Error::BoundaryCondition(_))
        ));
    }

    #[test]
    fn dissipated_work_decomposes() {
        let h = Hamiltonian::new(2, 1.0, 1.0, Energy::Linear { base: vec![0.0, 0.0], slope: vec![0.0, 1.0] })
            .unwrap();
        let p = build_ldb_protocol(&h, 1.0, None).unwrap();
        let (g, _) = gibbs_distribution(&h, 0.0).unwrap();
        let m = ProcessMeasure::finite(p, g).unwrap();
        let w = JumpPath::from_pairs(0, &[(0.2, 1), (0.7, 0), (0.8, 1)], 1.0).unwrap();
        let s = dissipated_work(&m, &h, &w).unwrap();
        assert!((s.value - s.boundary - s.current).abs() < 1e-8, "{s:?}");
    }
}
