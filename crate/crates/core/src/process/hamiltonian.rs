use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::process::protocol::{RateFn, RateMatrix, RateProtocol, VALIDATION_GRID};
use crate::process::InitialDistribution;

pub type EnergyFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// Energy landscape `H(x, s)` on a finite state space.
#[derive(Clone)]
pub enum Energy {
    Static(Vec<f64>),
    /// One energy vector per interval `[b_k, b_{k+1})`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        levels: Vec<Vec<f64>>,
    },
    /// `H(x, s) = base[x] + slope[x] * s`.
    Linear { base: Vec<f64>, slope: Vec<f64> },
    Custom(EnergyFn),
}

impl fmt::Debug for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Energy::Static(v) => f.debug_tuple("Static").field(v).finish(),
            Energy::PiecewiseConstant { breakpoints, levels } => f
                .debug_struct("PiecewiseConstant")
                .field("breakpoints", breakpoints)
                .field("levels", levels)
                .finish(),
            Energy::Linear { base, slope } => f
                .debug_struct("Linear")
                .field("base", base)
                .field("slope", slope)
                .finish(),
            Energy::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Time-dependent Hamiltonian with inverse temperature `beta`, in units where
/// `beta * H` is dimensionless.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    states: usize,
    horizon: f64,
    beta: f64,
    energy: Energy,
}

impl Hamiltonian {
    /// `beta = 0` is accepted as the infinite-temperature limit.
    pub fn new(states: usize, horizon: f64, beta: f64, energy: Energy) -> Result<Self> {
        if states < 2 {
            return Err(Error::InvalidHamiltonian(format!(
                "need at least 2 states, got {states}"
            )));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidHamiltonian(format!(
                "inverse temperature must be finite and nonnegative, got {beta}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidHamiltonian(format!("invalid horizon {horizon}")));
        }
        let check = |v: &[f64], what: &str| -> Result<()> {
            if v.len() != states {
                return Err(Error::InvalidHamiltonian(format!(
                    "{what} has {} entries, expected {states}",
                    v.len()
                )));
            }
            if let Some(x) = v.iter().find(|x| !x.is_finite()) {
                return Err(Error::InvalidHamiltonian(format!("non-finite energy {x} in {what}")));
            }
            Ok(())
        };
        match &energy {
            Energy::Static(v) => check(v, "energies")?,
            Energy::PiecewiseConstant { breakpoints, levels } => {
                if levels.is_empty() || breakpoints.len() != levels.len() + 1 {
                    return Err(Error::InvalidHamiltonian(format!(
                        "{} breakpoints for {} energy levels",
                        breakpoints.len(),
                        levels.len()
                    )));
                }
                if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != horizon {
                    return Err(Error::InvalidHamiltonian(
                        "breakpoints must run from 0 to the horizon".into(),
                    ));
                }
                if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidHamiltonian(
                        "breakpoints must be strictly increasing".into(),
                    ));
                }
                for (k, l) in levels.iter().enumerate() {
                    check(l, &format!("interval {k}"))?;
                }
            }
            Energy::Linear { base, slope } => {
                check(base, "base energies")?;
                check(slope, "energy slopes")?;
            }
            Energy::Custom(f) => {
                for g in 0..VALIDATION_GRID {
                    let s = horizon * g as f64 / (VALIDATION_GRID - 1) as f64;
                    for x in 0..states {
                        let e = f(x, s);
                        if !e.is_finite() {
                            return Err(Error::InvalidHamiltonian(format!(
                                "H({x}, {s}) = {e} is not finite"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self { states, horizon, beta, energy })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn energy_form(&self) -> &Energy {
        &self.energy
    }

    pub fn energy(&self, x: usize, s: f64) -> f64 {
        match &self.energy {
            Energy::Static(v) => v[x],
            Energy::PiecewiseConstant { breakpoints, levels } => {
                levels[RateProtocol::interval_index(breakpoints, s)][x]
            }
            Energy::Linear { base, slope } => base[x] + slope[x] * s,
            Energy::Custom(f) => f(x, s),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match &self.energy {
            Energy::Static(_) => true,
            Energy::PiecewiseConstant { levels, .. } => levels.windows(2).all(|w| w[0] == w[1]),
            Energy::Linear { slope, .. } => slope.iter().all(|&d| d == 0.0),
            Energy::Custom(f) => (0..VALIDATION_GRID).all(|g| {
                let s = self.horizon * g as f64 / (VALIDATION_GRID - 1) as f64;
                (0..self.states).all(|x| f(x, s) == f(x, 0.0))
            }),
        }
    }
}

/// Which pairs of states may exchange. Defaults to the complete graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Connectivity {
    n: usize,
    edges: Vec<bool>,
}

impl Connectivity {
    pub fn complete(n: usize) -> Self {
        let mut edges = vec![true; n * n];
        for i in 0..n {
            edges[i * n + i] = false;
        }
        Self { n, edges }
    }

    /// Nearest-neighbour chain `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        let mut edges = vec![false; n * n];
        for i in 0..n.saturating_sub(1) {
            edges[i * n + i + 1] = true;
            edges[(i + 1) * n + i] = true;
        }
        Self { n, edges }
    }

    /// Symmetric adjacency matrix; the diagonal is ignored.
    pub fn from_adjacency(adj: &[Vec<bool>]) -> Result<Self> {
        let n = adj.len();
        let mut edges = vec![false; n * n];
        for i in 0..n {
            if adj[i].len() != n {
                return Err(Error::InvalidArgument("adjacency matrix must be square".into()));
            }
            for j in 0..n {
                if i != j {
                    if adj[i][j] != adj[j][i] {
                        return Err(Error::InvalidArgument(format!(
                            "adjacency must be symmetric: ({i},{j})"
                        )));
                    }
                    edges[i * n + j] = adj[i][j];
                }
            }
        }
        Ok(Self { n, edges })
    }

    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.edges[i * self.n + j]
    }
}

fn ldb_matrix(h: &Hamiltonian, base_rate: f64, graph: &Connectivity, s: f64) -> Result<RateMatrix> {
    let n = h.states;
    let beta = h.beta;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i != j && graph.connected(i, j) {
                        base_rate * (-0.5 * beta * (h.energy(j, s) - h.energy(i, s))).exp()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    RateMatrix::from_rows(&rows)
}

/// Rates obeying local detailed balance with respect to `h` through the
/// symmetric rule `k_ij(s) = ν exp(-β (H(j,s) - H(i,s)) / 2)` on the given
/// connectivity graph (complete graph when `None`).
pub fn build_ldb_protocol(
    h: &Hamiltonian,
    base_rate: f64,
    connectivity: Option<&Connectivity>,
) -> Result<RateProtocol> {
    if !(base_rate.is_finite() && base_rate > 0.0) {
        return Err(Error::InvalidProtocol(format!("base rate must be positive, got {base_rate}")));
    }
    let complete = Connectivity::complete(h.states);
    let graph = connectivity.unwrap_or(&complete);
    if graph.n != h.states {
        return Err(Error::InvalidArgument(format!(
            "connectivity has {} states, hamiltonian has {}",
            graph.n, h.states
        )));
    }
    match &h.energy {
        Energy::Static(_) => RateProtocol::constant(ldb_matrix(h, base_rate, graph, 0.0)?, h.horizon),
        Energy::PiecewiseConstant { breakpoints, .. } => {
            let matrices = breakpoints[..breakpoints.len() - 1]
                .iter()
                .map(|&b| ldb_matrix(h, base_rate, graph, b))
                .collect::<Result<Vec<_>>>()?;
            RateProtocol::piecewise_constant(breakpoints.clone(), matrices)
        }
        Energy::Linear { .. } | Energy::Custom(_) => {
            // Linear energies give exponentials of linear functions, so the
            // endpoint maximum is exact; custom ones take a grid maximum with
            // a factor-of-two margin, enforced again while sampling.
            let exact = matches!(h.energy, Energy::Linear { .. });
            let grid: Vec<f64> = if exact {
                vec![0.0, h.horizon]
            } else {
                (0..4 * VALIDATION_GRID)
                    .map(|g| h.horizon * g as f64 / (4 * VALIDATION_GRID - 1) as f64)
                    .collect()
            };
            let mut bound: f64 = 0.0;
            for &s in &grid {
                let m = ldb_matrix(h, base_rate, graph, s)?;
                for i in 0..h.states {
                    for j in 0..h.states {
                        bound = bound.max(m.get(i, j));
                    }
                }
            }
            let bound = if exact { bound * (1.0 + 1e-12) } else { 2.0 * bound };
            let ham = h.clone();
            let graph = graph.clone();
            let rate: RateFn = Arc::new(move |i, j, s| {
                if i != j && graph.connected(i, j) {
                    base_rate * (-0.5 * ham.beta * (ham.energy(j, s) - ham.energy(i, s))).exp()
                } else {
                    0.0
                }
            });
            RateProtocol::functional(h.states, h.horizon, rate, bound)
        }
    }
}

/// Gibbs law `exp(-βH(x,s)) / Z(s)` together with `log Z(s)`.
pub fn gibbs_distribution(h: &Hamiltonian, s: f64) -> Result<(InitialDistribution, f64)> {
    let neg: Vec<f64> = (0..h.states).map(|x| -h.beta * h.energy(x, s)).collect();
    let log_z = log_sum_exp(&neg);
    let masses: Vec<f64> = neg.iter().map(|v| (v - log_z).exp()).collect();
    let total: f64 = masses.iter().sum();
    let masses = masses.into_iter().map(|m| m / total).collect();
    Ok((InitialDistribution::new(masses)?, log_z))
}

/// Whether `protocol` satisfies local detailed balance with respect to `h` at
/// `s`, to relative tolerance `tol`, on every connected pair.
pub fn satisfies_ldb(protocol: &RateProtocol, h: &Hamiltonian, s: f64, tol: f64) -> bool {
    let n = protocol.states();
    for i in 0..n {
        for j in (i + 1)..n {
            let (kij, kji) = (protocol.rate(i, j, s), protocol.rate(j, i, s));
            if kij == 0.0 && kji == 0.0 {
                continue;
            }
            if kij == 0.0 || kji == 0.0 {
                return false;
            }
            let expected = (-h.beta * (h.energy(j, s) - h.energy(i, s))).exp();
            if ((kij / kji) / expected - 1.0).abs() > tol {
                return false;
            }
        }
    }
    true
}
