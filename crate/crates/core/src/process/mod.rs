//! State spaces, driving protocols, initial laws and the process measures
//! they define on `[0, T]`.

mod evolve;
pub mod hamiltonian;
pub mod protocol;

pub use evolve::evolve_law;
pub use hamiltonian::{
    build_ldb_protocol, gibbs_distribution, satisfies_ldb, Connectivity, Energy, EnergyFn,
    Hamiltonian,
};
pub use protocol::{protocol_reverse, ProtocolForm, RateFn, RateMatrix, RateProtocol};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StateSpace {
    Finite {
        size: usize,
        labels: Option<Vec<String>>,
    },
    /// Only used by the birth-death module.
    NonNegativeIntegers,
}

impl StateSpace {
    pub fn finite(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidArgument(format!(
                "finite state space needs at least 2 states, got {size}"
            )));
        }
        Ok(StateSpace::Finite { size, labels: None })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidArgument("need at least 2 labelled states".into()));
        }
        Ok(StateSpace::Finite { size: labels.len(), labels: Some(labels) })
    }

    pub fn size(&self) -> Option<usize> {
        match self {
            StateSpace::Finite { size, .. } => Some(*size),
            StateSpace::NonNegativeIntegers => None,
        }
    }
}

/// Probability vector over a finite state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialDistribution {
    masses: Vec<f64>,
}

impl InitialDistribution {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("invalid mass {m}")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        Ok(Self { masses })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn dirac(n: usize, state: usize) -> Result<Self> {
        if state >= n {
            return Err(Error::InvalidDistribution(format!("state {state} out of range")));
        }
        let mut m = vec![0.0; n];
        m[state] = 1.0;
        Self::new(m)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn mass(&self, x: usize) -> f64 {
        self.masses.get(x).copied().unwrap_or(0.0)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.masses.iter().all(|&m| m > 0.0)
    }

    /// Largest absolute difference between the two vectors.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.masses
            .iter()
            .zip(&other.masses)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Law of a Markov jump process on `[0, T]`: protocol plus initial distribution.
#[derive(Clone, Debug)]
pub struct ProcessMeasure {
    space: StateSpace,
    protocol: RateProtocol,
    initial: InitialDistribution,
}

impl ProcessMeasure {
    pub fn new(space: StateSpace, protocol: RateProtocol, initial: InitialDistribution) -> Result<Self> {
        let n = match space.size() {
            Some(n) => n,
            None => {
                return Err(Error::InvalidArgument(
                    "countable state spaces are handled by the birth-death module".into(),
                ))
            }
        };
        if protocol.states() != n || initial.len() != n {
            return Err(Error::InvalidArgument(format!(
                "state space has {n} states, protocol {} and initial law {}",
                protocol.states(),
                initial.len()
            )));
        }
        Ok(Self { space, protocol, initial })
    }

    /// Shorthand for an unlabelled finite space sized by the protocol.
    pub fn finite(protocol: RateProtocol, initial: InitialDistribution) -> Result<Self> {
        let space = StateSpace::finite(protocol.states())?;
        Self::new(space, protocol, initial)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn protocol(&self) -> &RateProtocol {
        &self.protocol
    }

    pub fn initial(&self) -> &InitialDistribution {
        &self.initial
    }

    pub fn horizon(&self) -> f64 {
        self.protocol.horizon()
    }

    pub fn states(&self) -> usize {
        self.protocol.states()
    }

    pub fn with_initial(&self, initial: InitialDistribution) -> Result<Self> {
        Self::new(self.space.clone(), self.protocol.clone(), initial)
    }

    /// Same initial law, protocol run backwards in time.
    pub fn protocol_reversed(&self) -> Self {
        Self {
            space: self.space.clone(),
            protocol: protocol_reverse(&self.protocol),
            initial: self.initial.clone(),
        }
    }
}
