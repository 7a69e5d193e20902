//! Experiment configuration: a flat TOML document whose `kind` selects the
//! experiment. Matrices are written as lists of rows.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::birthdeath::BiasSpec;
use crate::enumerate::{CoordinatePermutation, DiscreteChain};
use crate::error::{Error, Result};
use crate::process::{
    build_ldb_protocol, gibbs_distribution, Connectivity, Energy, Hamiltonian, InitialDistribution,
    ProcessMeasure, RateMatrix, RateProtocol,
};
use crate::transforms::{PathTransform, PermutationFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    VerifyTft,
    Enumerate,
    BdConstant,
    BdStrong,
    SampleDump,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Backward law is the forward law at `T`: entropy production.
    Bc1,
    /// Gibbs laws at both ends: dissipated work.
    Bc2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    /// `"gibbs"`, `"uniform"` or `"dirac:<state>"`.
    Named(String),
    Masses(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    /// `"reversal"`, `"identity"` or `"cyclic"` (shift by `shift`).
    Named(String),
    Explicit(Vec<usize>),
}

fn default_format_lambdas() -> Vec<f64> {
    vec![-1.0, -0.75, -0.5, -0.25, 0.0]
}

fn default_n() -> usize {
    100_000
}

fn default_base_rate() -> f64 {
    1.0
}

fn default_transform() -> String {
    "time-reversal".into()
}

fn default_shift() -> i64 {
    1
}

fn default_rho() -> f64 {
    0.5
}

/// Full experiment description. Unused keys for a given kind are ignored;
/// unknown keys are an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_format_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub allow_outside_strip: bool,

    // finite-state process
    pub states: Option<usize>,
    pub horizon: Option<f64>,
    pub beta: Option<f64>,
    #[serde(default = "default_base_rate")]
    pub base_rate: f64,
    pub breakpoints: Option<Vec<f64>>,
    /// One energy row per interval, or a single row for static energies.
    pub energies: Option<Vec<Vec<f64>>>,
    /// Per-state energy slopes; with a single `energies` row gives `H = base + slope·s`.
    pub energy_slopes: Option<Vec<f64>>,
    /// 0/1 adjacency matrix for the local-detailed-balance kinetics.
    pub adjacency: Option<Vec<Vec<u8>>>,
    /// Explicit rate matrices, one per interval, instead of energies.
    pub rates: Option<Vec<Vec<Vec<f64>>>>,
    pub initial: Option<InitialSpec>,
    pub boundaries: Option<Vec<Boundary>>,
    #[serde(default = "default_transform")]
    pub transform: String,
    pub permutation: Option<String>,
    #[serde(default = "default_shift")]
    pub shift: i64,
    pub permutation_table: Option<BTreeMap<String, Vec<usize>>>,
    #[serde(default)]
    pub heat_test: bool,
    #[serde(default = "default_true")]
    pub distribution_test: bool,
    /// Histogram bin count; Freedman–Diaconis when absent.
    pub bins: Option<usize>,

    // discrete chains
    pub p_initial: Option<Vec<f64>>,
    pub p_matrices: Option<Vec<Vec<Vec<f64>>>>,
    pub q_initial: Option<Vec<f64>>,
    pub q_matrices: Option<Vec<Vec<Vec<f64>>>>,
    pub sigma: Option<SigmaSpec>,

    // birth–death
    pub alpha: Option<f64>,
    pub t: Option<f64>,
    pub n_max: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Paths per ensemble for the strip check of `bd-strong`; 0 skips it.
    #[serde(default)]
    pub bd_samples: usize,
}

fn default_true() -> bool {
    true
}

fn cfg<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing key `{key}`")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn hamiltonian(&self) -> Result<Option<Hamiltonian>> {
        let Some(rows) = &self.energies else {
            return Ok(None);
        };
        let horizon = cfg(self.horizon, "horizon")?;
        let beta = self.beta.unwrap_or(1.0);
        let states = rows.first().map_or(0, Vec::len);
        if let Some(s) = self.states {
            if s != states {
                return Err(Error::Config(format!("`states` = {s} but energy rows have {states} entries")));
            }
        }
        let energy = match (&self.breakpoints, &self.energy_slopes, rows.len()) {
            (_, Some(slope), 1) => Energy::Linear { base: rows[0].clone(), slope: slope.clone() },
            (_, Some(_), _) => return Err(Error::Config("`energy_slopes` needs a single energy row".into())),
            (None, None, 1) => Energy::Static(rows[0].clone()),
            (Some(b), None, _) => Energy::PiecewiseConstant { breakpoints: b.clone(), levels: rows.clone() },
            (None, None, _) => return Err(Error::Config("several energy rows need `breakpoints`".into())),
        };
        Ok(Some(Hamiltonian::new(states, horizon, beta, energy)?))
    }

    fn connectivity(&self, states: usize) -> Result<Option<Connectivity>> {
        let Some(adj) = &self.adjacency else {
            return Ok(None);
        };
        if adj.len() != states {
            return Err(Error::Config(format!("adjacency has {} rows, expected {states}", adj.len())));
        }
        let rows: Vec<Vec<bool>> = adj.iter().map(|r| r.iter().map(|&x| x != 0).collect()).collect();
        Ok(Some(Connectivity::from_adjacency(&rows)?))
    }

    pub fn protocol(&self, h: Option<&Hamiltonian>) -> Result<RateProtocol> {
        match (&self.rates, h) {
            (Some(_), Some(_)) => Err(Error::Config("give either `rates` or `energies`, not both".into())),
            (Some(mats), None) => {
                let matrices = mats.iter().map(|m| RateMatrix::from_rows(m)).collect::<Result<Vec<_>>>()?;
                match &self.breakpoints {
                    Some(b) => RateProtocol::piecewise_constant(b.clone(), matrices),
                    None if matrices.len() == 1 => {
                        RateProtocol::constant(matrices[0].clone(), cfg(self.horizon, "horizon")?)
                    }
                    None => Err(Error::Config("several rate matrices need `breakpoints`".into())),
                }
            }
            (None, Some(h)) => {
                let graph = self.connectivity(h.states())?;
                build_ldb_protocol(h, self.base_rate, graph.as_ref())
            }
            (None, None) => Err(Error::Config("need `rates` or `energies`".into())),
        }
    }

    pub fn process(&self) -> Result<(ProcessMeasure, Option<Hamiltonian>)> {
        let h = self.hamiltonian()?;
        let protocol = self.protocol(h.as_ref())?;
        let n = protocol.states();
        let initial = match (&self.initial, &h) {
            (Some(InitialSpec::Masses(m)), _) => InitialDistribution::new(m.clone())?,
            (Some(InitialSpec::Named(name)), _) => named_initial(name, n, h.as_ref())?,
            (None, Some(h)) => gibbs_distribution(h, 0.0)?.0,
            (None, None) => InitialDistribution::uniform(n)?,
        };
        Ok((ProcessMeasure::finite(protocol, initial)?, h))
    }

    pub fn path_transform(&self) -> Result<PathTransform> {
        match self.transform.as_str() {
            "identity" => Ok(PathTransform::Identity),
            "time-reversal" => Ok(PathTransform::TimeReversal),
            "holding-permutation" => Ok(PathTransform::HoldingPermutation(self.family()?)),
            other => Err(Error::Config(format!("unknown transform `{other}`"))),
        }
    }

    fn family(&self) -> Result<PermutationFamily> {
        match self.permutation.as_deref().unwrap_or("cyclic-shift") {
            "identity" => Ok(PermutationFamily::Identity),
            "cyclic-shift" => Ok(PermutationFamily::CyclicShift(self.shift)),
            "reverse" => Ok(PermutationFamily::Reverse),
            "table" => {
                let table = cfg(self.permutation_table.as_ref(), "permutation_table")?;
                let mut entries = BTreeMap::new();
                for (k, v) in table {
                    let n: usize = k
                        .parse()
                        .map_err(|_| Error::Config(format!("permutation_table key `{k}` is not a jump count")))?;
                    entries.insert(n, v.clone());
                }
                PermutationFamily::table(entries)
            }
            other => Err(Error::Config(format!("unknown permutation family `{other}`"))),
        }
    }

    pub fn boundaries(&self, h: Option<&Hamiltonian>) -> Vec<Boundary> {
        match (&self.boundaries, h) {
            (Some(b), _) => b.clone(),
            (None, Some(_)) => vec![Boundary::Bc2],
            (None, None) => vec![Boundary::Bc1],
        }
    }

    pub fn chains(&self) -> Result<(DiscreteChain, DiscreteChain, CoordinatePermutation)> {
        let p = DiscreteChain::new(
            cfg(self.p_initial.clone(), "p_initial")?,
            cfg(self.p_matrices.clone(), "p_matrices")?,
        )?;
        let q = match (&self.q_initial, &self.q_matrices) {
            (None, None) => p.clone(),
            (qi, qm) => DiscreteChain::new(
                qi.clone().unwrap_or_else(|| p.initial().to_vec()),
                qm.clone().unwrap_or_else(|| p.step_matrices().to_vec()),
            )?,
        };
        let steps = p.steps();
        let sigma = match self.sigma.clone().unwrap_or(SigmaSpec::Named("reversal".into())) {
            SigmaSpec::Explicit(s) => CoordinatePermutation::new(s)?,
            SigmaSpec::Named(name) => match name.as_str() {
                "reversal" => CoordinatePermutation::reversal(steps),
                "identity" => CoordinatePermutation::identity(steps),
                "cyclic" => CoordinatePermutation::cyclic(steps, self.shift.rem_euclid(steps as i64 + 1) as usize),
                other => return Err(Error::Config(format!("unknown sigma `{other}`"))),
            },
        };
        Ok((p, q, sigma))
    }

    pub fn bias(&self) -> Result<BiasSpec> {
        let b = match self.kind {
            ExperimentKind::BdConstant => BiasSpec::Constant(cfg(self.alpha, "alpha")?),
            _ => BiasSpec::Strong,
        };
        b.validate()?;
        Ok(b)
    }
}

fn named_initial(name: &str, n: usize, h: Option<&Hamiltonian>) -> Result<InitialDistribution> {
    match name {
        "uniform" => InitialDistribution::uniform(n),
        "gibbs" => {
            let h = h.ok_or_else(|| Error::Config("`initial = \"gibbs\"` needs energies".into()))?;
            Ok(gibbs_distribution(h, 0.0)?.0)
        }
        other => match other.strip_prefix("dirac:") {
            Some(s) => {
                let x = s.parse().map_err(|_| Error::Config(format!("bad dirac state `{s}`")))?;
                InitialDistribution::dirac(n, x)
            }
            None => Err(Error::Config(format!("unknown initial law `{other}`"))),
        },
    }
}
