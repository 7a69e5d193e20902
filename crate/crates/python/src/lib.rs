//! Python bindings. Reports come back as plain dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

use tftlab_core::birthdeath::{bd_divergence_scan, bd_free_energy, BiasSpec};
use tftlab_core::config::ExperimentConfig;
use tftlab_core::enumerate::{exact_verify, CoordinatePermutation, DiscreteChain};
use tftlab_core::experiment::{exit_code_for_error, run_experiment};
use tftlab_core::likelihood::{self, Direction, PathMeasure, Score, ScorePair as CorePair};
use tftlab_core::path::JumpPath;
use tftlab_core::process::{
    build_ldb_protocol, evolve_law, gibbs_distribution, Energy, Hamiltonian, InitialDistribution, ProcessMeasure,
    RateMatrix, RateProtocol,
};
use tftlab_core::sampler::sample_ensemble;
use tftlab_core::transforms::{apply_transform, invert_transform, PathTransform, PermutationFamily};
use tftlab_core::verify::{self, Functional};

create_exception!(tftlab, TftlabError, PyException);

fn err(e: tftlab_core::Error) -> PyErr {
    TftlabError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    match v {
        Value::Null => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_bound_py_any(py),
            None => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py),
        },
        Value::String(s) => s.into_bound_py_any(py),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            Ok(PyList::new(py, items)?.into_any())
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            Ok(d.into_any())
        }
    }
}

fn report<'py, T: serde::Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(x).map_err(|e| TftlabError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// Piecewise-constant jump path on `[0, T]`.
#[pyclass(name = "JumpPath", module = "tftlab", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyJumpPath(JumpPath);

#[pymethods]
impl PyJumpPath {
    #[new]
    #[pyo3(signature = (x0, jumps, horizon))]
    fn new(x0: usize, jumps: Vec<(f64, usize)>, horizon: f64) -> PyResult<Self> {
        JumpPath::from_pairs(x0, &jumps, horizon).map(Self).map_err(err)
    }

    /// Parses the text form `x0 T n t_1 x_1 ... t_n x_n`.
    #[staticmethod]
    fn parse(line: &str) -> PyResult<Self> {
        line.parse().map(Self).map_err(err)
    }

    #[getter]
    fn x0(&self) -> usize {
        self.0.initial_state()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    #[getter]
    fn jumps(&self) -> Vec<(f64, usize)> {
        self.0.jumps().iter().map(|j| (j.time, j.state)).collect()
    }

    fn states(&self) -> Vec<usize> {
        self.0.states()
    }

    fn holding_durations(&self) -> Vec<f64> {
        self.0.holding_durations()
    }

    fn state_at(&self, s: f64) -> usize {
        self.0.state_at(s)
    }

    fn __len__(&self) -> usize {
        self.0.jump_count()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("JumpPath('{}')", self.0)
    }
}

/// Measurable path map: identity, time reversal, holding-time permutations
/// and their compositions.
#[pyclass(name = "Transform", module = "tftlab", frozen, from_py_object)]
#[derive(Clone)]
struct PyTransform(PathTransform);

#[pymethods]
impl PyTransform {
    #[staticmethod]
    fn identity() -> Self {
        Self(PathTransform::Identity)
    }

    #[staticmethod]
    fn time_reversal() -> Self {
        Self(PathTransform::TimeReversal)
    }

    /// Holding durations shifted cyclically by `shift` slots.
    #[staticmethod]
    #[pyo3(signature = (shift = 1))]
    fn holding_cyclic(shift: i64) -> Self {
        Self(PathTransform::HoldingPermutation(PermutationFamily::CyclicShift(shift)))
    }

    #[staticmethod]
    fn holding_reverse() -> Self {
        Self(PathTransform::HoldingPermutation(PermutationFamily::Reverse))
    }

    /// Applied left to right.
    #[staticmethod]
    fn compose(parts: Vec<PyTransform>) -> Self {
        Self(PathTransform::Composition(parts.into_iter().map(|p| p.0).collect()))
    }

    fn apply(&self, path: &PyJumpPath) -> PyResult<PyJumpPath> {
        apply_transform(&self.0, &path.0).map(PyJumpPath).map_err(err)
    }

    fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    /// `"yes"`, `"no"` or `"unknown"`.
    fn involution(&self) -> &'static str {
        match invert_transform(&self.0).involution {
            tftlab_core::transforms::Involution::Yes => "yes",
            tftlab_core::transforms::Involution::No => "no",
            tftlab_core::transforms::Involution::Unknown => "unknown",
        }
    }

    fn __repr__(&self) -> String {
        format!("Transform({:?})", self.0)
    }
}

fn initial_law(spec: Option<Vec<f64>>, n: usize, h: Option<&Hamiltonian>) -> PyResult<InitialDistribution> {
    match (spec, h) {
        (Some(v), _) => InitialDistribution::new(v).map_err(err),
        (None, Some(h)) => Ok(gibbs_distribution(h, 0.0).map_err(err)?.0),
        (None, None) => InitialDistribution::uniform(n).map_err(err),
    }
}

/// Finite-state jump process, optionally carrying the Hamiltonian it was
/// built from.
#[pyclass(name = "Process", module = "tftlab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProcess {
    measure: ProcessMeasure,
    hamiltonian: Option<Hamiltonian>,
}

#[pymethods]
impl PyProcess {
    /// Explicit rate matrices, one per interval between `breakpoints`.
    #[staticmethod]
    #[pyo3(signature = (rates, horizon, initial = None, breakpoints = None))]
    fn from_rates(
        rates: Vec<Vec<Vec<f64>>>,
        horizon: f64,
        initial: Option<Vec<f64>>,
        breakpoints: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let mats = rates.iter().map(|m| RateMatrix::from_rows(m)).collect::<Result<Vec<_>, _>>().map_err(err)?;
        let protocol = match breakpoints {
            Some(b) => RateProtocol::piecewise_constant(b, mats),
            None if mats.len() == 1 => RateProtocol::constant(mats[0].clone(), horizon),
            None => return Err(TftlabError::new_err("several rate matrices need breakpoints")),
        }
        .map_err(err)?;
        let mu = initial_law(initial, protocol.states(), None)?;
        let measure = ProcessMeasure::finite(protocol, mu).map_err(err)?;
        Ok(Self { measure, hamiltonian: None })
    }

    /// Local-detailed-balance kinetics for piecewise-constant energies; one
    /// row per interval. The initial law defaults to the Gibbs law at time 0.
    #[staticmethod]
    #[pyo3(signature = (energies, horizon, breakpoints = None, beta = 1.0, base_rate = 1.0, initial = None))]
    fn ldb(
        energies: Vec<Vec<f64>>,
        horizon: f64,
        breakpoints: Option<Vec<f64>>,
        beta: f64,
        base_rate: f64,
        initial: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let states = energies.first().map_or(0, Vec::len);
        let energy = match breakpoints {
            Some(b) => Energy::PiecewiseConstant { breakpoints: b, levels: energies },
            None if energies.len() == 1 => Energy::Static(energies[0].clone()),
            None => return Err(TftlabError::new_err("several energy rows need breakpoints")),
        };
        let h = Hamiltonian::new(states, horizon, beta, energy).map_err(err)?;
        let protocol = build_ldb_protocol(&h, base_rate, None).map_err(err)?;
        let mu = initial_law(initial, states, Some(&h))?;
        let measure = ProcessMeasure::finite(protocol, mu).map_err(err)?;
        Ok(Self { measure, hamiltonian: Some(h) })
    }

    #[getter]
    fn states(&self) -> usize {
        self.measure.states()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.measure.horizon()
    }

    fn sample(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<Vec<PyJumpPath>> {
        let m = &self.measure;
        let paths = py.detach(|| sample_ensemble(m, n, seed)).map_err(err)?;
        Ok(paths.into_iter().map(PyJumpPath).collect())
    }

    fn log_density(&self, path: &PyJumpPath) -> PyResult<f64> {
        self.measure.log_path_density(&path.0).map_err(err)
    }

    /// Law of `X_s`.
    fn law_at(&self, s: f64) -> PyResult<Vec<f64>> {
        Ok(evolve_law(&self.measure, s).map_err(err)?.masses().to_vec())
    }

    fn heat(&self, path: &PyJumpPath) -> PyResult<f64> {
        likelihood::heat_dissipation(&self.measure, &path.0).map_err(err)
    }
}

fn score_dict<'py>(py: Python<'py>, s: &Score) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", s.value)?;
    d.set_item("boundary", s.boundary)?;
    d.set_item("current", s.current)?;
    d.set_item("direction", if s.direction == Direction::Forward { "forward" } else { "backward" })?;
    Ok(d)
}

/// Forward measure, comparison measure and transform.
#[pyclass(name = "ScorePair", module = "tftlab", frozen)]
struct PyScorePair(CorePair<ProcessMeasure>);

fn functional(name: &str) -> PyResult<Functional> {
    match name {
        "entropy" => Ok(Functional::Entropy),
        "work" => Ok(Functional::Work),
        "heat" => Ok(Functional::Heat),
        other => Err(TftlabError::new_err(format!("unknown functional `{other}`"))),
    }
}

#[pymethods]
impl PyScorePair {
    /// Backward process: reversed protocol started from the law at `T`.
    #[staticmethod]
    fn entropy_production(process: &PyProcess, transform: &PyTransform) -> PyResult<Self> {
        CorePair::entropy_production(process.measure.clone(), transform.0.clone())
            .map(Self)
            .map_err(err)
    }

    /// Gibbs laws at both ends; the process must come from `Process.ldb`.
    #[staticmethod]
    fn dissipated_work(process: &PyProcess, transform: &PyTransform) -> PyResult<Self> {
        let h = process
            .hamiltonian
            .as_ref()
            .ok_or_else(|| TftlabError::new_err("dissipated work needs a process built from energies"))?;
        CorePair::dissipated_work(process.measure.clone(), h, transform.0.clone())
            .map(Self)
            .map_err(err)
    }

    /// Arbitrary pair of processes on the same horizon.
    #[staticmethod]
    fn custom(p: &PyProcess, q: &PyProcess, transform: &PyTransform) -> PyResult<Self> {
        CorePair::new(p.measure.clone(), q.measure.clone(), transform.0.clone())
            .map(Self)
            .map_err(err)
    }

    fn forward<'py>(&self, py: Python<'py>, path: &PyJumpPath) -> PyResult<Bound<'py, PyDict>> {
        score_dict(py, &self.0.forward(&path.0).map_err(err)?)
    }

    fn backward<'py>(&self, py: Python<'py>, path: &PyJumpPath) -> PyResult<Bound<'py, PyDict>> {
        score_dict(py, &self.0.backward(&path.0).map_err(err)?)
    }

    /// Forward and backward score values of `n` paths each.
    fn sample_scores(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let s = py.detach(|| verify::sample_scores(&self.0, n, seed)).map_err(err)?;
        Ok((s.forward.iter().map(|x| x.value).collect(), s.backward.iter().map(|x| x.value).collect()))
    }

    #[pyo3(signature = (lambdas, n, seed, allow_outside = false))]
    fn mgf<'py>(
        &self,
        py: Python<'py>,
        lambdas: Vec<f64>,
        n: usize,
        seed: u64,
        allow_outside: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let g = py
            .detach(|| verify::estimate_mgf_pair(&self.0, &lambdas, n, seed, allow_outside))
            .map_err(err)?;
        report(py, &g)
    }

    fn integral<'py>(&self, py: Python<'py>, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let r = py.detach(|| verify::integral_ft_check(&self.0, n, seed)).map_err(err)?;
        report(py, &r)
    }

    /// Histogram ratio test of `"entropy"`, `"work"` or `"heat"`.
    fn distributional_test<'py>(
        &self,
        py: Python<'py>,
        functional_name: &str,
        n: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let f = functional(functional_name)?;
        let r = py.detach(|| verify::distributional_test(&self.0, f, n, seed)).map_err(err)?;
        report(py, &r)
    }
}

/// Exhaustive check of the identities for two discrete chains under the
/// coordinate permutation `sigma` (default: reversal).
#[pyfunction]
#[pyo3(signature = (p_initial, p_matrices, q_initial = None, q_matrices = None, sigma = None, lambdas = None))]
fn enumerate_exact<'py>(
    py: Python<'py>,
    p_initial: Vec<f64>,
    p_matrices: Vec<Vec<Vec<f64>>>,
    q_initial: Option<Vec<f64>>,
    q_matrices: Option<Vec<Vec<Vec<f64>>>>,
    sigma: Option<Vec<usize>>,
    lambdas: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let steps = p_matrices.len();
    let q = DiscreteChain::new(
        q_initial.unwrap_or_else(|| p_initial.clone()),
        q_matrices.unwrap_or_else(|| p_matrices.clone()),
    )
    .map_err(err)?;
    let p = DiscreteChain::new(p_initial, p_matrices).map_err(err)?;
    let sigma = match sigma {
        Some(s) => CoordinatePermutation::new(s).map_err(err)?,
        None => CoordinatePermutation::reversal(steps),
    };
    let lambdas = lambdas.unwrap_or_else(|| vec![-1.0, -0.75, -0.5, -0.25, 0.0]);
    report(py, &exact_verify(&p, &q, &sigma, &lambdas).map_err(err)?)
}

/// `(1/t) log M(λ, t)` of the constant-bias birth–death heat with its bounds.
#[pyfunction]
#[pyo3(signature = (alpha, lam, t, n_max = None))]
fn bd_constant<'py>(py: Python<'py>, alpha: f64, lam: f64, t: f64, n_max: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    report(py, &bd_free_energy(&BiasSpec::Constant(alpha), lam, t, n_max).map_err(err)?)
}

/// Partial sums and divergence certificate for the strong-bias chain.
#[pyfunction]
fn bd_strong<'py>(py: Python<'py>, lam: f64, t: f64, n_list: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
    report(py, &bd_divergence_scan(&BiasSpec::Strong, lam, t, &n_list).map_err(err)?)
}

/// Runs a TOML experiment config. Returns `(exit_code, summary, tables)`;
/// configuration errors come back as exit code 3 with the message in the
/// summary.
#[pyfunction]
fn run_config<'py>(py: Python<'py>, text: &str) -> PyResult<(i32, Bound<'py, PyAny>, Bound<'py, PyDict>)> {
    let tables = PyDict::new(py);
    let outcome = ExperimentConfig::from_toml(text).and_then(|c| py.detach(|| run_experiment(&c)));
    match outcome {
        Ok(o) => {
            for (name, body) in &o.tables {
                tables.set_item(name, body)?;
            }
            Ok((o.exit_code(), to_py(py, &o.summary)?, tables))
        }
        Err(e) => {
            let summary = serde_json::json!({ "error": e.to_string() });
            Ok((exit_code_for_error(&e), to_py(py, &summary)?, tables))
        }
    }
}

#[pymodule]
fn tftlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TftlabError", m.py().get_type::<TftlabError>())?;
    m.add_class::<PyJumpPath>()?;
    m.add_class::<PyTransform>()?;
    m.add_class::<PyProcess>()?;
    m.add_class::<PyScorePair>()?;
    m.add_function(wrap_pyfunction!(enumerate_exact, m)?)?;
    m.add_function(wrap_pyfunction!(bd_constant, m)?)?;
    m.add_function(wrap_pyfunction!(bd_strong, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
