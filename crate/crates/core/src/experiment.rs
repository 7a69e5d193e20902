//! Batch experiments driven by an [`ExperimentConfig`]: each run produces a
//! JSON summary, CSV tables and a status that maps onto the process exit code.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::birthdeath::{
    bd_divergence_scan, bd_free_energy, BirthDeathMeasure, SeriesVerdict, BD_CSV_HEADER,
};
use crate::config::{Boundary, ExperimentConfig, ExperimentKind};
use crate::enumerate::exact_verify;
use crate::error::{Error, Result};
use crate::likelihood::{PathMeasure, ScorePair};
use crate::sampler::sample_ensemble;
use crate::transforms::{invert_transform, PathTransform};
use crate::verify::{
    integral_from_scores, mgf_from_scores, ratio_from_scores_binned, sample_scores, Functional, IntegralReport,
    MgfGrid, RatioReport, Verdict,
};

/// Outcome of a run, ordered by severity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Inconclusive => 2,
        }
    }

    fn from_verdict(v: Verdict) -> Self {
        match v {
            Verdict::Pass => Status::Pass,
            Verdict::Fail => Status::Fail,
            Verdict::Inconclusive => Status::Inconclusive,
        }
    }

    fn worst(a: Status, b: Status) -> Status {
        a.max(b)
    }
}

pub const EXIT_INVALID_CONFIG: i32 = 3;

/// Exit code for a run that stopped with an error. Anything rooted in the
/// inputs (bad parameters, inequivalent measures, oversize enumerations)
/// counts as an invalid configuration; numerical trouble is inconclusive.
pub fn exit_code_for_error(e: &Error) -> i32 {
    match e {
        Error::Sample { source, .. } => exit_code_for_error(source),
        Error::Numerical(_) | Error::ThinningBound { .. } | Error::Io(_) => Status::Inconclusive.exit_code(),
        _ => EXIT_INVALID_CONFIG,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OutputFormat {
    Json,
    Csv,
    #[default]
    Both,
}

/// Summary plus named CSV tables.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub status: Status,
    pub summary: Value,
    pub tables: Vec<(String, String)>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }

    /// Writes `summary.json` and the tables into `dir`; returns the paths written.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        if matches!(format, OutputFormat::Json | OutputFormat::Both) {
            let p = dir.join("summary.json");
            std::fs::write(&p, self.summary_json())?;
            written.push(p);
        }
        if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
            for (name, body) in &self.tables {
                let p = dir.join(name);
                std::fs::write(&p, body)?;
                written.push(p);
            }
        }
        Ok(written)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.kind {
        ExperimentKind::VerifyTft => verify_tft(cfg),
        ExperimentKind::Enumerate => enumerate(cfg),
        ExperimentKind::BdConstant => bd_constant(cfg),
        ExperimentKind::BdStrong => bd_strong(cfg),
        ExperimentKind::SampleDump => sample_dump(cfg),
    }
}

fn kind_name(k: ExperimentKind) -> Value {
    serde_json::to_value(k).expect("kind serializes")
}

/// Ratio report without the per-bin table, which goes to CSV.
fn ratio_summary(r: &RatioReport) -> Value {
    json!({
        "functional": r.functional,
        "n_forward": r.n_forward,
        "n_backward": r.n_backward,
        "bin_width": r.bin_width,
        "bins": r.bins.len(),
        "scored_bins": r.scored_bins,
        "agreeing_bins": r.agreeing_bins,
        "verdict": r.verdict,
        "upper_tail_excess": r.upper_tail_excess,
        "lower_tail_excess": r.lower_tail_excess,
        "direction": r.direction,
    })
}

struct BoundaryRun {
    boundary: Boundary,
    integral: IntegralReport,
    mgf: MgfGrid,
    distribution: Option<RatioReport>,
    heat: Option<RatioReport>,
    max_abs_score: f64,
}

impl BoundaryRun {
    fn status(&self) -> Status {
        let mut s = if self.integral.pass && self.mgf.pass { Status::Pass } else { Status::Fail };
        if let Some(d) = &self.distribution {
            s = Status::worst(s, Status::from_verdict(d.verdict));
        }
        s
    }

    fn tag(&self) -> &'static str {
        match self.boundary {
            Boundary::Bc1 => "bc1",
            Boundary::Bc2 => "bc2",
        }
    }
}

fn run_pair<M: PathMeasure>(pair: &ScorePair<M>, boundary: Boundary, cfg: &ExperimentConfig) -> Result<BoundaryRun> {
    let samples = sample_scores(pair, cfg.n, cfg.seed)?;
    let functional = match boundary {
        Boundary::Bc1 => Functional::Entropy,
        Boundary::Bc2 => Functional::Work,
    };
    Ok(BoundaryRun {
        boundary,
        integral: integral_from_scores(&samples.forward),
        mgf: mgf_from_scores(&samples, &cfg.lambdas, cfg.seed, cfg.allow_outside_strip)?,
        distribution: cfg
            .distribution_test
            .then(|| ratio_from_scores_binned(&samples, functional, cfg.bins)),
        heat: cfg.heat_test.then(|| ratio_from_scores_binned(&samples, Functional::Heat, cfg.bins)),
        max_abs_score: samples.forward.iter().map(|s| s.value.abs()).fold(0.0, f64::max),
    })
}

fn transform_name(phi: &PathTransform) -> Value {
    serde_json::to_value(phi).expect("transform serializes")
}

fn verify_tft(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (p, h) = cfg.process()?;
    let phi = cfg.path_transform()?;
    let involution = invert_transform(&phi).involution;
    let mut runs = Vec::new();
    for b in cfg.boundaries(h.as_ref()) {
        let run = match b {
            Boundary::Bc1 => run_pair(&ScorePair::entropy_production(p.clone(), phi.clone())?, b, cfg)?,
            Boundary::Bc2 => {
                let h = h
                    .as_ref()
                    .ok_or_else(|| Error::Config("the bc2 boundary needs `energies`".into()))?;
                run_pair(&ScorePair::dissipated_work(p.clone(), h, phi.clone())?, b, cfg)?
            }
        };
        runs.push(run);
    }
    let mut status = Status::Pass;
    let mut tables = Vec::new();
    let mut reports = Vec::new();
    for r in &runs {
        status = Status::worst(status, r.status());
        tables.push((format!("mgf_{}.csv", r.tag()), r.mgf.to_csv()));
        if let Some(d) = &r.distribution {
            tables.push((format!("ratio_{}.csv", r.tag()), d.to_csv()));
        }
        if let Some(d) = &r.heat {
            tables.push((format!("heat_{}.csv", r.tag()), d.to_csv()));
        }
        reports.push(json!({
            "boundary": r.boundary,
            "status": r.status(),
            "max_abs_score": r.max_abs_score,
            "integral": r.integral,
            "mgf": r.mgf,
            "distribution": r.distribution.as_ref().map(ratio_summary),
            // Diagnostic only: heat is not expected to obey the identity.
            "heat": r.heat.as_ref().map(ratio_summary),
        }));
    }
    let summary = json!({
        "kind": kind_name(cfg.kind),
        "seed": cfg.seed,
        "n": cfg.n,
        "states": p.states(),
        "horizon": p.horizon(),
        "transform": transform_name(&phi),
        "involution": involution,
        "status": status,
        "boundaries": reports,
    });
    Ok(Outcome { status, summary, tables })
}

fn enumerate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (p, q, sigma) = cfg.chains()?;
    let report = exact_verify(&p, &q, &sigma, &cfg.lambdas)?;
    let status = if report.pass { Status::Pass } else { Status::Fail };
    let tables = vec![("mgf.csv".to_string(), report.mgf_csv()), ("support.csv".to_string(), report.support_csv())];
    let summary = json!({
        "kind": kind_name(cfg.kind),
        "status": status,
        "report": report,
    });
    Ok(Outcome { status, summary, tables })
}

fn bd_time(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.t
        .or(cfg.horizon)
        .ok_or_else(|| Error::Config("missing key `t`".into()))
}

fn bd_constant(cfg: &ExperimentConfig) -> Result<Outcome> {
    let bias = cfg.bias()?;
    let t = bd_time(cfg)?;
    let rows = cfg
        .lambdas
        .iter()
        .map(|&l| bd_free_energy(&bias, l, t, cfg.n_max))
        .collect::<Result<Vec<_>>>()?;
    let mut status = Status::Pass;
    let mut csv = format!("{BD_CSV_HEADER}\n");
    for r in &rows {
        let s = match (r.reliable, r.inside_bounds) {
            (_, false) => Status::Fail,
            (false, true) => Status::Inconclusive,
            (true, true) => Status::Pass,
        };
        status = Status::worst(status, s);
        let _ = writeln!(csv, "{}", r.csv_row());
    }
    let summary = json!({
        "kind": kind_name(cfg.kind),
        "bias": bias,
        "t": t,
        "status": status,
        "rows": rows,
    });
    Ok(Outcome { status, summary, tables: vec![("bd.csv".into(), csv)] })
}

fn bd_strong(cfg: &ExperimentConfig) -> Result<Outcome> {
    let bias = cfg.bias()?;
    let t = bd_time(cfg)?;
    let n_list = cfg.n_list.clone().unwrap_or_else(|| vec![25, 50, 100, 200]);
    let mut status = Status::Pass;
    let mut csv = format!("{BD_CSV_HEADER}\n");
    let mut scans = Vec::new();
    for &l in &cfg.lambdas {
        let scan = bd_divergence_scan(&bias, l, t, &n_list)?;
        // Divergence is expected off the strip's right edge, convergence on it.
        let expected = if l > 0.0 { SeriesVerdict::Divergent } else { SeriesVerdict::Convergent };
        let s = match scan.verdict {
            SeriesVerdict::Undetermined => Status::Inconclusive,
            v if v == expected => Status::Pass,
            _ => Status::Fail,
        };
        status = Status::worst(status, s);
        for i in 0..scan.n_list.len() {
            let _ = writeln!(csv, "{}", scan.csv_row(i));
        }
        scans.push(json!({
            "lambda": l,
            "converged": scan.converged(),
            "verdict": scan.verdict,
            "divergence_onset": scan.divergence_onset,
            "n_list": scan.n_list,
            "partial_sums_log": scan.partial_sums_log,
            "growth_log10": scan.growth_log10,
            "lower_series_log": scan.lower_series_log,
            "tail_bound_log": scan.tail_bound_log,
            "eta": scan.eta.value,
            "status": s,
        }));
    }
    let mut tables = vec![("bd.csv".to_string(), csv)];
    let strip = if cfg.bd_samples > 0 {
        let m = BirthDeathMeasure::new(bias.clone(), t, cfg.rho)?;
        let pair = ScorePair::new(m.clone(), m, PathTransform::TimeReversal)?;
        let samples = sample_scores(&pair, cfg.bd_samples, cfg.seed)?;
        let strip_lambdas: Vec<f64> = cfg.lambdas.iter().copied().filter(|l| (-1.0..=0.0).contains(l)).collect();
        let grid = if strip_lambdas.is_empty() { vec![-1.0, -0.75, -0.5, -0.25, 0.0] } else { strip_lambdas };
        let mgf = mgf_from_scores(&samples, &grid, cfg.seed, false)?;
        status = Status::worst(status, if mgf.pass { Status::Pass } else { Status::Fail });
        tables.push(("mgf_strip.csv".into(), mgf.to_csv()));
        Some(json!({ "rho": cfg.rho, "n": cfg.bd_samples, "mgf": mgf }))
    } else {
        None
    };
    let summary = json!({
        "kind": kind_name(cfg.kind),
        "bias": bias,
        "t": t,
        "status": status,
        "scans": scans,
        "strip_check": strip,
    });
    Ok(Outcome { status, summary, tables })
}

fn sample_dump(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (p, _) = cfg.process()?;
    let paths = sample_ensemble(&p, cfg.n, cfg.seed)?;
    let mut text = String::new();
    for w in &paths {
        let _ = writeln!(text, "{w}");
    }
    let jumps: usize = paths.iter().map(|w| w.jump_count()).sum();
    let mut final_counts = vec![0usize; p.states()];
    for w in &paths {
        final_counts[w.final_state()] += 1;
    }
    let summary = json!({
        "kind": kind_name(cfg.kind),
        "seed": cfg.seed,
        "n": cfg.n,
        "status": Status::Pass,
        "mean_jumps": if paths.is_empty() { 0.0 } else { jumps as f64 / paths.len() as f64 },
        "final_state_counts": final_counts,
    });
    // The dump is the point of this experiment, so it is written in every format.
    Ok(Outcome { status: Status::Pass, summary, tables: vec![("paths.txt".into(), text)] })
}
