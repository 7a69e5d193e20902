use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numeric::integrate_probability_ode;
use crate::process::protocol::{ProtocolForm, RateMatrix};
use crate::process::{InitialDistribution, ProcessMeasure};

/// Absolute tolerance of the adaptive integrator for functional protocols.
pub const ODE_TOL: f64 = 1e-10;

fn generator(m: &RateMatrix) -> DMatrix<f64> {
    let n = m.size();
    DMatrix::from_fn(n, n, |i, j| if i == j { -m.exit(i) } else { m.get(i, j) })
}

fn normalise(mut v: Vec<f64>) -> Result<InitialDistribution> {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let total: f64 = v.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Numerical(format!("law lost its mass (total {total})")));
    }
    InitialDistribution::new(v.into_iter().map(|x| x / total).collect())
}

/// Law `μ(·, s)` of `X_s` under `m`, solving the forward equation
/// `dμ/ds = μ G(s)`.
pub fn evolve_law(m: &ProcessMeasure, s: f64) -> Result<InitialDistribution> {
    let horizon = m.horizon();
    if !(0.0..=horizon).contains(&s) {
        return Err(Error::InvalidArgument(format!("time {s} outside [0, {horizon}]")));
    }
    let mu0 = m.initial().masses().to_vec();
    if s == 0.0 {
        return Ok(m.initial().clone());
    }
    match m.protocol().form() {
        ProtocolForm::PiecewiseConstant { breakpoints, matrices } => {
            let n = mu0.len();
            let mut row = DMatrix::from_row_slice(1, n, &mu0);
            for (k, mat) in matrices.iter().enumerate() {
                let lo = breakpoints[k];
                let hi = breakpoints[k + 1].min(s);
                if hi <= lo {
                    break;
                }
                let step = (generator(mat) * (hi - lo)).exp();
                row = row * step;
            }
            normalise(row.iter().copied().collect())
        }
        ProtocolForm::Functional { .. } => {
            let protocol = m.protocol();
            let n = mu0.len();
            let rhs = |t: f64, y: &[f64], out: &mut [f64]| {
                for j in 0..n {
                    out[j] = -protocol.exit_rate(j, t) * y[j];
                }
                for i in 0..n {
                    if y[i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        if i != j {
                            out[j] += y[i] * protocol.rate(i, j, t);
                        }
                    }
                }
            };
            let y = integrate_probability_ode(rhs, &mu0, 0.0, s, ODE_TOL)?;
            normalise(y)
        }
    }
}
