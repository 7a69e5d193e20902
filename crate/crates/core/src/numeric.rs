//! Small numerical kernels shared by the modules: log-space sums, adaptive
//! quadrature and an embedded Runge-Kutta integrator for the forward equation.

use crate::error::{Error, Result};

/// `log(sum(exp(x)))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

const SIMPSON_MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if b < a {
        return Err(Error::Numerical(format!("reversed interval [{a}, {b}]")));
    }
    if b == a {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, SIMPSON_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 || m <= a || m >= b {
        return Err(Error::Numerical(format!(
            "quadrature did not reach tolerance {tol:e} on [{a}, {b}]"
        )));
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Dormand-Prince 5(4) coefficients.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const MAX_ODE_STEPS: usize = 1_000_000;

/// Integrates the probability-vector ODE `dy/ds = rhs(s, y)` from `s0` to `s1`
/// with the embedded 5(4) pair, absolute tolerance `atol`. After every
/// accepted step negative round-off is clipped and the vector renormalised.
pub fn integrate_probability_ode<F>(rhs: F, y0: &[f64], s0: f64, s1: f64, atol: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if s1 <= s0 {
        return Ok(y);
    }
    let mut s = s0;
    let mut h = ((s1 - s0) * 1e-3).max(1e-12);
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut steps = 0usize;
    while s < s1 {
        steps += 1;
        if steps > MAX_ODE_STEPS {
            return Err(Error::Numerical(format!(
                "forward equation exceeded {MAX_ODE_STEPS} steps before s = {s1}"
            )));
        }
        if s + h > s1 {
            h = s1 - s;
        }
        for stage in 0..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(stage) {
                    acc += h * DP_A[stage][j] * kj[i];
                }
                tmp[i] = acc;
            }
            rhs(s + DP_C[stage] * h, &tmp, &mut k[stage]);
        }
        let mut err: f64 = 0.0;
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut hi = y[i];
            let mut lo = y[i];
            for stage in 0..7 {
                hi += h * DP_B5[stage] * k[stage][i];
                lo += h * DP_B4[stage] * k[stage][i];
            }
            next[i] = hi;
            err = err.max((hi - lo).abs());
        }
        if !err.is_finite() {
            return Err(Error::Numerical("non-finite forward-equation step".into()));
        }
        if err <= atol {
            s += h;
            for v in next.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let total: f64 = next.iter().sum();
            if total <= 0.0 || !total.is_finite() {
                return Err(Error::Numerical("probability mass lost in forward equation".into()));
            }
            for v in next.iter_mut() {
                *v /= total;
            }
            y = next;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (atol / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if h < 1e-14 * (s1 - s0).max(1.0) && s < s1 {
            return Err(Error::Numerical(format!(
                "forward-equation step size underflow at s = {s}"
            )));
        }
    }
    Ok(y)
}
