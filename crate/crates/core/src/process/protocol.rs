use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// Number of points on which functional protocols are spot-checked.
pub(crate) const VALIDATION_GRID: usize = 257;

/// Absolute tolerance used when integrating exit rates of functional protocols.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Rate evaluator `k(i, j, s)` for a functional protocol.
pub type RateFn = Arc<dyn Fn(usize, usize, f64) -> f64 + Send + Sync>;

/// Off-diagonal transition rates of a finite chain. Diagonal entries are
/// ignored on input and stored as zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    n: usize,
    rates: Vec<f64>,
    exit: Vec<f64>,
}

impl RateMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InvalidProtocol(format!(
                "rate matrix needs at least 2 states, got {n}"
            )));
        }
        let mut rates = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidProtocol(format!(
                    "rate matrix row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &k) in row.iter().enumerate() {
                if i == j {
                    continue;
                }
                if !k.is_finite() || k < 0.0 {
                    return Err(Error::InvalidProtocol(format!(
                        "rate k[{i}][{j}] = {k} is not a finite nonnegative number"
                    )));
                }
                rates[i * n + j] = k;
            }
        }
        let exit = (0..n)
            .map(|i| (0..n).map(|j| rates[i * n + j]).sum())
            .collect();
        Ok(Self { n, rates, exit })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.n + j]
    }

    #[inline]
    pub fn exit(&self, i: usize) -> f64 {
        self.exit[i]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    fn support(&self) -> Vec<bool> {
        self.rates.iter().map(|&k| k > 0.0).collect()
    }

    fn max_rate(&self) -> f64 {
        self.rates.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone)]
pub enum ProtocolForm {
    /// One rate matrix per interval `[b_k, b_{k+1})`, with `b_0 = 0` and `b_m = T`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        matrices: Vec<RateMatrix>,
    },
    /// Arbitrary evaluator with a global bound on every individual rate.
    /// `reversed` evaluates the wrapped function at `T - s`.
    Functional {
        rate: RateFn,
        bound: f64,
        reversed: bool,
    },
}

/// Time-dependent transition-rate field `k_ij(s)` on `[0, T]`.
#[derive(Clone)]
pub struct RateProtocol {
    states: usize,
    horizon: f64,
    form: ProtocolForm,
    support: Vec<bool>,
}

impl fmt::Debug for RateProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("RateProtocol");
        d.field("states", &self.states).field("horizon", &self.horizon);
        match &self.form {
            ProtocolForm::PiecewiseConstant { breakpoints, matrices } => {
                d.field("breakpoints", breakpoints).field("matrices", matrices)
            }
            ProtocolForm::Functional { bound, reversed, .. } => {
                d.field("bound", bound).field("reversed", reversed)
            }
        };
        d.finish()
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidProtocol(format!(
            "horizon must be finite and positive, got {horizon}"
        )));
    }
    Ok(())
}

impl RateProtocol {
    /// Time-independent protocol on `[0, T]`.
    pub fn constant(matrix: RateMatrix, horizon: f64) -> Result<Self> {
        Self::piecewise_constant(vec![0.0, horizon], vec![matrix])
    }

    pub fn piecewise_constant(breakpoints: Vec<f64>, matrices: Vec<RateMatrix>) -> Result<Self> {
        if matrices.is_empty() || breakpoints.len() != matrices.len() + 1 {
            return Err(Error::InvalidProtocol(format!(
                "{} breakpoints for {} intervals",
                breakpoints.len(),
                matrices.len()
            )));
        }
        let horizon = *breakpoints.last().unwrap();
        check_horizon(horizon)?;
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidProtocol("first breakpoint must be 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidProtocol(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        let states = matrices[0].size();
        let support = matrices[0].support();
        for (k, m) in matrices.iter().enumerate() {
            if m.size() != states {
                return Err(Error::InvalidProtocol(format!(
                    "interval {k} has {} states, expected {states}",
                    m.size()
                )));
            }
            if m.support() != support {
                return Err(Error::InvalidProtocol(format!(
                    "support of interval {k} differs from interval 0; rates may not switch on or off"
                )));
            }
        }
        Ok(Self {
            states,
            horizon,
            form: ProtocolForm::PiecewiseConstant { breakpoints, matrices },
            support,
        })
    }

    /// Functional protocol. `bound` must dominate every rate on `[0, T]`; it is
    /// spot-checked on a uniform grid together with nonnegativity and a
    /// time-invariant support.
    pub fn functional(states: usize, horizon: f64, rate: RateFn, bound: f64) -> Result<Self> {
        check_horizon(horizon)?;
        if states < 2 {
            return Err(Error::InvalidProtocol(format!(
                "need at least 2 states, got {states}"
            )));
        }
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidProtocol(format!("invalid rate bound {bound}")));
        }
        let mut support = vec![false; states * states];
        for g in 0..VALIDATION_GRID {
            let s = horizon * g as f64 / (VALIDATION_GRID - 1) as f64;
            for i in 0..states {
                for j in 0..states {
                    if i == j {
                        continue;
                    }
                    let k = rate(i, j, s);
                    if !k.is_finite() || k < 0.0 {
                        return Err(Error::InvalidProtocol(format!(
                            "rate k[{i}][{j}]({s}) = {k} is not a finite nonnegative number"
                        )));
                    }
                    if k > bound {
                        return Err(Error::InvalidProtocol(format!(
                            "rate k[{i}][{j}]({s}) = {k} exceeds the declared bound {bound}"
                        )));
                    }
                    let on = k > 0.0;
                    if g == 0 {
                        support[i * states + j] = on;
                    } else if support[i * states + j] != on {
                        return Err(Error::InvalidProtocol(format!(
                            "support of k[{i}][{j}] changes at s = {s}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            states,
            horizon,
            form: ProtocolForm::Functional { rate, bound, reversed: false },
            support,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn form(&self) -> &ProtocolForm {
        &self.form
    }

    /// Interval boundaries of a piecewise-constant protocol.
    pub fn breakpoints(&self) -> Option<&[f64]> {
        match &self.form {
            ProtocolForm::PiecewiseConstant { breakpoints, .. } => Some(breakpoints),
            ProtocolForm::Functional { .. } => None,
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        matches!(self.form, ProtocolForm::PiecewiseConstant { .. })
    }

    /// Whether `k_ij` is positive (anywhere, hence everywhere).
    pub fn connected(&self, i: usize, j: usize) -> bool {
        i != j && self.support[i * self.states + j]
    }

    /// Bound on every individual rate; exact maximum for piecewise protocols.
    pub fn rate_bound(&self) -> f64 {
        match &self.form {
            ProtocolForm::PiecewiseConstant { matrices, .. } => {
                matrices.iter().map(RateMatrix::max_rate).fold(0.0, f64::max)
            }
            ProtocolForm::Functional { bound, .. } => *bound,
        }
    }

    /// Index of the interval containing `s` (right-continuous).
    pub(crate) fn interval_index(breakpoints: &[f64], s: f64) -> usize {
        let m = breakpoints.len() - 1;
        let idx = breakpoints.partition_point(|&b| b <= s);
        idx.saturating_sub(1).min(m - 1)
    }

    pub fn rate(&self, i: usize, j: usize, s: f64) -> f64 {
        if i == j {
            return 0.0;
        }
        match &self.form {
            ProtocolForm::PiecewiseConstant { breakpoints, matrices } => {
                matrices[Self::interval_index(breakpoints, s)].get(i, j)
            }
            ProtocolForm::Functional { rate, reversed, .. } => {
                if !self.support[i * self.states + j] {
                    return 0.0;
                }
                let t = if *reversed { self.horizon - s } else { s };
                rate(i, j, t)
            }
        }
    }

    pub fn exit_rate(&self, i: usize, s: f64) -> f64 {
        match &self.form {
            ProtocolForm::PiecewiseConstant { breakpoints, matrices } => {
                matrices[Self::interval_index(breakpoints, s)].exit(i)
            }
            ProtocolForm::Functional { .. } => {
                (0..self.states).map(|j| self.rate(i, j, s)).sum()
            }
        }
    }

    /// `∫_a^b Λ_i(s) ds`, exact for piecewise protocols and adaptive quadrature
    /// (absolute tolerance [`QUADRATURE_TOL`]) otherwise.
    pub fn integrated_exit(&self, i: usize, a: f64, b: f64) -> Result<f64> {
        match &self.form {
            ProtocolForm::PiecewiseConstant { breakpoints, matrices } => {
                let mut total = 0.0;
                for (k, m) in matrices.iter().enumerate() {
                    let lo = breakpoints[k].max(a);
                    let hi = breakpoints[k + 1].min(b);
                    if hi > lo {
                        total += m.exit(i) * (hi - lo);
                    }
                }
                Ok(total)
            }
            ProtocolForm::Functional { .. } => {
                numeric::integrate(|s| self.exit_rate(i, s), a, b, QUADRATURE_TOL)
            }
        }
    }

    /// Rate field as the matrix valid at `s`.
    pub fn matrix_at(&self, s: f64) -> RateMatrix {
        let rows: Vec<Vec<f64>> = (0..self.states)
            .map(|i| (0..self.states).map(|j| self.rate(i, j, s)).collect())
            .collect();
        RateMatrix::from_rows(&rows).expect("protocol rates are validated")
    }

    /// True when the rates do not depend on time.
    pub fn is_time_independent(&self) -> bool {
        match &self.form {
            ProtocolForm::PiecewiseConstant { matrices, .. } => {
                matrices.windows(2).all(|w| w[0] == w[1])
            }
            ProtocolForm::Functional { .. } => {
                let first = self.matrix_at(0.0);
                (1..VALIDATION_GRID).all(|g| {
                    let s = self.horizon * g as f64 / (VALIDATION_GRID - 1) as f64;
                    self.matrix_at(s) == first
                })
            }
        }
    }
}

/// Protocol with `k'_ij(s) = k_ij(T - s)`.
pub fn protocol_reverse(p: &RateProtocol) -> RateProtocol {
    let horizon = p.horizon;
    let form = match &p.form {
        ProtocolForm::PiecewiseConstant { breakpoints, matrices } => {
            let m = matrices.len();
            let mut reflected: Vec<f64> = breakpoints.iter().rev().map(|b| horizon - b).collect();
            reflected[0] = 0.0;
            reflected[m] = horizon;
            ProtocolForm::PiecewiseConstant {
                breakpoints: reflected,
                matrices: matrices.iter().rev().cloned().collect(),
            }
        }
        ProtocolForm::Functional { rate, bound, reversed } => ProtocolForm::Functional {
            rate: Arc::clone(rate),
            bound: *bound,
            reversed: !reversed,
        },
    };
    RateProtocol {
        states: p.states,
        horizon,
        form,
        support: p.support.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(a: f64, b: f64) -> RateMatrix {
        RateMatrix::from_rows(&[vec![0.0, a], vec![b, 0.0]]).unwrap()
    }

    #[test]
    fn reversal_reflects_breakpoints() {
        let a = two_state(1.0, 2.0);
        let b = two_state(3.0, 4.0);
        let p = RateProtocol::piecewise_constant(vec![0.0, 0.5, 1.0], vec![a.clone(), b.clone()])
            .unwrap();
        let r = protocol_reverse(&p);
        match r.form() {
            ProtocolForm::PiecewiseConstant { breakpoints, matrices } => {
                assert_eq!(breakpoints, &vec![0.0, 0.5, 1.0]);
                assert_eq!(matrices, &vec![b, a]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn reversal_of_uneven_breakpoints() {
        let mats = vec![two_state(1.0, 1.0), two_state(2.0, 1.0), two_state(1.0, 3.0)];
        let p = RateProtocol::piecewise_constant(vec![0.0, 0.2, 0.9, 2.0], mats).unwrap();
        let r = protocol_reverse(&p);
        for g in 0..=1000 {
            let s = 2.0 * g as f64 / 1000.0 + 1e-7;
            if s >= 2.0 {
                continue;
            }
            assert_eq!(r.rate(0, 1, s), p.rate(0, 1, 2.0 - s), "s = {s}");
        }
    }

    #[test]
    fn time_independent_protocol_is_fixed_by_reversal() {
        let p = RateProtocol::constant(two_state(1.5, 0.5), 3.0).unwrap();
        let r = protocol_reverse(&p);
        assert!(r.is_time_independent());
        for g in 0..=100 {
            let s = 3.0 * g as f64 / 100.0;
            assert_eq!(r.matrix_at(s), p.matrix_at(s));
        }
    }

    #[test]
    fn functional_reversal_is_an_exact_involution() {
        let rate: RateFn = Arc::new(|i, j, s| if i < j { 1.0 + s } else { 2.0 - s });
        let p = RateProtocol::functional(2, 1.0, rate, 2.0).unwrap();
        let rr = protocol_reverse(&protocol_reverse(&p));
        for g in 0..=997 {
            let s = g as f64 / 997.0;
            assert_eq!(rr.rate(0, 1, s), p.rate(0, 1, s));
            assert_eq!(rr.rate(1, 0, s), p.rate(1, 0, s));
        }
        let r = protocol_reverse(&p);
        assert!((r.rate(0, 1, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn changing_support_is_rejected() {
        let a = two_state(1.0, 1.0);
        let b = two_state(0.0, 1.0);
        assert!(RateProtocol::piecewise_constant(vec![0.0, 0.5, 1.0], vec![a, b]).is_err());
        let rate: RateFn = Arc::new(|_, _, s| if s < 0.5 { 1.0 } else { 0.0 });
        assert!(RateProtocol::functional(2, 1.0, rate, 1.0).is_err());
    }

    #[test]
    fn violated_bound_is_rejected() {
        let rate: RateFn = Arc::new(|_, _, s| 1.0 + 2.0 * s);
        assert!(RateProtocol::functional(2, 1.0, rate, 2.0).is_err());
    }

    #[test]
    fn integrated_exit_spans_intervals() {
        let p = RateProtocol::piecewise_constant(
            vec![0.0, 0.5, 1.0],
            vec![two_state(1.0, 1.0), two_state(3.0, 1.0)],
        )
        .unwrap();
        let v = p.integrated_exit(0, 0.25, 0.75).unwrap();
        assert!((v - (0.25 * 1.0 + 0.25 * 3.0)).abs() < 1e-15);
        let rate: RateFn = Arc::new(|_, _, s| 1.0 + s);
        let f = RateProtocol::functional(2, 1.0, rate, 2.0).unwrap();
        let v = f.integrated_exit(0, 0.0, 1.0).unwrap();
        assert!((v - 1.5).abs() < 1e-10);
    }
}
