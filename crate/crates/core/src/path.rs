//! Right-continuous jump trajectories on `[0, T]` and their line-oriented
//! text form `x0 T n t_1 x_1 ... t_n x_n`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single jump: the process enters `state` at `time`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub state: usize,
}

/// Piecewise-constant trajectory with jumps strictly inside `(0, T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpPath {
    x0: usize,
    jumps: Vec<Jump>,
    horizon: f64,
}

impl JumpPath {
    pub fn new(x0: usize, jumps: Vec<Jump>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::MalformedPath(format!("invalid horizon {horizon}")));
        }
        let mut prev_time = 0.0;
        let mut prev_state = x0;
        for (i, j) in jumps.iter().enumerate() {
            if !(j.time > prev_time && j.time < horizon) {
                return Err(Error::MalformedPath(format!(
                    "jump {i} at {} is not strictly inside ({prev_time}, {horizon})",
                    j.time
                )));
            }
            if j.state == prev_state {
                return Err(Error::MalformedPath(format!(
                    "jump {i} at {} does not change the state {}",
                    j.time, j.state
                )));
            }
            prev_time = j.time;
            prev_state = j.state;
        }
        Ok(Self { x0, jumps, horizon })
    }

    pub fn constant(x0: usize, horizon: f64) -> Result<Self> {
        Self::new(x0, Vec::new(), horizon)
    }

    /// Builds from `(time, state)` pairs.
    pub fn from_pairs(x0: usize, pairs: &[(f64, usize)], horizon: f64) -> Result<Self> {
        Self::new(
            x0,
            pairs.iter().map(|&(time, state)| Jump { time, state }).collect(),
            horizon,
        )
    }

    pub(crate) fn from_parts_unchecked(x0: usize, jumps: Vec<Jump>, horizon: f64) -> Self {
        Self { x0, jumps, horizon }
    }

    pub fn initial_state(&self) -> usize {
        self.x0
    }

    pub fn final_state(&self) -> usize {
        self.jumps.last().map_or(self.x0, |j| j.state)
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// State after the last jump at or before `s`.
    pub fn state_at(&self, s: f64) -> usize {
        let idx = self.jumps.partition_point(|j| j.time <= s);
        if idx == 0 {
            self.x0
        } else {
            self.jumps[idx - 1].state
        }
    }

    /// States visited, starting with `x0`.
    pub fn states(&self) -> Vec<usize> {
        std::iter::once(self.x0)
            .chain(self.jumps.iter().map(|j| j.state))
            .collect()
    }

    /// Occupation intervals `(state, start, end)` covering `[0, T]`.
    pub fn segments(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let n = self.jumps.len();
        (0..=n).map(move |k| {
            let state = if k == 0 { self.x0 } else { self.jumps[k - 1].state };
            let start = if k == 0 { 0.0 } else { self.jumps[k - 1].time };
            let end = if k == n { self.horizon } else { self.jumps[k].time };
            (state, start, end)
        })
    }

    /// Holding durations `(s_1, ..., s_{n+1})` between `0, t_1, ..., t_n, T`.
    pub fn holding_durations(&self) -> Vec<f64> {
        self.segments().map(|(_, a, b)| b - a).collect()
    }

    pub fn max_state(&self) -> usize {
        self.states().into_iter().max().unwrap_or(self.x0)
    }

    /// Largest gap between corresponding jump times; `None` if the paths
    /// differ in anything other than jump times.
    pub fn max_time_deviation(&self, other: &JumpPath) -> Option<f64> {
        if self.x0 != other.x0
            || self.jumps.len() != other.jumps.len()
            || self.horizon != other.horizon
        {
            return None;
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.jumps.iter().zip(&other.jumps) {
            if a.state != b.state {
                return None;
            }
            worst = worst.max((a.time - b.time).abs());
        }
        Some(worst)
    }
}

impl fmt::Display for JumpPath {
    /// Shortest round-trip decimal representation of every float.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?} {}", self.x0, self.horizon, self.jumps.len())?;
        for j in &self.jumps {
            write!(f, " {:?} {}", j.time, j.state)?;
        }
        Ok(())
    }
}

impl FromStr for JumpPath {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let mut tok = line.split_whitespace();
        let mut next = |what: &str| {
            tok.next()
                .ok_or_else(|| Error::MalformedPath(format!("missing {what} in `{line}`")))
        };
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::MalformedPath(format!("bad state `{s}`: {e}")))
        };
        let parse_f64 = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::MalformedPath(format!("bad time `{s}`: {e}")))
        };
        let x0 = parse_usize(next("x0")?)?;
        let horizon = parse_f64(next("horizon")?)?;
        let n = next("jump count")?
            .parse::<usize>()
            .map_err(|e| Error::MalformedPath(format!("bad jump count: {e}")))?;
        let mut jumps = Vec::with_capacity(n);
        for _ in 0..n {
            let time = parse_f64(next("jump time")?)?;
            let state = parse_usize(next("jump state")?)?;
            jumps.push(Jump { time, state });
        }
        if tok.next().is_some() {
            return Err(Error::MalformedPath(format!("trailing tokens in `{line}`")));
        }
        JumpPath::new(x0, jumps, horizon)
    }
}
