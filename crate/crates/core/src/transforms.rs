//! Bijections of path space with explicit inverses.
//!
//! Every variant keeps the jump count and maps the vector of jump times by a
//! piecewise isometry, so it preserves the reference measure (counting measure
//! on state sequences times Lebesgue measure on jump times). Likelihood ratios
//! against transformed measures are therefore plain differences of log
//! densities. New variants must keep that property.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{Jump, JumpPath};

/// A permutation `π_n` of `{0, ..., n}` for every jump count `n`. The holding
/// duration placed in slot `i` of the output is duration `π_n(i)` of the input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PermutationFamily {
    Identity,
    /// `π_n(i) = (i + shift) mod (n + 1)`.
    CyclicShift(i64),
    /// `π_n(i) = n - i`.
    Reverse,
    /// Explicit permutations keyed by jump count; identity for other counts.
    Table(BTreeMap<usize, Vec<usize>>),
}

fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    for &i in p {
        if i >= p.len() || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

fn invert_permutation(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

impl PermutationFamily {
    /// Table family; every entry for jump count `n` must permute `{0..=n}`.
    pub fn table(entries: BTreeMap<usize, Vec<usize>>) -> Result<Self> {
        for (n, p) in &entries {
            if p.len() != n + 1 || !is_permutation(p) {
                return Err(Error::InvalidArgument(format!(
                    "table entry for {n} jumps is not a permutation of 0..={n}: {p:?}"
                )));
            }
        }
        Ok(PermutationFamily::Table(entries))
    }

    /// `π_n` as a vector of length `n + 1`.
    pub fn permutation(&self, n: usize) -> Vec<usize> {
        let len = n + 1;
        match self {
            PermutationFamily::Identity => (0..len).collect(),
            PermutationFamily::CyclicShift(k) => {
                let k = k.rem_euclid(len as i64) as usize;
                (0..len).map(|i| (i + k) % len).collect()
            }
            PermutationFamily::Reverse => (0..len).rev().collect(),
            PermutationFamily::Table(t) => t.get(&n).cloned().unwrap_or_else(|| (0..len).collect()),
        }
    }

    pub fn inverse(&self) -> Self {
        match self {
            PermutationFamily::Identity => PermutationFamily::Identity,
            PermutationFamily::CyclicShift(k) => PermutationFamily::CyclicShift(-k),
            PermutationFamily::Reverse => PermutationFamily::Reverse,
            PermutationFamily::Table(t) => PermutationFamily::Table(
                t.iter().map(|(&n, p)| (n, invert_permutation(p))).collect(),
            ),
        }
    }

    /// True when every `π_n` is self-inverse.
    pub fn is_involution(&self) -> bool {
        match self {
            PermutationFamily::Identity | PermutationFamily::Reverse => true,
            // Self-inverse for all n only when the shift vanishes (n = 2 fails otherwise).
            PermutationFamily::CyclicShift(k) => *k == 0,
            PermutationFamily::Table(t) => t.values().all(|p| invert_permutation(p) == *p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathTransform {
    Identity,
    /// `r(ω)_s = ω_{(T-s)-}`, which keeps paths right-continuous.
    TimeReversal,
    /// Rearranges holding durations along the fixed jump skeleton.
    HoldingPermutation(PermutationFamily),
    /// Applied left to right.
    Composition(Vec<PathTransform>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Involution {
    Yes,
    No,
    /// Compositions whose self-inverse property is not decidable structurally.
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvertedTransform {
    pub inverse: PathTransform,
    pub involution: Involution,
}

/// Restores `0 < t_1 < ... < t_n < T` after floating-point reflection or
/// summation, moving offending times by single ulps.
fn repair_times(jumps: &mut [Jump], horizon: f64) {
    let mut prev = 0.0f64;
    for j in jumps.iter_mut() {
        if j.time <= prev {
            j.time = prev.next_up();
        }
        prev = j.time;
    }
    let mut next = horizon;
    for j in jumps.iter_mut().rev() {
        if j.time >= next {
            j.time = next.next_down();
        }
        next = j.time;
    }
}

fn reverse_path(path: &JumpPath) -> JumpPath {
    let horizon = path.horizon();
    let states = path.states();
    let n = path.jump_count();
    let mut jumps: Vec<Jump> = (0..n)
        .rev()
        .map(|i| Jump { time: horizon - path.jumps()[i].time, state: states[i] })
        .collect();
    repair_times(&mut jumps, horizon);
    JumpPath::from_parts_unchecked(path.final_state(), jumps, horizon)
}

fn permute_holdings(path: &JumpPath, family: &PermutationFamily) -> JumpPath {
    let n = path.jump_count();
    let perm = family.permutation(n);
    if perm.iter().enumerate().all(|(i, &p)| i == p) {
        return path.clone();
    }
    let durations = path.holding_durations();
    let horizon = path.horizon();
    let mut t = 0.0;
    let mut jumps: Vec<Jump> = Vec::with_capacity(n);
    for (slot, original) in path.jumps().iter().enumerate() {
        t += durations[perm[slot]];
        jumps.push(Jump { time: t, state: original.state });
    }
    repair_times(&mut jumps, horizon);
    JumpPath::from_parts_unchecked(path.initial_state(), jumps, horizon)
}

pub fn apply_transform(phi: &PathTransform, path: &JumpPath) -> Result<JumpPath> {
    // Paths built through the public constructors are valid; re-check so that
    // hand-built inputs surface as errors instead of garbage.
    JumpPath::new(path.initial_state(), path.jumps().to_vec(), path.horizon())?;
    Ok(apply_unchecked(phi, path))
}

pub(crate) fn apply_unchecked(phi: &PathTransform, path: &JumpPath) -> JumpPath {
    match phi {
        PathTransform::Identity => path.clone(),
        PathTransform::TimeReversal => reverse_path(path),
        PathTransform::HoldingPermutation(f) => permute_holdings(path, f),
        PathTransform::Composition(parts) => parts
            .iter()
            .fold(path.clone(), |acc, part| apply_unchecked(part, &acc)),
    }
}

fn inverse_of(phi: &PathTransform) -> PathTransform {
    match phi {
        PathTransform::Identity => PathTransform::Identity,
        PathTransform::TimeReversal => PathTransform::TimeReversal,
        PathTransform::HoldingPermutation(f) => PathTransform::HoldingPermutation(f.inverse()),
        PathTransform::Composition(parts) => {
            PathTransform::Composition(parts.iter().rev().map(inverse_of).collect())
        }
    }
}

fn involution_of(phi: &PathTransform) -> Involution {
    match phi {
        PathTransform::Identity | PathTransform::TimeReversal => Involution::Yes,
        PathTransform::HoldingPermutation(f) => {
            if f.is_involution() {
                Involution::Yes
            } else {
                Involution::No
            }
        }
        PathTransform::Composition(parts) => match parts.as_slice() {
            [] => Involution::Yes,
            [single] => involution_of(single),
            _ if inverse_of(phi) == *phi => Involution::Yes,
            _ => Involution::Unknown,
        },
    }
}

pub fn invert_transform(phi: &PathTransform) -> InvertedTransform {
    InvertedTransform { inverse: inverse_of(phi), involution: involution_of(phi) }
}

impl PathTransform {
    pub fn inverse(&self) -> PathTransform {
        inverse_of(self)
    }

    pub fn holding_cyclic() -> Self {
        PathTransform::HoldingPermutation(PermutationFamily::CyclicShift(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(x0: usize, pairs: &[(f64, usize)]) -> JumpPath {
        JumpPath::from_pairs(x0, pairs, 1.0).unwrap()
    }

    #[test]
    fn single_jump_reversal() {
        let r = apply_transform(&PathTransform::TimeReversal, &path(1, &[(0.3, 2)])).unwrap();
        assert_eq!(r.initial_state(), 2);
        assert_eq!(r.jumps().len(), 1);
        assert_eq!(r.jumps()[0].state, 1);
        assert!((r.jumps()[0].time - 0.7).abs() <= f64::EPSILON);
    }

    #[test]
    fn reversal_maps_final_state_to_initial_state() {
        let w = path(0, &[(0.1, 1), (0.4, 2), (0.8, 1)]);
        let r = apply_transform(&PathTransform::TimeReversal, &w).unwrap();
        assert_eq!(r.initial_state(), w.final_state());
        assert_eq!(r.final_state(), w.initial_state());
        assert_eq!(r.states(), vec![1, 2, 1, 0]);
    }

    #[test]
    fn identity_family_leaves_paths_alone() {
        let w = path(0, &[(0.1, 1), (0.4, 2)]);
        let phi = PathTransform::HoldingPermutation(PermutationFamily::Identity);
        assert_eq!(apply_transform(&phi, &w).unwrap(), w);
    }

    #[test]
    fn constant_paths_are_fixed_points() {
        let w = JumpPath::constant(3, 1.0).unwrap();
        for phi in [
            PathTransform::Identity,
            PathTransform::TimeReversal,
            PathTransform::holding_cyclic(),
            PathTransform::HoldingPermutation(PermutationFamily::Reverse),
        ] {
            assert_eq!(apply_transform(&phi, &w).unwrap(), w);
        }
    }

    #[test]
    fn cyclic_shift_rotates_durations() {
        let w = path(0, &[(0.1, 1), (0.4, 2)]);
        let out = apply_transform(&PathTransform::holding_cyclic(), &w).unwrap();
        // durations (0.1, 0.3, 0.6) become (0.3, 0.6, 0.1)
        assert!((out.jumps()[0].time - 0.3).abs() < 1e-15);
        assert!((out.jumps()[1].time - 0.9).abs() < 1e-15);
        assert_eq!(out.states(), w.states());
    }

    #[test]
    fn cyclic_family_is_not_an_involution() {
        let phi = PathTransform::holding_cyclic();
        let inv = invert_transform(&phi);
        assert_eq!(inv.involution, Involution::No);
        assert_ne!(inv.inverse, phi);
        let w = path(0, &[(0.1, 1), (0.4, 2), (0.5, 0)]);
        let once = apply_transform(&phi, &w).unwrap();
        let twice = apply_transform(&phi, &once).unwrap();
        assert!(twice.max_time_deviation(&w).unwrap() > 1e-3);
        let back = apply_transform(&inv.inverse, &once).unwrap();
        assert!(back.max_time_deviation(&w).unwrap() < 1e-15);
    }

    #[test]
    fn inversion_algebra() {
        let a = PathTransform::TimeReversal;
        let b = PathTransform::holding_cyclic();
        let c = PathTransform::Composition(vec![a.clone(), b.clone()]);
        assert_eq!(
            invert_transform(&c).inverse,
            PathTransform::Composition(vec![b.inverse(), a.clone()])
        );
        assert_eq!(invert_transform(&a).inverse, a);
        assert_eq!(invert_transform(&a).involution, Involution::Yes);
        assert_eq!(
            invert_transform(&PathTransform::HoldingPermutation(PermutationFamily::Reverse)).involution,
            Involution::Yes
        );
    }

    #[test]
    fn tables_are_validated_and_inverted() {
        let mut t = BTreeMap::new();
        t.insert(2, vec![1, 2, 0]);
        let fam = PermutationFamily::table(t.clone()).unwrap();
        assert!(!fam.is_involution());
        assert_eq!(fam.inverse().permutation(2), vec![2, 0, 1]);
        assert_eq!(fam.permutation(3), vec![0, 1, 2, 3]);
        t.insert(1, vec![0, 0]);
        assert!(PermutationFamily::table(t).is_err());
    }

    #[test]
    fn malformed_input_is_an_error() {
        let bad = JumpPath::from_parts_unchecked(0, vec![Jump { time: 0.5, state: 0 }], 1.0);
        assert!(apply_transform(&PathTransform::TimeReversal, &bad).is_err());
    }
}
