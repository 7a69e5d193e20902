use proptest::prelude::*;

use tftlab::likelihood::{dissipated_work, entropy_production, heat_dissipation, log_path_density, ScorePair};
use tftlab::path::{Jump, JumpPath};
use tftlab::process::{
    build_ldb_protocol, gibbs_distribution, Energy, Hamiltonian, InitialDistribution, ProcessMeasure, RateMatrix,
    RateProtocol,
};
use tftlab::sampler::sample_ensemble;
use tftlab::transforms::{apply_transform, PathTransform};

const BREAKS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const LEVELS: [[f64; 3]; 4] = [[0.0, 1.0, 2.0], [0.5, 0.0, 1.5], [1.5, 0.5, 0.0], [2.0, 1.0, 0.0]];
const BETA: f64 = 1.3;
const NU: f64 = 0.8;

fn hamiltonian() -> Hamiltonian {
    Hamiltonian::new(
        3,
        1.0,
        BETA,
        Energy::PiecewiseConstant { breakpoints: BREAKS.to_vec(), levels: LEVELS.iter().map(|r| r.to_vec()).collect() },
    )
    .unwrap()
}

fn driven(initial: Option<Vec<f64>>) -> (ProcessMeasure, Hamiltonian) {
    let h = hamiltonian();
    let p = build_ldb_protocol(&h, NU, None).unwrap();
    let mu = match initial {
        Some(v) => InitialDistribution::new(v).unwrap(),
        None => gibbs_distribution(&h, 0.0).unwrap().0,
    };
    (ProcessMeasure::finite(p, mu).unwrap(), h)
}

fn interval(s: f64) -> usize {
    BREAKS[1..4].iter().take_while(|&&b| b <= s).count()
}

fn energy(x: usize, s: f64) -> f64 {
    LEVELS[interval(s)][x]
}

/// Symmetric local-detailed-balance rate written out directly.
fn rate(i: usize, j: usize, s: f64) -> f64 {
    NU * (-BETA * (energy(j, s) - energy(i, s)) / 2.0).exp()
}

fn exit(i: usize, s: f64) -> f64 {
    (0..3).filter(|&j| j != i).map(|j| rate(i, j, s)).sum()
}

/// Log density from the definition, splitting holding intervals at breakpoints.
fn oracle_density(mu0: &[f64], w: &JumpPath) -> f64 {
    let mut total = mu0[w.initial_state()].ln();
    let mut prev = w.initial_state();
    for j in w.jumps() {
        total += rate(prev, j.state, j.time).ln();
        prev = j.state;
    }
    for (x, a, b) in w.segments() {
        let mut cuts = vec![a];
        cuts.extend(BREAKS.iter().copied().filter(|&c| c > a && c < b));
        cuts.push(b);
        for c in cuts.windows(2) {
            total -= exit(x, c[0]) * (c[1] - c[0]);
        }
    }
    total
}

/// Master equation by classical RK4 on each constant-rate interval.
fn oracle_final_law(mu0: &[f64]) -> Vec<f64> {
    let mut mu = mu0.to_vec();
    let steps = 4000;
    for k in 0..4 {
        let s = BREAKS[k];
        let dt = (BREAKS[k + 1] - s) / steps as f64;
        let f = |m: &[f64]| -> Vec<f64> {
            (0..3)
                .map(|j| (0..3).filter(|&i| i != j).map(|i| m[i] * rate(i, j, s) - m[j] * rate(j, i, s)).sum())
                .collect()
        };
        for _ in 0..steps {
            let k1 = f(&mu);
            let y2: Vec<f64> = (0..3).map(|i| mu[i] + 0.5 * dt * k1[i]).collect();
            let k2 = f(&y2);
            let y3: Vec<f64> = (0..3).map(|i| mu[i] + 0.5 * dt * k2[i]).collect();
            let k3 = f(&y3);
            let y4: Vec<f64> = (0..3).map(|i| mu[i] + dt * k3[i]).collect();
            let k4 = f(&y4);
            for i in 0..3 {
                mu[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    mu
}

fn log_z(levels: &[f64; 3]) -> f64 {
    levels.iter().map(|e| (-BETA * e).exp()).sum::<f64>().ln()
}

/// `βW` accumulated at the breakpoints, plus `log Z(T) - log Z(0)`.
fn oracle_work(w: &JumpPath) -> f64 {
    let mut work = 0.0;
    for k in 1..4 {
        let x = w.state_at(BREAKS[k]);
        work += LEVELS[k][x] - LEVELS[k - 1][x];
    }
    BETA * work + log_z(&LEVELS[3]) - log_z(&LEVELS[0])
}

fn oracle_heat(w: &JumpPath) -> f64 {
    let mut prev = w.initial_state();
    let mut q = 0.0;
    for j in w.jumps() {
        q += BETA * (energy(prev, j.time) - energy(j.state, j.time));
        prev = j.state;
    }
    q
}

/// Paths on three states, jump times kept away from the breakpoints.
fn arb_path() -> impl Strategy<Value = JumpPath> {
    (0usize..3, prop::collection::vec((0.01f64..0.99, 1usize..3), 0..10)).prop_map(|(x0, raw)| {
        let mut times: Vec<f64> = raw.iter().map(|r| r.0).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times.retain(|t| BREAKS.iter().all(|b| (t - b).abs() > 1e-9));
        let mut x = x0;
        let jumps = times
            .iter()
            .zip(&raw)
            .map(|(&time, &(_, shift))| {
                x = (x + shift) % 3;
                Jump { time, state: x }
            })
            .collect();
        JumpPath::new(x0, jumps, 1.0).unwrap()
    })
}

fn arb_law() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 3).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn density_matches_definition(w in arb_path(), mu in arb_law()) {
        let (p, _) = driven(Some(mu.clone()));
        let got = log_path_density(&p, &w).unwrap();
        prop_assert!((got - oracle_density(&mu, &w)).abs() < 1e-12);
    }

    #[test]
    fn heat_is_minus_energy_change_at_jumps(w in arb_path()) {
        let (p, _) = driven(None);
        prop_assert!((heat_dissipation(&p, &w).unwrap() - oracle_heat(&w)).abs() < 1e-12);
    }

    #[test]
    fn dissipated_work_is_work_minus_free_energy(w in arb_path()) {
        let (p, h) = driven(None);
        let s = dissipated_work(&p, &h, &w).unwrap();
        prop_assert!((s.value - oracle_work(&w)).abs() < 1e-11, "{} vs {}", s.value, oracle_work(&w));
        prop_assert!((s.boundary + s.current - s.value).abs() < 1e-11);
    }

    #[test]
    fn entropy_production_is_surprisal_change_plus_heat(w in arb_path(), mu in arb_law()) {
        let (p, _) = driven(Some(mu.clone()));
        let mut_t = oracle_final_law(&mu);
        let expect = mu[w.initial_state()].ln() - mut_t[w.final_state()].ln() + oracle_heat(&w);
        let s = entropy_production(&p, &w).unwrap();
        prop_assert!((s.value - expect).abs() < 1e-9, "{} vs {expect}", s.value);
        prop_assert!((s.current - oracle_heat(&w)).abs() < 1e-12);
    }

    #[test]
    fn forward_and_backward_scores_are_antisymmetric(w in arb_path(), mu in arb_law(), cyclic in any::<bool>()) {
        let (p, _) = driven(Some(mu));
        let phi = if cyclic { PathTransform::holding_cyclic() } else { PathTransform::TimeReversal };
        let pair = ScorePair::entropy_production(p, phi.clone()).unwrap();
        let image = apply_transform(&phi, &w).unwrap();
        let f = pair.forward(&w).unwrap().value;
        let b = pair.backward(&image).unwrap().value;
        prop_assert!((f + b).abs() < 1e-10, "{f} vs {b}");
    }
}

#[test]
fn reversible_stationary_chain_has_zero_entropy_production() {
    let (a, b) = (0.7, 1.9);
    let p = RateProtocol::constant(RateMatrix::from_rows(&[vec![0.0, a], vec![b, 0.0]]).unwrap(), 3.0).unwrap();
    let m = ProcessMeasure::finite(p, InitialDistribution::new(vec![b / (a + b), a / (a + b)]).unwrap()).unwrap();
    let pair = ScorePair::entropy_production(m.clone(), PathTransform::TimeReversal).unwrap();
    for w in sample_ensemble(&m, 10_000, 12).unwrap() {
        assert!(pair.forward(&w).unwrap().value.abs() < 1e-10, "{w}");
    }
}

#[test]
fn static_hamiltonian_does_no_work() {
    let h = Hamiltonian::new(3, 2.0, 0.7, Energy::Static(vec![0.3, -1.0, 2.2])).unwrap();
    let p = build_ldb_protocol(&h, 1.5, None).unwrap();
    let m = ProcessMeasure::finite(p, gibbs_distribution(&h, 0.0).unwrap().0).unwrap();
    for w in sample_ensemble(&m, 10_000, 13).unwrap() {
        assert!(dissipated_work(&m, &h, &w).unwrap().value.abs() < 1e-10, "{w}");
    }
}
