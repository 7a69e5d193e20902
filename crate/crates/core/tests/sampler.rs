use std::sync::Arc;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use tftlab::process::{
    build_ldb_protocol, evolve_law, gibbs_distribution, Energy, Hamiltonian, InitialDistribution, ProcessMeasure,
    RateFn, RateMatrix, RateProtocol,
};
use tftlab::sampler::{sample_ensemble, sample_ensemble_with_workers, sample_path_with, SamplingMethod, SeededStream};

fn driven() -> ProcessMeasure {
    let h = Hamiltonian::new(
        3,
        1.0,
        1.0,
        Energy::PiecewiseConstant {
            breakpoints: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            levels: vec![vec![0.0, 1.0, 2.0], vec![0.5, 0.0, 1.5], vec![1.5, 0.5, 0.0], vec![2.0, 1.0, 0.0]],
        },
    )
    .unwrap();
    let p = build_ldb_protocol(&h, 1.0, None).unwrap();
    ProcessMeasure::finite(p, gibbs_distribution(&h, 0.0).unwrap().0).unwrap()
}

fn final_counts(paths: &[tftlab::path::JumpPath], states: usize) -> Vec<f64> {
    let mut c = vec![0.0; states];
    for w in paths {
        c[w.final_state()] += 1.0;
    }
    c
}

/// Pearson statistic against `probs`, returning the upper-tail p-value.
fn chi_square_p(counts: &[f64], probs: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    let stat: f64 = counts.iter().zip(probs).map(|(c, p)| (c - n * p).powi(2) / (n * p)).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

#[test]
fn zero_jump_fraction_is_exp_minus_rate_times_horizon() {
    let p = RateProtocol::constant(RateMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(), 1.0).unwrap();
    let m = ProcessMeasure::finite(p, InitialDistribution::dirac(2, 0).unwrap()).unwrap();
    let n = 100_000;
    let paths = sample_ensemble(&m, n, 11).unwrap();
    let zero = paths.iter().filter(|w| w.jump_count() == 0).count() as f64 / n as f64;
    let expect = (-1.0f64).exp();
    let se = (expect * (1.0 - expect) / n as f64).sqrt();
    assert!((zero - expect).abs() < 4.0 * se, "{zero} vs {expect}");
}

#[test]
fn endpoint_law_matches_forward_equation() {
    let m = driven();
    let paths = sample_ensemble(&m, 100_000, 3).unwrap();
    let law = evolve_law(&m, 1.0).unwrap();
    let p = chi_square_p(&final_counts(&paths, 3), law.masses());
    assert!(p > 1e-3, "p-value {p}");
}

#[test]
fn thinning_agrees_with_exact_inversion() {
    let m = driven();
    let n = 50_000u64;
    let draw = |method| -> Vec<tftlab::path::JumpPath> {
        (0..n).map(|i| sample_path_with(&m, &SeededStream::new(21, i), method).unwrap()).collect()
    };
    let exact = draw(SamplingMethod::Exact);
    let thin = draw(SamplingMethod::Thinning);
    let law = evolve_law(&m, 1.0).unwrap();
    assert!(chi_square_p(&final_counts(&thin, 3), law.masses()) > 1e-3);
    let mean = |v: &[tftlab::path::JumpPath]| v.iter().map(|w| w.jump_count() as f64).sum::<f64>() / v.len() as f64;
    let var = |v: &[tftlab::path::JumpPath], mu: f64| {
        v.iter().map(|w| (w.jump_count() as f64 - mu).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let (a, b) = (mean(&exact), mean(&thin));
    let se = ((var(&exact, a) + var(&thin, b)) / n as f64).sqrt();
    assert!((a - b).abs() < 4.0 * se, "{a} vs {b} (se {se})");
}

#[test]
fn functional_protocol_endpoint_law() {
    let rate: RateFn = Arc::new(|i, j, s| {
        if i == j {
            0.0
        } else {
            1.0 + 0.8 * (6.0 * s + i as f64).sin()
        }
    });
    let p = RateProtocol::functional(2, 2.0, rate, 1.8).unwrap();
    let m = ProcessMeasure::finite(p, InitialDistribution::new(vec![0.9, 0.1]).unwrap()).unwrap();
    let paths = sample_ensemble(&m, 100_000, 8).unwrap();
    let law = evolve_law(&m, 2.0).unwrap();
    let p = chi_square_p(&final_counts(&paths, 2), law.masses());
    assert!(p > 1e-3, "p-value {p}");
}

#[test]
fn ensembles_do_not_depend_on_worker_count() {
    let m = driven();
    let a = sample_ensemble_with_workers(&m, 5000, 99, Some(1)).unwrap();
    let b = sample_ensemble_with_workers(&m, 5000, 99, Some(6)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn streams_are_independent_of_ensemble_size() {
    let m = driven();
    let small = sample_ensemble(&m, 100, 4).unwrap();
    let large = sample_ensemble(&m, 1000, 4).unwrap();
    assert_eq!(small[..], large[..100]);
}
