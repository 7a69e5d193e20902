use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tftlab::enumerate::{exact_verify, CoordinatePermutation, DiscreteChain};
use tftlab::Error;

const GRID: [f64; 5] = [-1.0, -0.75, -0.5, -0.25, 0.0];

fn two_state() -> DiscreteChain {
    DiscreteChain::new(vec![0.5, 0.5], vec![vec![vec![0.7, 0.3], vec![0.4, 0.6]]]).unwrap()
}

#[test]
fn two_state_support_by_hand() {
    // Paths (0,0), (0,1), (1,0), (1,1) carry 0.35, 0.15, 0.20, 0.30.
    let c = two_state();
    let r = exact_verify(&c, &c, &CoordinatePermutation::reversal(1), &GRID).unwrap();
    assert!(r.pass);
    let expect = [(0.75f64.ln(), 0.15), (0.0, 0.65), ((4.0f64 / 3.0).ln(), 0.20)];
    assert_eq!(r.support.len(), 3);
    for ((x, p), s) in expect.iter().zip(&r.support) {
        assert!((s.x - x).abs() < 1e-15, "{} vs {x}", s.x);
        assert!((s.p_forward - p).abs() < 1e-15);
    }
    let half = 0.65 + 0.15 * (4.0f64 / 3.0).sqrt() + 0.20 * 0.75f64.sqrt();
    let m = r.mgf.iter().find(|m| m.lambda == -0.5).unwrap();
    assert!((m.lhs - half).abs() < 1e-15 && (m.rhs - half).abs() < 1e-15);
}

/// Brute-force `Σ P(ω) e^{λ S_P(ω)}` with probabilities multiplied out directly.
fn brute_mgf(p: &DiscreteChain, q: &DiscreteChain, sigma: &[usize], lambda: f64) -> f64 {
    let (n, len) = (p.states(), p.steps() + 1);
    let prob = |c: &DiscreteChain, w: &[usize]| -> f64 {
        let mut v = c.initial()[w[0]];
        for (k, m) in c.step_matrices().iter().enumerate() {
            v *= m[w[k]][w[k + 1]];
        }
        v
    };
    let mut total = 0.0;
    for code in 0..n.pow(len as u32) {
        let w: Vec<usize> = (0..len).map(|k| code / n.pow((len - 1 - k) as u32) % n).collect();
        let image: Vec<usize> = (0..len).map(|k| w[sigma[k]]).collect();
        let pw = prob(p, &w);
        total += pw * (lambda * (pw.ln() - prob(q, &image).ln())).exp();
    }
    total
}

fn arb_case() -> impl Strategy<Value = (DiscreteChain, DiscreteChain, CoordinatePermutation)> {
    (2usize..=3, 1usize..=4, any::<u64>(), 0u8..3).prop_map(|(states, steps, seed, kind)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = DiscreteChain::random(states, steps, &mut rng).unwrap();
        let q = DiscreteChain::random(states, steps, &mut rng).unwrap();
        let sigma = match kind {
            0 => CoordinatePermutation::reversal(steps),
            1 => CoordinatePermutation::cyclic(steps, 1),
            _ => CoordinatePermutation::random(steps, &mut rng),
        };
        (p, q, sigma)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn identities_hold_for_random_chains((p, q, sigma) in arb_case()) {
        let r = exact_verify(&p, &q, &sigma, &GRID).unwrap();
        prop_assert!(r.pointwise_pass, "max rel error {}", r.max_rel_error);
        prop_assert!(r.mgf_pass);
        prop_assert!((r.integral - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn mgf_matches_brute_force((p, q, sigma) in arb_case()) {
        let r = exact_verify(&p, &q, &sigma, &GRID).unwrap();
        for m in &r.mgf {
            let b = brute_mgf(&p, &q, sigma.as_slice(), m.lambda);
            prop_assert!((m.lhs - b).abs() <= 1e-12 * b, "{} vs {b}", m.lhs);
        }
    }
}

#[test]
fn support_point_masses_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = DiscreteChain::random(3, 4, &mut rng).unwrap();
    let q = DiscreteChain::random(3, 4, &mut rng).unwrap();
    let r = exact_verify(&p, &q, &CoordinatePermutation::cyclic(4, 2), &GRID).unwrap();
    assert!(!r.involution);
    let total: f64 = r.support.iter().map(|s| s.p_forward).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn oversize_enumeration_is_refused() {
    let c = DiscreteChain::homogeneous(vec![0.25; 4], vec![vec![0.25; 4]; 4], 12).unwrap();
    let err = exact_verify(&c, &c, &CoordinatePermutation::reversal(12), &GRID).unwrap_err();
    assert!(matches!(err, Error::EnumerationTooLarge { .. }), "{err}");
}
