use std::collections::BTreeMap;

use proptest::prelude::*;

use tftlab::path::{Jump, JumpPath};
use tftlab::transforms::{apply_transform, invert_transform, Involution, PathTransform, PermutationFamily};

/// Random path on `{0..4}` with up to 12 jumps and horizon in `[0.1, 50]`.
fn arb_path() -> impl Strategy<Value = JumpPath> {
    (0.1f64..50.0, 0usize..4, prop::collection::vec((0.001f64..1.0, 1usize..4), 0..12)).prop_map(
        |(horizon, x0, steps)| {
            // Spacings normalised so that the last jump falls inside (0, T).
            let total: f64 = steps.iter().map(|s| s.0).sum::<f64>() + 0.5;
            let mut t = 0.0;
            let mut x = x0;
            let jumps: Vec<Jump> = steps
                .iter()
                .map(|&(gap, shift)| {
                    t += gap / total * horizon;
                    x = (x + shift) % 4;
                    Jump { time: t, state: x }
                })
                .collect();
            JumpPath::new(x0, jumps, horizon).unwrap()
        },
    )
}

fn arb_family() -> impl Strategy<Value = PermutationFamily> {
    prop_oneof![
        Just(PermutationFamily::Identity),
        Just(PermutationFamily::Reverse),
        (-5i64..6).prop_map(PermutationFamily::CyclicShift),
        (0usize..6).prop_flat_map(|n| {
            Just((0..=n).collect::<Vec<_>>()).prop_shuffle().prop_map(move |p| {
                PermutationFamily::table(BTreeMap::from([(n, p)])).unwrap()
            })
        }),
    ]
}

fn arb_transform() -> impl Strategy<Value = PathTransform> {
    let leaf = prop_oneof![
        Just(PathTransform::Identity),
        Just(PathTransform::TimeReversal),
        arb_family().prop_map(PathTransform::HoldingPermutation),
    ];
    prop_oneof![
        3 => leaf.clone(),
        1 => prop::collection::vec(leaf, 1..4).prop_map(PathTransform::Composition),
    ]
}

/// Round-trip drift allowed: a few ulps of `T` per jump.
fn tolerance(w: &JumpPath) -> f64 {
    4.0 * (w.jump_count() + 2) as f64 * w.horizon() * f64::EPSILON
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn inverse_undoes_transform(w in arb_path(), phi in arb_transform()) {
        let image = apply_transform(&phi, &w).unwrap();
        let back = apply_transform(&phi.inverse(), &image).unwrap();
        let dev = back.max_time_deviation(&w).expect("skeleton restored");
        prop_assert!(dev <= tolerance(&w), "deviation {dev}");
    }

    #[test]
    fn images_are_valid_paths(w in arb_path(), phi in arb_transform()) {
        let image = apply_transform(&phi, &w).unwrap();
        prop_assert_eq!(image.jump_count(), w.jump_count());
        prop_assert_eq!(image.horizon(), w.horizon());
        // Reconstructing through the checked constructor must succeed.
        let again = JumpPath::new(image.initial_state(), image.jumps().to_vec(), image.horizon());
        prop_assert!(again.is_ok());
    }

    #[test]
    fn time_reversal_reverses_the_state_sequence(w in arb_path()) {
        let r = apply_transform(&PathTransform::TimeReversal, &w).unwrap();
        let mut states = w.states();
        states.reverse();
        prop_assert_eq!(r.states(), states);
        let mut d = w.holding_durations();
        d.reverse();
        for (a, b) in r.holding_durations().iter().zip(&d) {
            prop_assert!((a - b).abs() <= tolerance(&w));
        }
    }

    #[test]
    fn holding_permutation_keeps_the_skeleton(w in arb_path(), fam in arb_family()) {
        let image = apply_transform(&PathTransform::HoldingPermutation(fam.clone()), &w).unwrap();
        prop_assert_eq!(image.states(), w.states());
        let pi = fam.permutation(w.jump_count());
        let d = w.holding_durations();
        for (i, a) in image.holding_durations().iter().enumerate() {
            prop_assert!((a - d[pi[i]]).abs() <= tolerance(&w), "slot {i}");
        }
    }

    #[test]
    fn declared_involutions_are_involutions(w in arb_path(), phi in arb_transform()) {
        if invert_transform(&phi).involution == Involution::Yes {
            let twice = apply_transform(&phi, &apply_transform(&phi, &w).unwrap()).unwrap();
            prop_assert!(twice.max_time_deviation(&w).unwrap() <= tolerance(&w));
        }
    }
}

#[test]
fn cyclic_shift_is_not_self_inverse() {
    let w = JumpPath::from_pairs(0, &[(0.1, 1), (0.5, 2)], 1.0).unwrap();
    let phi = PathTransform::holding_cyclic();
    assert_eq!(invert_transform(&phi).involution, Involution::No);
    let twice = apply_transform(&phi, &apply_transform(&phi, &w).unwrap()).unwrap();
    assert!(twice.max_time_deviation(&w).unwrap() > 0.1);
}
