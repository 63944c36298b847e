mod common;

use acgn::capacity::{self, Eigenbasis, SearchOptions, Sign, SignPolicy};
use acgn::noise::ArmaNoise;
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn waterfill_spends_the_budget(
        variances in prop::collection::vec(0.05f64..10.0, 1..6),
        budget in 0.01f64..50.0,
    ) {
        let wf = capacity::waterfill(&variances, budget).unwrap();
        let alloc = &wf.allocation;
        prop_assert!((alloc.total_power() - budget).abs() <= 1e-9 * budget);
        for (p, v) in alloc.powers.iter().zip(&variances) {
            prop_assert!(*p >= 0.0);
            if *p > 0.0 {
                prop_assert!((p + v - wf.level).abs() <= 1e-9 * wf.level);
            } else {
                prop_assert!(*v >= wf.level - 1e-9 * wf.level);
            }
        }
        prop_assert!((alloc.rate_from_powers() - alloc.rate_from_gains()).abs() <= 1e-12);
    }

    #[test]
    fn scalar_bound_is_monotone_in_budget(
        f in -0.8f64..0.8,
        g in -0.8f64..0.8,
        budget in 0.1f64..5.0,
    ) {
        let lo = capacity::scalar_bound(&[f], &[g], 1.0, budget, SignPolicy::Auto).unwrap();
        let hi = capacity::scalar_bound(&[f], &[g], 1.0, 1.5 * budget, SignPolicy::Auto).unwrap();
        prop_assert!(hi.lower_bound_bits >= lo.lower_bound_bits - 1e-12);
    }
}

#[test]
fn bound_grows_with_budget_on_colored_noise() {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    for diagonal in [true, false] {
        let noise = common::random_noise(&mut rng, 2, 1, 1, diagonal);
        let mut last = 0.0;
        for budget in [0.5, 1.0, 2.0, 4.0] {
            let r = capacity::solve(&noise, budget, SearchOptions::default()).unwrap();
            assert!(r.lower_bound_bits > last, "diagonal={diagonal} budget={budget}");
            last = r.lower_bound_bits;
        }
    }
}

#[test]
fn designs_meet_the_budget() {
    let mut rng = ChaCha20Rng::seed_from_u64(22);
    for (n, diagonal) in [(1, true), (3, true), (2, false), (3, false)] {
        let noise = common::random_noise(&mut rng, n, 2, 1, diagonal);
        let budget = 2.5;
        let r = capacity::solve(&noise, budget, SearchOptions::default()).unwrap();
        assert!(
            (r.design.transmit_power - budget).abs() <= acgn::tol::POW_TOL * budget,
            "n={n}: {} vs {budget}",
            r.design.transmit_power
        );
        assert!(r.trace.budget_residual.abs() <= acgn::tol::POW_TOL * budget);
    }
}

#[test]
fn repeated_eigenvalue_basis_does_not_matter() {
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    let noise = ArmaNoise::white(common::diag(&[1.5, 1.5, 0.5])).unwrap();
    let reference = capacity::solve_general(&noise, 3.0, SearchOptions::default()).unwrap();
    let mut rotated = common::random_orthogonal(&mut rng, 2);
    // rotate only inside the repeated eigenspace
    rotated = {
        let mut q = acgn::linalg::Mat::identity(3, 3);
        q.view_mut((0, 0), (2, 2)).copy_from(&rotated);
        q
    };
    let basis = Eigenbasis::custom(&noise, rotated).unwrap();
    let r = capacity::solve_general_in_basis(&noise, basis, 3.0, SearchOptions::default()).unwrap();
    assert!((r.lower_bound_bits - reference.lower_bound_bits).abs() <= 1e-9);
}

#[test]
fn independent_and_general_agree_on_diagonal_noise() {
    let mut rng = ChaCha20Rng::seed_from_u64(24);
    for _ in 0..5 {
        let noise = common::random_noise(&mut rng, 3, 1, 1, true);
        let opts = SearchOptions::default();
        let ind = capacity::solve_independent(&noise, 2.0, SignPolicy::Auto).unwrap();
        // the general solver uses one sign for every channel
        let plus = capacity::solve_general(&noise, 2.0, SearchOptions { sign: SignPolicy::Plus, ..opts }).unwrap();
        let minus = capacity::solve_general(&noise, 2.0, SearchOptions { sign: SignPolicy::Minus, ..opts }).unwrap();
        let general = plus.lower_bound_bits.max(minus.lower_bound_bits);
        assert!(ind.lower_bound_bits >= general - 1e-8);
        let signs = &ind.design.allocation.signs;
        if signs.iter().all(|s| *s == signs[0]) {
            assert!((ind.lower_bound_bits - general).abs() <= 1e-6);
        }
    }
}

#[test]
fn ar1_sign_choice() {
    let r = capacity::scalar_bound(&[0.5], &[], 1.0, 1.92, SignPolicy::Auto).unwrap();
    assert_relative_eq!(r.lower_bound_bits, 1.0, epsilon = 1e-9);
    assert_eq!(r.design.allocation.signs, vec![Sign::Minus]);
    let plus = capacity::scalar_bound(&[0.5], &[], 1.0, 1.92, SignPolicy::Plus).unwrap();
    assert!(plus.lower_bound_bits < r.lower_bound_bits);
}

#[test]
fn bad_budgets_are_rejected() {
    let noise = ArmaNoise::white(common::diag(&[1.0])).unwrap();
    for budget in [0.0, -1.0, f64::NAN] {
        assert!(capacity::solve(&noise, budget, SearchOptions::default()).is_err());
    }
}
