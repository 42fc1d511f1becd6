mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tray_autonomy::qp::{solve_qp, QpStatus};

#[test]
fn six_variables_four_boxes_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let p = common::random_qp(&mut rng, 6, 0, 4);
        let s = solve_qp(&p, 1e-6, 4000);
        assert_eq!(s.status, QpStatus::Optimal);
        let (x, obj) = common::active_set_oracle(&p).unwrap();
        assert!((s.objective - obj).abs() <= 1e-6 * obj.abs().max(1.0));
        assert!((&s.x - x).amax() < 1e-6);
    }
}

#[test]
fn kkt_residuals_within_ten_tol() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tol = 1e-6;
    for _ in 0..200 {
        let n = rng.random_range(2..=10);
        let me = rng.random_range(0..=2.min(n - 1));
        let mi = rng.random_range(0..=6);
        let p = common::random_qp(&mut rng, n, me, mi);
        let s = solve_qp(&p, tol, 4000);
        assert!(s.is_optimal());
        let r = p.kkt_residuals(&s);
        assert!(r.stationarity <= 10.0 * tol, "{r:?}");
        assert!(r.complementarity <= 10.0 * tol, "{r:?}");
        assert!(s.primal_residual <= tol * (1.0 + s.x.amax() * 10.0));
    }
}

#[test]
fn optimum_beats_random_feasible_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let p = common::random_qp(&mut rng, 4, 0, 6);
        let s = solve_qp(&p, 1e-6, 4000);
        let mut accepted = 0;
        while accepted < 1000 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            if p.max_violation(&x) > 0.0 {
                continue;
            }
            accepted += 1;
            assert!(s.objective <= p.objective(&x) + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solves_are_bit_identical(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = common::random_qp(&mut rng, 5, 1, 4);
        let a = solve_qp(&p, 1e-6, 4000);
        let b = solve_qp(&p, 1e-6, 4000);
        prop_assert_eq!(a.x.as_slice(), b.x.as_slice());
        prop_assert_eq!(a.iterations, b.iterations);
    }
}
