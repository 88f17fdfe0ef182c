//! The frozen benchmark checked against a brute-force solver that shares no
//! code with the library.

use hidden_action_core::benchmark::{default_fixture, second_best_oracle_on, BenchmarkFixture, PremiumGrid};
use hidden_action_core::model::ActorParams;

const RHO: f64 = 50.0;
const ETA: f64 = 0.5;

/// Agent's best response to share φ, found by bisection on the first-order condition.
fn brute_best_response(phi: f64) -> f64 {
    let foc = |a: f64| phi * RHO * (-ETA * phi * RHO * a).exp() - 0.2 * a;
    let (mut lo, mut hi) = (0.0, phi * RHO / 0.2 + 1.0);
    if foc(lo) <= 0.0 {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if foc(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn brute_oracle(step: f64) -> (f64, f64, f64) {
    let n = (1.0 / step).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for k in 0..=n {
        let phi = k as f64 * step;
        let a = brute_best_response(phi);
        let agent = (1.0 - (-ETA * phi * RHO * a).exp()) / ETA - 0.1 * a * a;
        if agent < -1e-12 {
            continue;
        }
        let value = (1.0 - phi) * RHO * a;
        if value > best.0 {
            best = (value, phi, a);
        }
    }
    (best.2, best.1, RHO * best.2)
}

#[test]
fn frozen_fixture_matches_brute_force() {
    let fx = default_fixture();
    let (a, phi, x) = brute_oracle(fx.premium_step);
    assert!((fx.a_star - a).abs() < 1e-6, "{} vs {a}", fx.a_star);
    assert!((fx.phi_star - phi).abs() < 1e-12);
    assert!((fx.x_star - x).abs() < 1e-6);
    assert!((fx.a_star - 1.917_172_713_457_406).abs() < 1e-9);
    assert_eq!(fx.phi_star, 0.02);
}

#[test]
fn fixture_regenerates_within_tolerance() {
    let fresh = BenchmarkFixture::compute(&ActorParams::standard(), 0.0, &PremiumGrid::default()).unwrap();
    assert!(fresh.max_drift(&default_fixture()) < 1e-6);
}

#[test]
fn finer_grid_moves_the_action_by_less_than_a_thousandth() {
    let coarse = default_fixture();
    let (a_fine, _, _) = brute_oracle(1e-4);
    let lib_fine = second_best_oracle_on(&ActorParams::standard(), 0.0, &PremiumGrid::new(1e-4).unwrap()).unwrap();
    assert!((lib_fine.a_star - a_fine).abs() < 1e-6);
    assert!((coarse.a_star - a_fine).abs() < 1e-3);
}
