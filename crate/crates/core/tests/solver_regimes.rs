//! Solver behavior across the constraint regimes.

use peakcap::output_stats::mutual_information;
use peakcap::quadrature::QuadratureRule;
use peakcap::solver::{circle_capacity, solve_capacity, two_point_capacity, SolverOptions};
use peakcap::{EllipseConstraint, RegimeLabel};

fn solve(r_p: f64, r_m: f64, opts: &SolverOptions) -> peakcap::CapacityResult {
    let c = EllipseConstraint::new(r_p, r_m).unwrap();
    solve_capacity(&c, opts).unwrap_or_else(|e| panic!("solve({r_p}, {r_m}) failed: {e}"))
}

fn fast_opts() -> SolverOptions {
    SolverOptions {
        grid_n: 32,
        ..SolverOptions::default()
    }
}

/// Near-circle constraints have densely supported optima and need a larger
/// iteration budget.
fn dense_opts() -> SolverOptions {
    SolverOptions {
        grid_n: 32,
        max_iters: 300_000,
        ..SolverOptions::default()
    }
}

#[test]
fn two_point_regime_collapses_to_endpoint_pair() {
    let rule = QuadratureRule::cached(96).unwrap();
    let start = std::time::Instant::now();
    let r = solve(0.8, 0.3, &SolverOptions::default());
    println!(
        "solve(0.8, 0.3): capacity={:.9} iters={} support={} in {:?}",
        r.capacity,
        r.iterations,
        r.distribution.atoms().len(),
        start.elapsed()
    );
    assert_eq!(r.regime_label, RegimeLabel::TwoPoint);
    assert_eq!(r.distribution.atoms().len(), 1);
    assert_eq!(r.distribution.atoms()[0].x1, 0.8);
    assert!((r.capacity - two_point_capacity(0.8, &rule)).abs() < 1e-6);
    assert!(r.kkt.passed, "{:?}", r.kkt);
    assert!((r.capacity - mutual_information(&r.distribution, &rule)).abs() < 1e-9);
}

#[test]
fn circle_case_stays_uniform() {
    let rule = QuadratureRule::cached(96).unwrap();
    let start = std::time::Instant::now();
    let r = solve(1.0, 1.0, &SolverOptions::default());
    println!(
        "solve(1, 1): capacity={:.9} iters={} support={} in {:?}",
        r.capacity,
        r.iterations,
        r.distribution.atoms().len(),
        start.elapsed()
    );
    assert_eq!(r.regime_label, RegimeLabel::CircleUniform);
    assert!((r.capacity - circle_capacity(1.0, &rule).unwrap()).abs() < 1e-6);
    assert!(r.kkt.passed, "{:?}", r.kkt);
}

#[test]
fn beyond_two_point_needs_more_atoms() {
    let start = std::time::Instant::now();
    let r = solve(1.2, 0.8, &SolverOptions::default());
    println!(
        "solve(1.2, 0.8): capacity={:.9} iters={} atoms={:?} in {:?}",
        r.capacity,
        r.iterations,
        r.distribution.atoms(),
        start.elapsed()
    );
    assert_eq!(r.regime_label, RegimeLabel::GeneralDiscrete);
    assert!(r.distribution.expand().len() > 2);
    assert!(r
        .distribution
        .atoms()
        .iter()
        .any(|a| a.x1 == 1.2));
    assert!(r.kkt.passed, "{:?}", r.kkt);
}

#[test]
fn degenerate_interval_uses_antipodal_pair() {
    let rule = QuadratureRule::cached(96).unwrap();
    let r = solve(0.8, 0.0, &fast_opts());
    assert_eq!(r.regime_label, RegimeLabel::Degenerate1d);
    assert_eq!(r.distribution.atoms().len(), 1);
    assert!((r.capacity - two_point_capacity(0.8, &rule)).abs() < 1e-6);
    assert!(r.kkt.passed);
}

#[test]
fn capacity_monotone_in_both_radii() {
    let opts = dense_opts();
    let radii = [0.2, 0.5, 0.8, 1.1, 1.4];
    let mut capacities = std::collections::HashMap::new();
    for (i, &r_p) in radii.iter().enumerate() {
        for &r_m in &radii[..=i] {
            let r = solve(r_p, r_m, &opts);
            capacities.insert(
                ((r_p * 10.0) as i32, (r_m * 10.0) as i32),
                r.capacity,
            );
        }
    }
    let tol = 1e-7;
    for (i, &r_p) in radii.iter().enumerate() {
        for (j, &r_m) in radii[..=i].iter().enumerate() {
            let c = capacities[&((r_p * 10.0) as i32, (r_m * 10.0) as i32)];
            if i > 0 && j < i {
                let smaller = capacities[&((radii[i - 1] * 10.0) as i32, (r_m * 10.0) as i32)];
                assert!(c >= smaller - tol, "C({r_p},{r_m}) < C({},{r_m})", radii[i - 1]);
            }
            if j > 0 {
                let smaller = capacities[&((r_p * 10.0) as i32, (radii[j - 1] * 10.0) as i32)];
                assert!(c >= smaller - tol, "C({r_p},{r_m}) < C({r_p},{})", radii[j - 1]);
            }
        }
    }
}

#[test]
fn circle_limit_is_continuous() {
    let rule = QuadratureRule::cached(96).unwrap();
    let circle = circle_capacity(1.0, &rule).unwrap();
    let opts = dense_opts();
    let mut prev = 0.0;
    for eps in [0.1, 0.05, 0.01] {
        let r = solve(1.0, 1.0 - eps, &opts);
        println!(
            "solve(1, {}): capacity={:.9} support={} iters={}",
            1.0 - eps,
            r.capacity,
            r.distribution.atoms().len(),
            r.iterations
        );
        assert!(r.capacity >= prev - 1e-7, "not increasing at eps={eps}");
        assert!(r.capacity <= circle + 1e-7, "exceeds circle limit at eps={eps}");
        prev = r.capacity;
    }
}

#[test]
fn two_point_agreement_below_curve_and_breakdown_above() {
    let rule = QuadratureRule::cached(96).unwrap();
    let opts = dense_opts();
    // sample the traced boundary, then probe 5% below and above
    for r_p in [0.4, 0.7, 0.9, 1.05, 1.2] {
        let threshold = peakcap::curves::two_point_threshold(r_p, 1e-12, &rule).unwrap();
        let below = solve(r_p, 0.95 * threshold, &opts);
        assert_eq!(
            below.distribution.atoms().len(),
            1,
            "below curve at r_p={r_p}: {:?}",
            below.distribution.atoms()
        );
        assert!((below.capacity - two_point_capacity(r_p, &rule)).abs() < 1e-6);

        let above_rm = (1.05 * threshold).min(r_p);
        if above_rm < r_p {
            let above = solve(r_p, above_rm, &opts);
            assert!(
                above.distribution.expand().len() > 2,
                "above curve at r_p={r_p}: {:?}",
                above.distribution.atoms()
            );
        }
    }
}
