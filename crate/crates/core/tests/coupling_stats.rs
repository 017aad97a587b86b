use std::f64::consts::{LN_2, PI};

use proptest::prelude::*;
use shflab_core::coupling::beta_eps;
use shflab_core::mollifier::{build_mollifier, MollifierShape, EULER_GAMMA};
use shflab_core::quad::QuadratureSpec;
use shflab_core::stats::{estimate_correlation, pairwise_sum, summarize};
use shflab_oracles::correlated_normals;

fn c_phi() -> f64 {
    build_mollifier(MollifierShape::Gaussian, 0.1, &QuadratureSpec::default()).unwrap().c_phi
}

#[test]
fn gaussian_c_phi_closed_form() {
    assert!((c_phi() - 0.5 * (8.0f64.ln() - EULER_GAMMA)).abs() < 1e-12);
    let b = beta_eps(0.0, 0.1, c_phi()).unwrap().beta;
    assert!((b - 3.481_494_933_115_679_5).abs() < 1e-12, "{b}");
}

#[test]
fn coupling_approaches_leading_order() {
    let ladder = [1e-2, 1e-4, 1e-8, 1e-16, 1e-64, 1e-256];
    let gaps: Vec<f64> = ladder
        .iter()
        .map(|e| {
            let b = beta_eps(0.0, *e, c_phi()).unwrap().beta;
            (b * e.ln().abs() / (2.0 * PI) - 1.0).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[5] < 3e-3);
}

#[test]
fn resampled_coupling_shifts_theta() {
    let (theta, sigma) = (0.4, 1.3);
    let a = theta - 2.0 * LN_2 + 2.0 * EULER_GAMMA + 2.0 * c_phi();
    let limit = PI * (sigma * sigma / 4.0 - a * sigma / 2.0);
    let mut prev = f64::INFINITY;
    for l in [20.0, 80.0, 320.0, 700.0] {
        let eps = (-l as f64).exp();
        let shifted = beta_eps(theta, eps, c_phi()).unwrap().resampled(sigma);
        let series = beta_eps(theta - sigma, eps, c_phi()).unwrap().beta;
        let scaled = (shifted - series) * l * l * l;
        let err = (scaled - limit).abs();
        assert!(err < prev, "L={l}: {scaled} vs {limit}");
        prev = err;
    }
    assert!(prev < 1e-2 * limit.abs());
}

#[test]
fn correlation_recovers_synthetic_rho() {
    for (rho, seed) in [(0.5, 1), (0.0, 2), (-0.8, 3)] {
        let (x, y) = correlated_normals(rho, 20_000, seed);
        let (r, se) = estimate_correlation(&x, &y).unwrap();
        assert!((r - rho).abs() < 3.0 * se, "{rho}: {r} ± {se}");
        assert!(se > 0.0 && se < 0.02);
    }
}

#[test]
fn constant_sample_has_undefined_correlation() {
    let x = vec![1.0; 10];
    let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
    assert!(estimate_correlation(&x, &y).is_err());
    assert!(estimate_correlation(&y[..3], &y[..4]).is_err());
}

#[test]
fn moment_summary_of_normals() {
    let (x, _) = correlated_normals(0.0, 50_000, 4);
    let s = summarize(&x).unwrap();
    assert!(s.mean.abs() < 3.0 * s.se_mean);
    assert!((s.variance - 1.0).abs() < 3.0 * s.se_variance);
    assert!((s.second_moment - 1.0).abs() < 3.0 * s.se_second_moment);
}

proptest! {
    #[test]
    fn pairwise_sum_matches_naive(x in proptest::collection::vec(-1e3f64..1e3, 0..200)) {
        let naive: f64 = x.iter().sum();
        prop_assert!((pairwise_sum(&x) - naive).abs() < 1e-9);
    }

    #[test]
    fn correlation_is_scale_invariant(
        x in proptest::collection::vec(-10.0f64..10.0, 5..50),
        a in 0.1f64..10.0,
        b in -5.0f64..5.0,
    ) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + (i % 3) as f64).collect();
        let z: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        if let (Ok((r1, _)), Ok((r2, _))) = (estimate_correlation(&x, &y), estimate_correlation(&x, &z)) {
            prop_assert!((r1 - r2).abs() < 1e-9);
            prop_assert!(r1.abs() <= 1.0 + 1e-12);
        }
    }
}
