use proptest::prelude::*;
use shflab_core::chaos::*;
use shflab_core::coupling::beta_eps;
use shflab_core::kernels::{GaussianBump, TestFunctionPair};
use shflab_core::mollifier::{build_mollifier, MollifierShape, MollifierSpec};
use shflab_core::quad::QuadratureSpec;
use shflab_oracles::{first_chaos_simpson, Bump};

fn mollifier(eps: f64) -> MollifierSpec {
    build_mollifier(MollifierShape::Gaussian, eps, &QuadratureSpec::default()).unwrap()
}

fn critical_beta(eps: f64) -> f64 {
    beta_eps(0.0, eps, mollifier(eps).c_phi).unwrap().beta
}

fn spectrum(eps: f64, k_max: usize, samples: usize) -> ChaosCoefficients {
    let q = QuadratureSpec::default().with_samples(samples);
    chaos_coefficients(
        k_max,
        &mollifier(eps),
        critical_beta(eps),
        &TestFunctionPair::unit(),
        &q,
        ChaosMethod::GaussianAnalytic,
        &GridChaosSpec::default(),
    )
    .unwrap()
}

#[test]
fn first_chaos_matches_simpson_oracle() {
    let q = QuadratureSpec::default();
    let wide = GaussianBump { center: [0.0, 0.0], width: 1.4, amplitude: 0.6 };
    let cases = [
        (0.1, GaussianBump::unit(), GaussianBump::unit(), 0.0, 1.0),
        (0.05, wide, GaussianBump::unit(), 0.0, 1.0),
        (0.2, GaussianBump::unit(), wide, 0.25, 0.5),
    ];
    for (eps, g, gp, s, t) in cases {
        let pair = TestFunctionPair::gaussian(g, gp);
        let v = slab_simplex_integral(1, SlabSpec::new(s, t).unwrap(), &mollifier(eps), &pair, &q).unwrap();
        let bump = |b: GaussianBump| Bump { center: b.center, width: b.width, amplitude: b.amplitude };
        let oracle = first_chaos_simpson(eps, bump(g), bump(gp), s, t, 20_000);
        assert!((v.value / oracle - 1.0).abs() < 1e-6, "eps={eps}: {} vs {oracle}", v.value);
    }
}

#[test]
fn beta_scaling_is_exact() {
    let m = mollifier(0.1);
    let q = QuadratureSpec::default().with_samples(20_000);
    let pair = TestFunctionPair::unit();
    let beta = critical_beta(0.1);
    for k in 1..=4 {
        let a = chaos_coefficient(k, &m, beta, &pair, &q).unwrap().value;
        let b = chaos_coefficient(k, &m, 1.0, &pair, &q).unwrap().value;
        let rel = (a / b / beta.powi(k as i32) - 1.0).abs();
        assert!(rel < 1e-12, "k={k}: {rel}");
    }
}

#[test]
fn grid_path_matches_analytic_path() {
    let m = mollifier(0.8);
    let pair = TestFunctionPair::unit();
    let q = QuadratureSpec::default().with_samples(1_000_000);
    for k in 1..=3 {
        let a = chaos_coefficient(k, &m, 1.0, &pair, &q).unwrap();
        let g = chaos_coefficient_grid(k, &m, 1.0, &pair, &GridChaosSpec::default()).unwrap();
        let tol = 3.0 * (a.error + g.error) + 1e-4 * a.value;
        assert!((a.value - g.value).abs() < tol, "k={k}: {a:?} vs {g:?}");
    }
}

#[test]
fn coefficients_decrease_along_the_ladder() {
    let ladder: Vec<ChaosCoefficients> = [0.2, 0.1, 0.05].iter().map(|e| spectrum(*e, 4, 200_000)).collect();
    for k in 0..4 {
        for w in ladder.windows(2) {
            let slack = 3.0 * (w[0].est_errors[k] + w[1].est_errors[k]);
            assert!(w[1].ck2[k] < w[0].ck2[k] - slack, "k={}: {} then {}", k + 1, w[0].ck2[k], w[1].ck2[k]);
        }
    }
}

#[test]
fn median_index_does_not_decrease() {
    let k: Vec<usize> = [0.2, 0.1, 0.05].iter().map(|e| median_index(&spectrum(*e, 8, 200_000)).unwrap()).collect();
    assert!(k.windows(2).all(|w| w[1] >= w[0]), "{k:?}");
}

#[test]
fn full_slab_equals_variance_from_chaos() {
    let eps = 0.1;
    let q = QuadratureSpec::default().with_samples(50_000);
    let c = spectrum(eps, 5, 50_000);
    let s = slab_variance(5, SlabSpec::full(), &mollifier(eps), critical_beta(eps), &TestFunctionPair::unit(), &q)
        .unwrap();
    assert_eq!(s.value, variance_from_chaos(&c).partial_sum);
    let single = ChaosCoefficients { k_max: 1, ck2: vec![c.ck2[0]], est_errors: vec![0.0], ..c.clone() };
    assert_eq!(variance_from_chaos(&single).partial_sum, c.ck2[0]);
}

#[test]
fn short_slab_is_first_order_in_width() {
    let eps = 0.1;
    let m = mollifier(eps);
    let beta = critical_beta(eps);
    let q = QuadratureSpec::default();
    let pair = TestFunctionPair::unit();
    // f(1/2), the first-chaos integrand at the slab midpoint
    let h = 1e-4;
    let f_mid = first_chaos_simpson(eps, Bump::unit(), Bump::unit(), 0.5 - h, 0.5 + h, 2) / (2.0 * h);
    let mut prev = f64::INFINITY;
    for &d in &[1e-1, 1e-2, 1e-3] {
        let slab = SlabSpec::new(0.5 - 0.5 * d, 0.5 + 0.5 * d).unwrap();
        let v = slab_variance(1, slab, &m, beta, &pair, &q).unwrap().value;
        let err = (v / (beta * d * f_mid) - 1.0).abs();
        assert!(err < 0.1 * d * d + 1e-8, "d={d}: {err}");
        assert!(err <= prev);
        prev = err;
    }
}

#[test]
fn slab_ratio_improves_at_small_eps() {
    let eps = 0.01;
    let m = mollifier(eps);
    let beta = critical_beta(eps);
    let q = QuadratureSpec::default().with_samples(200_000);
    let pair = TestFunctionPair::unit();
    let ratios: Vec<f64> = (2..=6)
        .map(|p| {
            let d = 0.5f64.powi(p);
            let slab = SlabSpec::new(0.5 - 0.5 * d, 0.5 + 0.5 * d).unwrap();
            slab_variance(6, slab, &m, beta, &pair, &q).unwrap().value / d
        })
        .collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn slab_must_lie_in_unit_interval() {
    assert!(SlabSpec::new(0.5, 0.5).is_err());
    assert!(SlabSpec::new(-0.1, 0.5).is_err());
    assert!(SlabSpec::new(0.2, 1.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlation_is_monotone_and_normalized(
        ck2 in proptest::collection::vec(0.0f64..5.0, 1..10),
        t1 in 0.0f64..3.0,
        dt in 0.0f64..3.0,
    ) {
        prop_assume!(ck2.iter().sum::<f64>() > 1e-6);
        let c = ChaosCoefficients {
            epsilon: 0.1,
            beta: 1.0,
            k_max: ck2.len(),
            est_errors: vec![0.0; ck2.len()],
            ck2,
            method: ChaosMethod::GaussianAnalytic,
        };
        prop_assert_eq!(correlation_from_chaos(&c, 0.0).unwrap(), 1.0);
        let a = correlation_from_chaos(&c, t1).unwrap();
        let b = correlation_from_chaos(&c, t1 + dt).unwrap();
        prop_assert!(b <= a + 1e-15 && a <= 1.0 + 1e-15 && b >= 0.0);
    }
}
