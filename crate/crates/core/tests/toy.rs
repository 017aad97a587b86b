use std::collections::BTreeMap;

use proptest::prelude::*;
use shflab_core::toy::*;
use shflab_oracles::walsh_direct;

fn sign(n: usize) -> DiscreteNoise {
    DiscreteNoise::sign(n).unwrap()
}

#[test]
fn singleton_projection_is_degree_one_part() {
    for (n, seed) in [(4, 1), (10, 2), (16, 3)] {
        let noise = sign(n);
        let x = ToyObservable::random_integer(&noise, seed).unwrap();
        let p = project_pn(&x, &CellPartition::singletons(n), &noise).unwrap();
        let w1 = walsh_spectrum(&x, &noise).unwrap().degree_part(1, &noise).unwrap();
        assert_eq!(p, w1, "n={n}");
    }
}

#[test]
fn fast_transform_matches_direct_sum() {
    let noise = sign(8);
    let x = ToyObservable::random_integer(&noise, 4).unwrap();
    let fast = walsh_spectrum(&x, &noise).unwrap();
    assert_eq!(fast.coefficients, walsh_direct(&x.values, 8));
}

#[test]
fn walsh_round_trip() {
    let noise = sign(12);
    let x = ToyObservable::random_integer(&noise, 5).unwrap();
    let spec = walsh_spectrum(&x, &noise).unwrap();
    assert_eq!(ToyObservable::from_walsh(&noise, &spec.coefficient_map()).unwrap(), x);
    let sum: f64 = spec.degree_mass.iter().sum();
    assert!((sum - x.norm_sq(&noise).unwrap()).abs() < 1e-9 * sum);
}

#[test]
fn projection_is_idempotent() {
    let noise = sign(10);
    let x = ToyObservable::random_integer(&noise, 6).unwrap();
    for part in [CellPartition::singletons(10), CellPartition::intervals(10, 3)] {
        let once = project_pn(&x, &part, &noise).unwrap();
        let twice = project_pn(&once, &part, &noise).unwrap();
        assert_eq!(once, twice);
    }
}

#[test]
fn projection_norm_is_block_variance_sum() {
    let noise = sign(10);
    let x = ToyObservable::random_integer(&noise, 7).unwrap();
    for part in [CellPartition::singletons(10), CellPartition::intervals(10, 4)] {
        let p = project_pn(&x, &part, &noise).unwrap();
        let norm = p.norm_sq(&noise).unwrap();
        let sum = block_variance_sum(&x, &part, &noise).unwrap();
        assert!((norm - sum).abs() < 1e-9 * sum, "{norm} vs {sum}");
    }
}

#[test]
fn resampling_correlation_exact_vs_monte_carlo() {
    let noise = sign(9);
    let x = ToyObservable::majority(&noise).unwrap();
    for (rho, seed) in [(0.3, 8), (0.8, 9)] {
        let exact = resample_correlation_discrete(&x, rho, &noise).unwrap();
        let (mc, se) = resample_correlation_mc(&x, rho, &noise, 100_000, seed).unwrap();
        assert!((exact - mc).abs() < 3.0 * se, "rho={rho}: {exact} vs {mc} ± {se}");
    }
}

#[test]
fn refinement_ladder_reaches_first_level() {
    let n = 12;
    let noise = sign(n);
    let x = ToyObservable::random_integer(&noise, 10).unwrap();
    let ladder: Vec<CellPartition> = [12, 6, 3, 1].iter().map(|s| CellPartition::intervals(n, *s)).collect();
    let norms = iterate_pn_refinement(&x, &ladder, &noise).unwrap();
    let spec = walsh_spectrum(&x, &noise).unwrap();
    assert!((norms[0] - x.variance(&noise).unwrap()).abs() < 1e-9 * norms[0]);
    assert!(norms.windows(2).all(|w| w[1] <= w[0]), "{norms:?}");
    assert!((norms[3] - spec.degree_mass[1]).abs() < 1e-9 * norms[3]);
}

#[test]
fn parity_is_invisible_to_small_blocks() {
    let n = 8;
    let noise = sign(n);
    let parity = ToyObservable::product(&noise, &(0..n).collect::<Vec<_>>()).unwrap();
    let p = project_pn(&parity, &CellPartition::intervals(n, 4), &noise).unwrap();
    assert!(p.values.iter().all(|v| *v == 0.0));
    let whole = project_pn(&parity, &CellPartition::intervals(n, n), &noise).unwrap();
    assert_eq!(whole, parity);
    assert_eq!(resample_correlation_discrete(&parity, 0.5, &noise).unwrap(), 0.5f64.powi(n as i32));
}

#[test]
fn walsh_builder_checks_masks() {
    let noise = sign(3);
    let mut map = BTreeMap::new();
    map.insert(8u32, 1.0);
    assert!(ToyObservable::from_walsh(&noise, &map).is_err());
    assert!(resample_correlation_discrete(&ToyObservable { values: vec![2.0; 8] }, 0.5, &noise).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_contracts_and_is_idempotent(n in 2usize..9, size in 1usize..5, seed in 0u64..1000) {
        let noise = sign(n);
        let x = ToyObservable::random_integer(&noise, seed).unwrap();
        let part = CellPartition::intervals(n, size);
        let p = project_pn(&x, &part, &noise).unwrap();
        prop_assert_eq!(&project_pn(&p, &part, &noise).unwrap(), &p);
        prop_assert!(p.norm_sq(&noise).unwrap() <= x.variance(&noise).unwrap() * (1.0 + 1e-12));
        prop_assert!(p.expectation(&noise).unwrap().abs() < 1e-9);
    }

    #[test]
    fn correlation_is_monotone_in_rho(n in 2usize..9, seed in 0u64..1000, r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
        let noise = sign(n);
        let x = ToyObservable::random_integer(&noise, seed).unwrap();
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let a = resample_correlation_discrete(&x, lo, &noise).unwrap();
        let b = resample_correlation_discrete(&x, hi, &noise).unwrap();
        prop_assert!(a <= b + 1e-15 && b <= 1.0 + 1e-15);
    }
}
