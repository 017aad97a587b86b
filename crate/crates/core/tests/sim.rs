use std::f64::consts::PI;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use shflab_core::chaos::{chaos_coefficients, correlation_from_chaos, variance_from_chaos, ChaosMethod, GridChaosSpec};
use shflab_core::coupling::beta_eps;
use shflab_core::kernels::TestFunctionPair;
use shflab_core::mollifier::{build_mollifier, MollifierShape};
use shflab_core::noise::NoiseBank;
use shflab_core::quad::QuadratureSpec;
use shflab_core::sim::*;
use shflab_core::stats::{estimate_correlation, summarize};

const EPS: f64 = 0.4;

fn simulator(beta: Option<f64>) -> Simulator {
    let mollifier = build_mollifier(MollifierShape::Gaussian, EPS, &QuadratureSpec::default()).unwrap();
    let mut coupling = beta_eps(0.0, EPS, mollifier.c_phi).unwrap();
    if let Some(b) = beta {
        coupling.beta = b;
    }
    let lattice = Lattice::resolving(EPS, 12.8, &Resolution::default()).unwrap();
    Simulator::new(SimulationSetup { lattice, coupling, mollifier, pair: TestFunctionPair::unit() }).unwrap()
}

fn mass(sim: &Simulator, state: &FieldState) -> f64 {
    let h = sim.setup().lattice.spacing();
    state.values.iter().sum::<f64>() * h * h
}

#[test]
fn observable_is_centered() {
    let sim = simulator(None);
    let bank = NoiseBank::new(21, 0, sim.steps());
    let f = sim.sample_observable(&bank, 0, 2000).unwrap();
    let s = summarize(&f).unwrap();
    assert!(s.mean.abs() < 3.0 * s.se_mean, "{} ± {}", s.mean, s.se_mean);
}

#[test]
fn total_mass_is_a_martingale() {
    let sim = simulator(None);
    let bank = NoiseBank::new(22, 0, sim.steps());
    let half = sim.steps() / 2;
    let mut ws = sim.workspace();
    let (mut mid, mut end) = (Vec::new(), Vec::new());
    for r in 0..2000 {
        sim.trajectory(&bank, r, &mut ws, |s| {
            if s.step == half {
                mid.push(mass(&sim, s));
            }
        })
        .map(|s| end.push(mass(&sim, &s)))
        .unwrap();
    }
    for m in [mid, end] {
        let s = summarize(&m).unwrap();
        assert!((s.mean - 2.0 * PI).abs() < 3.0 * s.se_mean, "{} ± {}", s.mean, s.se_mean);
    }
}

#[test]
fn zero_coupling_conserves_mass() {
    let sim = simulator(Some(0.0));
    let bank = NoiseBank::new(23, 0, sim.steps());
    let mut ws = sim.workspace();
    let m0 = mass(&sim, &sim.initial_state());
    assert!((m0 - 2.0 * PI).abs() < 1e-7);
    sim.trajectory(&bank, 0, &mut ws, |s| assert!((mass(&sim, s) - m0).abs() < 1e-12)).unwrap();
}

#[test]
fn variance_matches_chaos_expansion() {
    let sim = simulator(None);
    let bank = NoiseBank::new(24, 0, sim.steps());
    let s = summarize(&sim.sample_observable(&bank, 0, 5000).unwrap()).unwrap();
    let m = &sim.setup().mollifier;
    let c = chaos_coefficients(
        8,
        m,
        sim.setup().coupling.beta,
        &TestFunctionPair::unit(),
        &QuadratureSpec::default().with_samples(200_000),
        ChaosMethod::GaussianAnalytic,
        &GridChaosSpec::default(),
    )
    .unwrap();
    let v = variance_from_chaos(&c);
    let tol = 3.0 * s.se_variance + v.tail.unwrap_or(0.0) + 3.0 * v.error;
    assert!((s.variance - v.partial_sum).abs() < tol, "{} ± {} vs {:?}", s.variance, s.se_variance, v);
}

#[test]
fn resampled_correlation_matches_chaos_and_decays() {
    let sim = simulator(None);
    let (a, b) = NoiseBank::pair(25, sim.steps());
    let taus = [0.5, 30.0];
    let runs = sim.sample_coupled(&taus, &a, &b, 0, 2500).unwrap();
    let base: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let c = chaos_coefficients(
        8,
        &sim.setup().mollifier,
        sim.setup().coupling.beta,
        &TestFunctionPair::unit(),
        &QuadratureSpec::default().with_samples(200_000),
        ChaosMethod::GaussianAnalytic,
        &GridChaosSpec::default(),
    )
    .unwrap();
    for (i, tau) in taus.iter().enumerate() {
        let other: Vec<f64> = runs.iter().map(|r| r.1[i]).collect();
        let (rho, se) = estimate_correlation(&base, &other).unwrap();
        let expect = correlation_from_chaos(&c, *tau).unwrap();
        assert!((rho - expect).abs() < 3.0 * se + 0.01, "tau={tau}: {rho} ± {se} vs {expect}");
    }
}

#[test]
fn replicas_are_independent_of_thread_count() {
    let sim = simulator(None);
    let bank = NoiseBank::new(26, 0, sim.steps());
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| sim.sample_observable(&bank, 100, 64).unwrap())
    };
    let (one, four) = (run(1), run(4));
    assert!(one.iter().zip(&four).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn one_cell_is_geometric_brownian_motion() {
    let (beta, rate, dt, steps): (f64, f64, f64, usize) = (0.8, 1.5, 0.01, 100);
    let normal = Normal::new(0.0, (rate * dt).sqrt()).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(27);
    let mut first = Vec::new();
    let mut values = Vec::new();
    for _ in 0..200_000 {
        let z: Vec<f64> = (0..steps).map(|_| normal.sample(&mut rng)).collect();
        let u = one_cell_path(beta, rate, dt, 1.0, &z).unwrap();
        if first.is_empty() {
            let log = beta.sqrt() * z.iter().sum::<f64>() - 0.5 * beta * rate * dt * steps as f64;
            assert!((u.ln() - log).abs() < 1e-12);
            first.push(u);
        }
        values.push(u);
    }
    let s = summarize(&values).unwrap();
    let t = dt * steps as f64;
    assert!((s.mean - 1.0).abs() < 3.0 * s.se_mean, "{} ± {}", s.mean, s.se_mean);
    let m2 = (beta * rate * t).exp();
    assert!((s.second_moment - m2).abs() < 3.0 * s.se_second_moment, "{} vs {m2}", s.second_moment);
    assert!(one_cell_path(-1.0, rate, dt, 1.0, &[0.0]).is_err());
}
