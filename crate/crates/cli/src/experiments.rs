//! The named experiments behind `shflab run`.

use std::time::Instant;

use shflab_core::chaos::{
    chaos_coefficients, correlation_from_chaos, median_index, slab_variance, variance_from_chaos, ChaosCoefficients,
    ChaosMethod, GridChaosSpec, SlabSpec,
};
use shflab_core::coupling::beta_eps;
use shflab_core::kernels::{heat_pairing, q2_pairing, scaled_j, sensitivity_limit_ratio, w_pairing, KernelTable};
use shflab_core::mollifier::{build_mollifier, MollifierSpec};
use shflab_core::noise::NoiseBank;
use shflab_core::sim::{Lattice, SimulationSetup, Simulator};
use shflab_core::stats::{estimate_correlation, summarize};
use shflab_core::toy::{
    block_variance_sum, iterate_pn_refinement, project_pn, resample_correlation_discrete, resample_correlation_mc,
    walsh_spectrum, Alphabet, CellPartition, DiscreteNoise, ToyObservable,
};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Context, Result};
use crate::record::{Check, ResultRecord, Row, CODE_VERSION};

/// `j⁰(1)`, the Fransen–Robinson constant.
pub const J_AT_ONE: f64 = 2.807_770_242_028_519_4;

type Output = (Vec<Row>, Vec<Check>);

/// Validates `config`, runs the named experiment and writes `<name>.csv` and `<name>.json` into
/// `config.output`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultRecord> {
    let record = compute_experiment(config)?;
    record.write(config, &config.output)?;
    Ok(record)
}

/// As [`run_experiment`] without writing anything.
pub fn compute_experiment(config: &ExperimentConfig) -> Result<ResultRecord> {
    config.validate()?;
    let start = Instant::now();
    let (rows, checks) = match config.experiment {
        ExperimentKind::JfunTable => jfun_table(config)?,
        ExperimentKind::Wpair => wpair(config)?,
        ExperimentKind::SecondMomentLadder => second_moment_ladder(config)?,
        ExperimentKind::SensitivityCurve => sensitivity_curve(config)?,
        ExperimentKind::ChaosVsMc => chaos_vs_mc(config)?,
        ExperimentKind::SlabScaling => slab_scaling(config)?,
        ExperimentKind::ToySuite => toy_suite(config)?,
    };
    Ok(ResultRecord {
        experiment: config.experiment,
        config_digest: config.digest(),
        code_version: CODE_VERSION.into(),
        seed: config.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        rows,
        checks,
    })
}

fn mollifier(config: &ExperimentConfig, eps: f64) -> Result<MollifierSpec> {
    build_mollifier(config.mollifier, eps, &config.quadrature).context(|| format!("mollifier at eps = {eps}"))
}

/// The simulator for one ladder entry, at the configured resolution policy.
pub fn simulator(config: &ExperimentConfig, eps: f64) -> Result<Simulator> {
    let m = mollifier(config, eps)?;
    let coupling = beta_eps(config.theta, eps, m.c_phi).context(|| format!("coupling at eps = {eps}"))?;
    let lattice = Lattice::resolving(eps, config.lattice.box_side, &config.lattice.resolution())
        .context(|| format!("lattice at eps = {eps}"))?;
    Simulator::new(SimulationSetup { lattice, coupling, mollifier: m, pair: config.pair.pair() })
        .context(|| format!("simulator at eps = {eps}"))
}

/// Independent `(ξ, ξ')` banks for ladder entry `index`.
pub fn banks(seed: u64, index: usize, steps: usize) -> (NoiseBank, NoiseBank) {
    let b = 2 * index as u64;
    (NoiseBank::new(seed, b, steps), NoiseBank::new(seed, b + 1, steps))
}

pub fn chaos_spectrum(config: &ExperimentConfig, eps: f64, k_max: usize) -> Result<ChaosCoefficients> {
    let m = mollifier(config, eps)?;
    let beta = beta_eps(config.theta, eps, m.c_phi).context(|| format!("coupling at eps = {eps}"))?.beta;
    chaos_coefficients(
        k_max,
        &m,
        beta,
        &config.pair.pair(),
        &config.quadrature,
        ChaosMethod::GaussianAnalytic,
        &GridChaosSpec::default(),
    )
    .context(|| format!("chaos coefficients at eps = {eps}"))
}

fn jfun_table(config: &ExperimentConfig) -> Result<Output> {
    let (theta, j) = (config.theta, &config.jfun);
    let fine = &config.quadrature;
    let mut rows = Vec::new();
    let table = KernelTable::build(theta, j.t_min, j.t_max, j.points, fine).context(|| "j table".into())?;
    for &t in table.t_grid.iter().chain(std::iter::once(&1.0)) {
        let e = scaled_j(theta, t, fine).context(|| format!("j at t = {t}"))?;
        rows.push(Row::new("j", e.value / t).t(t).error(e.error / t));
    }
    let coarse_quad = fine.with_rel_tol(j.coarse_rel_tol);
    let coarse = KernelTable::build(theta, j.t_min, j.t_max, j.points, &coarse_quad).context(|| "coarse j table".into())?;
    let (sup, sup_coarse) = (table.log_bound_sup(), coarse.log_bound_sup());
    rows.push(Row::new("log_bound_sup", sup).reference(sup_coarse, None));

    let mut checks = vec![
        Check::new("j-positive", rows.iter().all(|r| r.value > 0.0 && r.value.is_finite()), "all tabulated j > 0"),
        Check::new(
            "log-bound-stable",
            sup.is_finite() && (sup / sup_coarse - 1.0).abs() < 0.01,
            format!("sup t|log t|^2 j(t) = {sup} (coarse {sup_coarse})"),
        ),
    ];
    if theta == 0.0 {
        let j1 = rows.iter().find(|r| r.t == Some(1.0)).map(|r| r.value).unwrap_or(f64::NAN);
        checks.push(Check::new("j-at-one", (j1 / J_AT_ONE - 1.0).abs() < 1e-6, format!("j(1) = {j1}")));
    }
    Ok((rows, checks))
}

fn wpair(config: &ExperimentConfig) -> Result<Output> {
    let (theta, t, q) = (config.theta, config.wpair.t, &config.quadrature);
    let pair = config.pair.pair();
    let base = heat_pairing(t, &pair).context(|| "heat pairing".into())?;
    let w = w_pairing(theta, t, &pair, q).context(|| "W pairing".into())?;
    let q2 = q2_pairing(theta, t, &pair, q).context(|| "q2 pairing".into())?;
    let mut rows = vec![
        Row::new("heat_pairing", base).t(t),
        Row::new("w_pairing", w.value).t(t).error(w.est_error),
        Row::new("q2", q2.value).t(t).error(q2.error),
    ];
    let mut ratios = Vec::new();
    for &tb in &config.wpair.tau_bar {
        let r = sensitivity_limit_ratio(theta, tb, &pair, q).context(|| format!("limit ratio at {tb}"))?;
        rows.push(Row::new("limit_ratio", r).tau(tb));
        ratios.push((tb, r));
    }
    let mut checks = vec![Check::new(
        "ratio-decreasing",
        ratios.windows(2).all(|w| w[1].1 < w[0].1),
        "R strictly decreasing on the tau_bar grid",
    )];
    if let Some((_, r0)) = ratios.iter().find(|(tb, _)| *tb == 0.0) {
        checks.push(Check::new("ratio-at-zero", *r0 == 1.0, format!("R(0) = {r0}")));
    }
    if let Some((tb, r)) = ratios.last() {
        checks.push(Check::new("ratio-small-at-end", *r < 0.05, format!("R({tb}) = {r}")));
    }
    Ok((rows, checks))
}

fn second_moment_ladder(config: &ExperimentConfig) -> Result<Output> {
    let pair = config.pair.pair();
    let q2 = q2_pairing(config.theta, 1.0, &pair, &config.quadrature).context(|| "q2 pairing".into())?;
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    for (i, &eps) in config.eps_ladder.iter().enumerate() {
        let sim = simulator(config, eps)?;
        let (bank, _) = banks(config.seed, i, sim.steps());
        let f = sim.sample_observable(&bank, 0, config.replicas).context(|| format!("simulation at eps = {eps}"))?;
        let raw: Vec<f64> = f.iter().map(|v| v + sim.mean_term()).collect();
        let s = summarize(&raw).context(|| "moments".into())?;
        let gap = (s.second_moment - q2.value).abs();
        rows.push(
            Row::new("second_moment", s.second_moment)
                .eps(eps)
                .replicas(config.replicas)
                .error(s.se_second_moment)
                .reference(q2.value, Some(q2.error)),
        );
        rows.push(Row::new("gap", gap).eps(eps).replicas(config.replicas).error(s.se_second_moment));
        gaps.push(gap);
    }
    let checks = vec![Check::new(
        "gap-decreasing",
        gaps.windows(2).all(|w| w[1] < w[0]),
        format!("|E[<u,g'>^2] - q2| along the ladder: {gaps:?}"),
    )];
    Ok((rows, checks))
}

fn sensitivity_curve(config: &ExperimentConfig) -> Result<Output> {
    let taus = &config.tau_grid;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (i, &eps) in config.eps_ladder.iter().enumerate() {
        let sim = simulator(config, eps)?;
        let coeffs = chaos_spectrum(config, eps, config.chaos.k_max)?;
        let (a, b) = banks(config.seed, i, sim.steps());
        let runs = sim
            .sample_coupled(taus, &a, &b, 0, config.replicas)
            .context(|| format!("coupled simulation at eps = {eps}"))?;
        let base: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let mut curve = Vec::new();
        let mut within = true;
        for (j, &tau) in taus.iter().enumerate() {
            let other: Vec<f64> = runs.iter().map(|r| r.1[j]).collect();
            let (rho, se) = estimate_correlation(&base, &other).context(|| format!("correlation at tau = {tau}"))?;
            let expect = correlation_from_chaos(&coeffs, tau).context(|| "chaos correlation".into())?;
            if tau > 0.0 {
                within &= (rho - expect).abs() < 3.0 * se;
            } else {
                checks.push(Check::new("tau-zero-exact", rho == 1.0, format!("eps = {eps}: rho(0) = {rho}")));
            }
            rows.push(
                Row::new("correlation", rho).eps(eps).tau(tau).replicas(config.replicas).error(se).reference(expect, None),
            );
            curve.push(rho);
        }
        checks.push(Check::new(
            "monotone",
            curve.windows(2).all(|w| w[1] <= w[0]),
            format!("eps = {eps}: {curve:?}"),
        ));
        checks.push(Check::new("matches-chaos", within, format!("eps = {eps}: within 3 SE of the chaos prediction")));
    }
    Ok((rows, checks))
}

fn chaos_vs_mc(config: &ExperimentConfig) -> Result<Output> {
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let (mut medians, mut first) = (Vec::new(), Vec::new());
    for (i, &eps) in config.eps_ladder.iter().enumerate() {
        let coeffs = chaos_spectrum(config, eps, config.chaos.k_max)?;
        for (k, (c, e)) in coeffs.ck2.iter().zip(&coeffs.est_errors).enumerate() {
            rows.push(Row::new("ck2", *c).eps(eps).k(k + 1).error(*e));
        }
        let v = variance_from_chaos(&coeffs);
        let tail = v.tail.unwrap_or(0.0);
        rows.push(Row::new("chaos_partial_sum", v.partial_sum).eps(eps).k(coeffs.k_max).error(v.error));
        rows.push(Row::new("chaos_tail", tail).eps(eps).k(coeffs.k_max));
        let k_star = median_index(&coeffs).context(|| "median index".into())?;
        rows.push(Row::new("median_index", k_star as f64).eps(eps).k(coeffs.k_max));

        let sim = simulator(config, eps)?;
        let (bank, _) = banks(config.seed, i, sim.steps());
        let f = sim.sample_observable(&bank, 0, config.replicas).context(|| format!("simulation at eps = {eps}"))?;
        let s = summarize(&f).context(|| "moments".into())?;
        let target = v.partial_sum + tail;
        rows.push(
            Row::new("mc_variance", s.variance)
                .eps(eps)
                .replicas(config.replicas)
                .error(s.se_variance)
                .reference(target, Some(v.error)),
        );
        let combined = s.se_variance.hypot(v.error);
        checks.push(Check::new(
            "variance-identity",
            (s.variance - target).abs() < 3.0 * combined,
            format!("eps = {eps}: MC {} ± {} vs chaos {target}", s.variance, s.se_variance),
        ));
        medians.push(k_star);
        first.push(coeffs.ck2[0]);
    }
    checks.push(Check::new(
        "median-nondecreasing",
        medians.windows(2).all(|w| w[1] >= w[0]),
        format!("k* along the ladder: {medians:?}"),
    ));
    checks.push(Check::new(
        "first-chaos-decreasing",
        first.windows(2).all(|w| w[1] < w[0]),
        format!("c_1^2 along the ladder: {first:?}"),
    ));
    Ok((rows, checks))
}

fn slab_scaling(config: &ExperimentConfig) -> Result<Output> {
    let mut widths = config.chaos.slab_widths.clone();
    widths.sort_by(|a, b| b.total_cmp(a));
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &eps in &config.eps_ladder {
        let m = mollifier(config, eps)?;
        let beta = beta_eps(config.theta, eps, m.c_phi).context(|| format!("coupling at eps = {eps}"))?.beta;
        let mut ratios = Vec::new();
        for &w in &widths {
            let slab = SlabSpec::new(0.5 * (1.0 - w), 0.5 * (1.0 + w)).context(|| format!("slab of width {w}"))?;
            let v = slab_variance(config.chaos.k_max, slab, &m, beta, &config.pair.pair(), &config.quadrature)
                .context(|| format!("slab variance at eps = {eps}, width {w}"))?;
            rows.push(Row::new("slab_ratio", v.value / w).eps(eps).t(w).k(config.chaos.k_max).error(v.error / w));
            ratios.push(v.value / w);
        }
        checks.push(Check::new(
            "ratio-shrinks-with-width",
            ratios.windows(2).all(|r| r[1] < r[0]),
            format!("eps = {eps}: {ratios:?}"),
        ));
    }
    Ok((rows, checks))
}

fn toy_suite(config: &ExperimentConfig) -> Result<Output> {
    let t = &config.toy;
    let noise = DiscreteNoise::new(t.n, t.alphabet).context(|| "toy noise".into())?;
    let x = ToyObservable::random_integer(&noise, config.seed).context(|| "toy observable".into())?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();

    let ladder: Vec<CellPartition> = t.block_sizes.iter().map(|s| CellPartition::intervals(t.n, *s)).collect();
    let norms = iterate_pn_refinement(&x, &ladder, &noise).context(|| "refinement ladder".into())?;
    let var = x.variance(&noise).context(|| "variance".into())?;
    let mut identity = true;
    for (part, (size, norm)) in ladder.iter().zip(t.block_sizes.iter().zip(&norms)) {
        let p = project_pn(&x, part, &noise).context(|| "projection".into())?;
        let direct = p.norm_sq(&noise).context(|| "norm".into())?;
        identity &= (direct - norm).abs() <= 1e-9 * var;
        let again = project_pn(&p, part, &noise).context(|| "projection".into())?;
        let scale = p.values.iter().fold(1.0, |m: f64, v| m.max(v.abs()));
        identity &= again.values.iter().zip(&p.values).all(|(a, b)| (a - b).abs() <= 1e-12 * scale);
        rows.push(Row::new("ladder_norm", *norm).k(*size).reference(direct, None));
    }
    checks.push(Check::new("norm-identity", identity, "‖P_n X‖² = Σ Var(E[X|block]) and P_n idempotent"));
    checks.push(Check::new(
        "ladder-monotone",
        norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)) && norms.iter().all(|n| *n <= var * (1.0 + 1e-12)),
        format!("{norms:?}, Var X = {var}"),
    ));

    if t.alphabet == Alphabet::Sign {
        let spec = walsh_spectrum(&x, &noise).context(|| "Walsh spectrum".into())?;
        for (k, w) in spec.degree_mass.iter().enumerate() {
            rows.push(Row::new("walsh_degree_mass", *w).k(k));
        }
        let singles = CellPartition::singletons(t.n);
        let p = project_pn(&x, &singles, &noise).context(|| "singleton projection".into())?;
        let w1 = spec.degree_part(1, &noise).context(|| "degree-one part".into())?;
        checks.push(Check::new("singleton-is-degree-one", p == w1, "table equality"));
        let s = block_variance_sum(&x, &singles, &noise).context(|| "singleton norm".into())?;
        checks.push(Check::new(
            "singleton-norm-is-w1",
            (s - spec.degree_mass[1]).abs() <= 1e-9 * var,
            format!("{s} vs W_1 = {}", spec.degree_mass[1]),
        ));
        let mut within = true;
        let mut curve = Vec::new();
        for (i, &rho) in t.rho_grid.iter().enumerate() {
            let exact = resample_correlation_discrete(&x, rho, &noise).context(|| "exact correlation".into())?;
            let (mc, se) = resample_correlation_mc(&x, rho, &noise, t.mc_samples, config.seed.wrapping_add(i as u64 + 1))
                .context(|| "sampled correlation".into())?;
            within &= (mc - exact).abs() < 3.0 * se;
            rows.push(Row::new("correlation", exact).tau(-rho.ln()).replicas(t.mc_samples).reference(mc, Some(se)));
            curve.push((rho, exact));
        }
        curve.sort_by(|a, b| a.0.total_cmp(&b.0));
        checks.push(Check::new("correlation-mc", within, "exact vs sampled within 3 SE"));
        checks.push(Check::new(
            "correlation-monotone",
            curve.windows(2).all(|w| w[1].1 >= w[0].1),
            "nondecreasing in rho",
        ));
    }
    Ok((rows, checks))
}
