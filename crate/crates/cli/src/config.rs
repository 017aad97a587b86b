//! Strict TOML experiment configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shflab_core::kernels::{GaussianBump, TestFunctionPair};
use shflab_core::mollifier::MollifierShape;
use shflab_core::quad::QuadratureSpec;
use shflab_core::sim::Resolution;
use shflab_core::toy::Alphabet;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    JfunTable,
    Wpair,
    SecondMomentLadder,
    SensitivityCurve,
    ChaosVsMc,
    SlabScaling,
    ToySuite,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::JfunTable => "jfun-table",
            ExperimentKind::Wpair => "wpair",
            ExperimentKind::SecondMomentLadder => "second-moment-ladder",
            ExperimentKind::SensitivityCurve => "sensitivity-curve",
            ExperimentKind::ChaosVsMc => "chaos-vs-mc",
            ExperimentKind::SlabScaling => "slab-scaling",
            ExperimentKind::ToySuite => "toy-suite",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub box_side: f64,
    pub max_h_over_eps: f64,
    pub max_dt_over_eps2: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        let r = Resolution::default();
        Self { box_side: 12.8, max_h_over_eps: r.max_h_over_eps, max_dt_over_eps2: r.max_dt_over_eps2 }
    }
}

impl LatticeConfig {
    pub fn resolution(&self) -> Resolution {
        Resolution { max_h_over_eps: self.max_h_over_eps, max_dt_over_eps2: self.max_dt_over_eps2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairConfig {
    pub g: GaussianBump,
    pub g_prime: GaussianBump,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self { g: GaussianBump::unit(), g_prime: GaussianBump::unit() }
    }
}

impl PairConfig {
    pub fn pair(&self) -> TestFunctionPair {
        TestFunctionPair::gaussian(self.g, self.g_prime)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JfunConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    /// Looser tolerance used to check the log bound for stability.
    pub coarse_rel_tol: f64,
}

impl Default for JfunConfig {
    fn default() -> Self {
        Self { t_min: 1e-6, t_max: 0.5, points: 60, coarse_rel_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WpairConfig {
    pub t: f64,
    pub tau_bar: Vec<f64>,
}

impl Default for WpairConfig {
    fn default() -> Self {
        Self { t: 1.0, tau_bar: vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChaosConfig {
    pub k_max: usize,
    pub slab_widths: Vec<f64>,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self { k_max: 6, slab_widths: (2..=6).map(|p| 0.5f64.powi(p)).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub n: usize,
    pub alphabet: Alphabet,
    /// Interval block sizes of the refinement ladder, coarsest first.
    pub block_sizes: Vec<usize>,
    pub rho_grid: Vec<f64>,
    pub mc_samples: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n: 12,
            alphabet: Alphabet::Sign,
            block_sizes: vec![12, 6, 3, 1],
            rho_grid: vec![0.1, 0.5, 0.9],
            mc_samples: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub theta: f64,
    pub eps_ladder: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub mollifier: MollifierShape,
    pub pair: PairConfig,
    pub lattice: LatticeConfig,
    pub quadrature: QuadratureSpec,
    pub jfun: JfunConfig,
    pub wpair: WpairConfig,
    pub chaos: ChaosConfig,
    pub toy: ToyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::JfunTable,
            theta: 0.0,
            eps_ladder: vec![0.2, 0.1, 0.05],
            tau_grid: vec![0.0, 0.1, 0.3, 1.0],
            replicas: 200,
            seed: 1,
            output: PathBuf::from("shflab-out"),
            mollifier: MollifierShape::Gaussian,
            pair: PairConfig::default(),
            lattice: LatticeConfig::default(),
            quadrature: QuadratureSpec::default(),
            jfun: JfunConfig::default(),
            wpair: WpairConfig::default(),
            chaos: ChaosConfig::default(),
            toy: ToyConfig::default(),
        }
    }
}

fn strictly_increasing(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[1] > w[0])
}

impl ExperimentConfig {
    /// Every violated constraint, as `field: reason`.
    pub fn problems(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, field: &str, why: &str| {
            if !ok {
                bad.push(format!("{field}: {why}"));
            }
        };
        check(self.theta.is_finite(), "theta", "must be finite");
        check(!self.eps_ladder.is_empty(), "eps_ladder", "must not be empty");
        check(self.eps_ladder.iter().all(|e| *e > 0.0 && *e < 1.0), "eps_ladder", "entries must lie in (0, 1)");
        check(self.eps_ladder.windows(2).all(|w| w[1] < w[0]), "eps_ladder", "must be strictly decreasing");
        check(self.tau_grid.iter().all(|t| *t >= 0.0 && t.is_finite()), "tau_grid", "entries must be >= 0");
        check(strictly_increasing(&self.tau_grid), "tau_grid", "must be strictly increasing");
        check(self.replicas >= 2, "replicas", "must be >= 2");
        check(self.seed <= i64::MAX as u64, "seed", "must fit in 63 bits (TOML integer range)");
        check(self.output.as_os_str().len() > 0, "output", "must not be empty");
        check(self.pair.pair().validate().is_ok(), "pair", "bumps need positive width and finite parameters");
        check(self.lattice.box_side > 0.0, "lattice.box_side", "must be > 0");
        check(self.lattice.max_h_over_eps > 0.0, "lattice.max_h_over_eps", "must be > 0");
        check(self.lattice.max_dt_over_eps2 > 0.0, "lattice.max_dt_over_eps2", "must be > 0");
        if let Err(e) = self.quadrature.validate() {
            check(false, "quadrature", &e.to_string());
        }
        let j = &self.jfun;
        check(j.t_min > 0.0 && j.t_max > j.t_min, "jfun", "needs 0 < t_min < t_max");
        check(j.points >= 2, "jfun.points", "must be >= 2");
        check(j.coarse_rel_tol > 0.0, "jfun.coarse_rel_tol", "must be > 0");
        check(self.wpair.t > 0.0, "wpair.t", "must be > 0");
        check(
            self.wpair.tau_bar.iter().all(|t| *t >= 0.0) && strictly_increasing(&self.wpair.tau_bar),
            "wpair.tau_bar",
            "must be nonnegative and strictly increasing",
        );
        check((1..=12).contains(&self.chaos.k_max), "chaos.k_max", "must lie in 1..=12");
        check(
            self.chaos.slab_widths.iter().all(|w| *w > 0.0 && *w <= 1.0),
            "chaos.slab_widths",
            "entries must lie in (0, 1]",
        );
        let t = &self.toy;
        check(t.n >= 1, "toy.n", "must be >= 1");
        check(shflab_core::toy::DiscreteNoise::new(t.n.max(1), t.alphabet).is_ok(), "toy.n", "exceeds the enumeration bound");
        check(t.block_sizes.iter().all(|b| *b >= 1), "toy.block_sizes", "entries must be >= 1");
        check(
            t.block_sizes.windows(2).all(|w| w[0] % w[1] == 0 && w[1] < w[0]),
            "toy.block_sizes",
            "each size must strictly divide the previous one (nested ladder)",
        );
        check(t.rho_grid.iter().all(|r| (0.0..=1.0).contains(r)), "toy.rho_grid", "entries must lie in [0, 1]");
        check(t.mc_samples >= 2, "toy.mc_samples", "must be >= 2");
        bad
    }

    pub fn validate(&self) -> Result<()> {
        let bad = self.problems();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Schema(bad))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses, defaults and range-checks a TOML config. Unknown keys are errors.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = toml::from_str(raw)?;
    config.validate()?;
    Ok(config)
}
