//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use shflab_core::chaos::{
    chaos_coefficient_grid, chaos_coefficients, median_index, slab_variance, variance_from_chaos, ChaosMethod,
    GridChaosSpec, SlabSpec,
};
use shflab_core::coupling::beta_eps;
use shflab_core::kernels::{scaled_j, w_pairing, GaussianBump, TestFunctionPair};
use shflab_core::mollifier::{build_mollifier, MollifierShape};
use shflab_core::quad::QuadratureSpec;
use shflab_core::sim::{Lattice, Resolution, SimulationSetup, Simulator};
use shflab_core::stats::estimate_correlation;
use shflab_core::toy::{
    block_variance_sum, project_pn, resample_correlation_discrete, resample_correlation_mc, walsh_spectrum,
    Alphabet, CellPartition, DiscreteNoise, ToyObservable,
};

use crate::config::{validate_config, ExperimentConfig, LatticeConfig};
use crate::error::{io_err, CliError, Context, Result};
use crate::experiments::{banks, run_experiment};
use crate::record::CODE_VERSION;

/// Name of the environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "SHFLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "shflab", version, about = "Critical 2d stochastic heat equation: kernels, simulation, chaos and toy noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Delta-Bose kernel quantities.
    #[command(subcommand)]
    Kernels(KernelsCmd),
    /// Lattice Monte Carlo with resampled noise; writes one CSV row per (replica, tau).
    Simulate(SimulateArgs),
    /// Chaos coefficients of the smeared observable.
    #[command(args_conflicts_with_subcommands = true)]
    Chaos {
        #[command(flatten)]
        args: ChaosArgs,
        #[command(subcommand)]
        slab: Option<ChaosCmd>,
    },
    /// Exact projections on finite product noise.
    #[command(subcommand)]
    Toy(ToyCmd),
    /// Run a configured experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    /// Left test function as JSON, e.g. '{"center":[0,0],"width":1,"amplitude":1}'.
    #[arg(long, value_parser = parse_bump)]
    pub g: Option<GaussianBump>,
    /// Right test function, same format.
    #[arg(long, value_parser = parse_bump)]
    pub gprime: Option<GaussianBump>,
}

impl PairArgs {
    fn pair(&self) -> TestFunctionPair {
        TestFunctionPair::gaussian(self.g.unwrap_or(GaussianBump::unit()), self.gprime.unwrap_or(GaussianBump::unit()))
    }
}

fn parse_bump(s: &str) -> std::result::Result<GaussianBump, String> {
    serde_json::from_str(s).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum KernelsCmd {
    /// `j^θ(t)`.
    Jfun {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1e-8)]
        rel_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// `⟨g^{⊗2}, W^θ(t) g'^{⊗2}⟩`.
    Wpair {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, default_value_t = 1e-4)]
        rel_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta: f64,
    /// Comma-separated resampling times.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.3,1")]
    pub tau_list: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub replicas: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Grid points per side; defaults to the smallest power of two with h <= eps/2.
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long = "box-L", default_value_t = 12.8)]
    pub box_l: f64,
    /// Time step as a multiple of eps^2.
    #[arg(long, default_value_t = 0.125)]
    pub dt_over_eps2: f64,
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long, default_value = "results.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Analytic,
    Grid,
}

#[derive(Debug, Clone, Args)]
pub struct ChaosArgs {
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long = "K", default_value_t = 6)]
    pub k: usize,
    /// Monte Carlo points per order for k >= 2.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, value_enum, default_value = "analytic")]
    pub method: MethodArg,
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ChaosCmd {
    /// Variance carried by interaction times in `[s, t]`.
    Slab {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        t: f64,
        #[command(flatten)]
        args: ChaosArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// majority | parity | coord:I | product:I,J,.. | random:SEED
    #[arg(long = "fn", default_value = "majority")]
    pub function: String,
    #[arg(long, value_enum, default_value = "sign")]
    pub alphabet: AlphabetArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlphabetArg {
    Sign,
    Gaussian3pt,
}

#[derive(Debug, Subcommand)]
pub enum ToyCmd {
    /// `P_n X` for a partition of the coordinates.
    Project {
        #[command(flatten)]
        toy: ToyArgs,
        /// Blocks as `0,1;2,3`; defaults to singletons.
        #[arg(long)]
        blocks: Option<String>,
    },
    /// Correlation of `X` under `ρ`-resampling, exact and sampled.
    Correlation {
        #[command(flatten)]
        toy: ToyArgs,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Builds the global rayon pool from `SHFLAB_THREADS` when it is set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(io_err(p)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Runs one parsed command; the returned flag is false when a requested check failed.
pub fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Kernels(k) => kernels(k).map(|_| true),
        Command::Simulate(a) => simulate(&a).map(|_| true),
        Command::Chaos { args, slab: None } => chaos(&args, None).map(|_| true),
        Command::Chaos { slab: Some(ChaosCmd::Slab { s, t, args }), .. } => chaos(&args, Some((s, t))).map(|_| true),
        Command::Toy(t) => toy(t).map(|_| true),
        Command::Run { config, out } => {
            let raw = std::fs::read_to_string(&config).map_err(io_err(&config))?;
            let mut cfg = validate_config(&raw)?;
            if let Some(dir) = out {
                cfg.output = dir;
            }
            let record = run_experiment(&cfg)?;
            for c in &record.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(record.all_passed())
        }
    }
}

fn kernels(cmd: KernelsCmd) -> Result<()> {
    match cmd {
        KernelsCmd::Jfun { theta, t, rel_tol, out } => {
            let q = QuadratureSpec::default().with_rel_tol(rel_tol);
            let e = scaled_j(theta, t, &q).context(|| "j".into())?;
            let record = json!({
                "inputs": { "theta": theta, "t": t, "rel_tol": rel_tol },
                "value": e.value / t,
                "est_error": e.error / t,
                "method": "adaptive-gauss-kronrod",
            });
            emit(&record, out.as_deref())
        }
        KernelsCmd::Wpair { theta, t, pair, rel_tol, out } => {
            let q = QuadratureSpec::pairing().with_rel_tol(rel_tol);
            let p = pair.pair();
            let w = w_pairing(theta, t, &p, &q).context(|| "W pairing".into())?;
            let record = json!({
                "inputs": { "theta": theta, "t": t, "pair": p, "rel_tol": rel_tol },
                "value": w.value,
                "est_error": w.est_error,
                "method": w.method,
            });
            emit(&record, out.as_deref())
        }
    }
}

#[derive(Serialize)]
struct SimRow {
    replica: u64,
    tau: f64,
    #[serde(rename = "F_xi")]
    f_xi: f64,
    #[serde(rename = "F_xitau")]
    f_xitau: f64,
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    if a.replicas < 2 {
        return Err(CliError::Usage("--replicas must be >= 2".into()));
    }
    let quad = QuadratureSpec::default();
    let m = build_mollifier(MollifierShape::Gaussian, a.eps, &quad).context(|| "mollifier".into())?;
    let coupling = beta_eps(a.theta, a.eps, m.c_phi).context(|| "coupling".into())?;
    let policy = Resolution { max_dt_over_eps2: a.dt_over_eps2, ..Resolution::default() };
    let mut lattice = Lattice::resolving(a.eps, a.box_l, &policy).context(|| "lattice".into())?;
    if let Some(n) = a.grid_n {
        lattice = Lattice::new(a.box_l, n, lattice.dt, a.eps).context(|| "lattice".into())?;
    }
    let pair = a.pair.pair();
    let sim = Simulator::new(SimulationSetup { lattice, coupling, mollifier: m, pair: pair.clone() })
        .context(|| "simulator".into())?;
    let (xi, xi_prime) = banks(a.seed, 0, sim.steps());
    let runs = sim.sample_coupled(&a.tau_list, &xi, &xi_prime, 0, a.replicas).context(|| "simulation".into())?;

    let mut w = csv::Writer::from_path(&a.out)?;
    for (r, (f, fs)) in runs.iter().enumerate() {
        for (tau, ft) in a.tau_list.iter().zip(fs) {
            w.serialize(SimRow { replica: r as u64, tau: *tau, f_xi: *f, f_xitau: *ft })?;
        }
    }
    w.flush().map_err(io_err(&a.out))?;

    let base: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let summary: Vec<Value> = a
        .tau_list
        .iter()
        .enumerate()
        .map(|(j, tau)| {
            let other: Vec<f64> = runs.iter().map(|r| r.1[j]).collect();
            match estimate_correlation(&base, &other) {
                Ok((rho, se)) => json!({ "tau": tau, "correlation": rho, "se": se }),
                Err(e) => json!({ "tau": tau, "error": e.to_string() }),
            }
        })
        .collect();
    let sidecar = json!({
        "config": {
            "eps": a.eps, "theta": a.theta, "tau_list": a.tau_list, "replicas": a.replicas,
            "lattice": lattice, "coupling": coupling, "pair": pair,
            "resolution": LatticeConfig { box_side: a.box_l, max_h_over_eps: policy.max_h_over_eps, max_dt_over_eps2: policy.max_dt_over_eps2 },
        },
        "seed": a.seed,
        "code_version": CODE_VERSION,
        "summary": summary,
    });
    emit(&sidecar, Some(&a.out.with_extension("json")))
}

fn chaos(a: &ChaosArgs, slab: Option<(f64, f64)>) -> Result<()> {
    let q = QuadratureSpec::default().with_samples(a.samples);
    q.validate().context(|| "quadrature".into())?;
    let m = build_mollifier(MollifierShape::Gaussian, a.eps, &q).context(|| "mollifier".into())?;
    let beta = beta_eps(a.theta, a.eps, m.c_phi).context(|| "coupling".into())?.beta;
    let pair = a.pair.pair();
    let inputs = json!({
        "eps": a.eps, "theta": a.theta, "K": a.k, "samples": a.samples, "beta": beta, "pair": pair,
    });
    if let Some((s, t)) = slab {
        let spec = SlabSpec::new(s, t).context(|| "slab".into())?;
        let v = slab_variance(a.k, spec, &m, beta, &pair, &q).context(|| "slab variance".into())?;
        let record = json!({
            "config": inputs, "s": s, "t": t, "slab_variance": v.value, "error": v.error,
            "ratio": v.value / spec.width(),
        });
        return emit(&record, a.out.as_deref());
    }
    let method = match a.method {
        MethodArg::Analytic => ChaosMethod::GaussianAnalytic,
        MethodArg::Grid => ChaosMethod::Grid,
    };
    let coeffs = if let ChaosMethod::Grid = method {
        // grid coefficients are produced one order at a time
        let spec = GridChaosSpec::default();
        let est = (1..=a.k)
            .map(|k| chaos_coefficient_grid(k, &m, beta, &pair, &spec))
            .collect::<shflab_core::Result<Vec<_>>>()
            .context(|| "grid chaos".into())?;
        shflab_core::chaos::ChaosCoefficients {
            epsilon: a.eps,
            beta,
            k_max: a.k,
            ck2: est.iter().map(|e| e.value).collect(),
            est_errors: est.iter().map(|e| e.error).collect(),
            method,
        }
    } else {
        chaos_coefficients(a.k, &m, beta, &pair, &q, method, &GridChaosSpec::default()).context(|| "chaos".into())?
    };
    let v = variance_from_chaos(&coeffs);
    let record = json!({
        "config": inputs,
        "method": coeffs.method,
        "ck2": coeffs.ck2,
        "errors": coeffs.est_errors,
        "partial_sum": v.partial_sum,
        "partial_sum_error": v.error,
        "tail": v.tail,
        "median_index": median_index(&coeffs).ok(),
    });
    emit(&record, a.out.as_deref())
}

fn toy_noise(t: &ToyArgs) -> Result<DiscreteNoise> {
    let alphabet = match t.alphabet {
        AlphabetArg::Sign => Alphabet::Sign,
        AlphabetArg::Gaussian3pt => Alphabet::Gaussian3pt,
    };
    DiscreteNoise::new(t.n, alphabet).context(|| "toy noise".into())
}

/// Parses `majority | parity | coord:I | product:I,J,.. | random:SEED`.
pub fn parse_observable(spec: &str, noise: &DiscreteNoise) -> Result<ToyObservable> {
    let bad = || CliError::Usage(format!("unknown observable {spec:?}"));
    let indices = |s: &str| -> Result<Vec<usize>> {
        s.split(',').map(|i| i.trim().parse().map_err(|_| bad())).collect()
    };
    let (name, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let x = match name {
        "majority" => ToyObservable::majority(noise),
        "parity" => ToyObservable::product(noise, &(0..noise.n).collect::<Vec<_>>()),
        "coord" => ToyObservable::coordinate(noise, arg.trim().parse().map_err(|_| bad())?),
        "product" => ToyObservable::product(noise, &indices(arg)?),
        "random" => ToyObservable::random_integer(noise, arg.trim().parse().map_err(|_| bad())?),
        _ => return Err(bad()),
    };
    x.context(|| format!("observable {spec:?}"))
}

/// Parses `0,1;2,3` into blocks.
pub fn parse_blocks(spec: &str) -> Result<CellPartition> {
    let blocks = spec
        .split(';')
        .map(|b| {
            b.split(',')
                .map(|i| i.trim().parse().map_err(|_| CliError::Usage(format!("bad block list {spec:?}"))))
                .collect::<Result<Vec<usize>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellPartition::new(blocks))
}

fn toy(cmd: ToyCmd) -> Result<()> {
    match cmd {
        ToyCmd::Project { toy, blocks } => {
            let noise = toy_noise(&toy)?;
            let x = parse_observable(&toy.function, &noise)?;
            let part = match blocks {
                Some(b) => parse_blocks(&b)?,
                None => CellPartition::singletons(noise.n),
            };
            let p = project_pn(&x, &part, &noise).context(|| "projection".into())?;
            let mut record = json!({
                "noise": noise,
                "function": toy.function,
                "partition": part.blocks,
                "norm_sq": p.norm_sq(&noise).context(|| "norm".into())?,
                "block_variance_sum": block_variance_sum(&x, &part, &noise).context(|| "norm".into())?,
                "variance": x.variance(&noise).context(|| "variance".into())?,
            });
            if noise.alphabet == Alphabet::Sign {
                let sx = walsh_spectrum(&x, &noise).context(|| "spectrum".into())?;
                let sp = walsh_spectrum(&p, &noise).context(|| "spectrum".into())?;
                record["degree_mass"] = json!(sx.degree_mass);
                record["projection_coefficients"] = json!(sp.coefficient_map());
            }
            emit(&record, toy.out.as_deref())
        }
        ToyCmd::Correlation { toy, rho, samples, seed } => {
            let noise = toy_noise(&toy)?;
            let x = parse_observable(&toy.function, &noise)?;
            let exact = resample_correlation_discrete(&x, rho, &noise).context(|| "correlation".into())?;
            let (mc, se) = resample_correlation_mc(&x, rho, &noise, samples, seed).context(|| "correlation".into())?;
            let spec = walsh_spectrum(&x, &noise).context(|| "spectrum".into())?;
            let record = json!({
                "noise": noise, "function": toy.function, "rho": rho,
                "exact": exact, "sampled": mc, "sampled_se": se, "samples": samples, "seed": seed,
                "degree_mass": spec.degree_mass,
            });
            emit(&record, toy.out.as_deref())
        }
    }
}

/// Loads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let raw = std::fs::read_to_string(path).map_err(io_err(path))?;
    validate_config(&raw)
}
