use std::process::Command;

use shflab::config::{ExperimentConfig, ExperimentKind};
use shflab::{compute_experiment, run_experiment, validate_config, CliError};
use shflab_oracles::j_simpson;

fn small(kind: ExperimentKind) -> ExperimentConfig {
    let mut c = ExperimentConfig { experiment: kind, ..ExperimentConfig::default() };
    c.eps_ladder = vec![0.4];
    c.tau_grid = vec![0.0, 0.5, 2.0];
    c.replicas = 64;
    c.chaos.k_max = 6;
    c.quadrature.simplex_samples = 20_000;
    c
}

#[test]
fn empty_config_is_all_defaults() {
    assert_eq!(validate_config("").unwrap(), ExperimentConfig::default());
}

#[test]
fn increasing_ladder_is_rejected() {
    match validate_config("eps_ladder = [0.1, 0.2]") {
        Err(CliError::Schema(fields)) => assert!(fields.iter().any(|f| f.starts_with("eps_ladder")), "{fields:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn every_offending_field_is_listed() {
    let raw = "replicas = 1\ntau_grid = [0.5, 0.1]\n[toy]\nblock_sizes = [4, 3]\n";
    let Err(CliError::Schema(fields)) = validate_config(raw) else { panic!("expected schema error") };
    for f in ["replicas", "tau_grid", "toy.block_sizes"] {
        assert!(fields.iter().any(|x| x.starts_with(f)), "{f} missing from {fields:?}");
    }
}

#[test]
fn unknown_keys_are_errors() {
    assert!(matches!(validate_config("replica = 10"), Err(CliError::Parse(_))));
    assert!(matches!(validate_config("[lattice]\nbox = 3.0"), Err(CliError::Parse(_))));
    assert!(matches!(validate_config("experiment = \"nope\""), Err(CliError::Parse(_))));
}

#[test]
fn config_round_trips() {
    let mut c = small(ExperimentKind::ChaosVsMc);
    c.theta = -0.75;
    c.seed = 1 << 40;
    c.pair.g.center = [0.25, -1.0];
    c.toy.rho_grid = vec![0.2, 0.4];
    c.lattice.max_dt_over_eps2 = 0.25;
    let text = c.to_toml().unwrap();
    let back = validate_config(&text).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.digest(), c.digest());
    assert_ne!(ExperimentConfig::default().digest(), c.digest());
}

#[test]
fn jfun_table_contains_j_at_one() {
    let r = compute_experiment(&ExperimentConfig::default()).unwrap();
    let row = r.rows.iter().find(|r| r.quantity == "j" && r.t == Some(1.0)).unwrap();
    let oracle = j_simpson(0.0, 1.0, 400_000);
    assert!((row.value / oracle - 1.0).abs() < 1e-9);
    assert!(r.all_passed(), "{:?}", r.checks);
}

#[test]
fn sensitivity_curve_is_exact_at_zero_and_reproducible() {
    let c = small(ExperimentKind::SensitivityCurve);
    let a = compute_experiment(&c).unwrap();
    let zero = a.rows.iter().find(|r| r.quantity == "correlation" && r.tau == Some(0.0)).unwrap();
    assert_eq!(zero.value, 1.0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| compute_experiment(&c)).unwrap();
    assert_eq!(a.csv_bytes().unwrap(), b.csv_bytes().unwrap());
    assert_eq!(a.config_digest, b.config_digest);
}

#[test]
fn toy_suite_passes_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(ExperimentKind::ToySuite);
    c.output = dir.path().join("toy");
    let r = run_experiment(&c).unwrap();
    assert!(r.all_passed(), "{:?}", r.checks);
    let csv = std::fs::read(c.output.join("toy-suite.csv")).unwrap();
    assert_eq!(csv, r.csv_bytes().unwrap());
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(c.output.join("toy-suite.json")).unwrap()).unwrap();
    assert_eq!(sidecar["record"]["config_digest"], c.digest());
    assert_eq!(sidecar["config"]["toy"]["n"], 12);
}

#[test]
fn three_point_toy_suite_skips_walsh_checks() {
    let mut c = small(ExperimentKind::ToySuite);
    c.toy.alphabet = shflab_core::toy::Alphabet::Gaussian3pt;
    c.toy.n = 8;
    c.toy.block_sizes = vec![8, 4, 2, 1];
    let r = compute_experiment(&c).unwrap();
    assert!(r.all_passed(), "{:?}", r.checks);
    assert!(r.checks.iter().all(|c| !c.name.starts_with("singleton")));
}

fn shflab(args: &[&str], envs: &[(&str, &str)]) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_shflab"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, "experiment = \"toy-suite\"\n[toy]\nn = 8\nblock_sizes = [8, 4, 1]\n").unwrap();
    let out = dir.path().join("out");
    let o = shflab(&["run", "--config", good.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS singleton-is-degree-one"));
    assert!(out.join("toy-suite.csv").exists());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "eps_ladder = [0.1, 0.2]\n").unwrap();
    let o = shflab(&["run", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eps_ladder"));

    // R(2) is far above the 0.05 threshold, so the check fails
    let failing = dir.path().join("failing.toml");
    std::fs::write(&failing, "experiment = \"wpair\"\n[wpair]\ntau_bar = [0.0, 1.0, 2.0]\n").unwrap();
    let o = shflab(&["run", "--config", failing.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));

    let o = shflab(&["kernels", "jfun"], &[("SHFLAB_THREADS", "0")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn kernels_subcommand_emits_json_record() {
    let o = shflab(&["kernels", "jfun", "--theta", "0", "--t", "1"], &[("SHFLAB_THREADS", "2")]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["value"].as_f64().unwrap() - 2.807_770_242_028_519).abs() < 1e-9);
    for key in ["inputs", "est_error", "method"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

#[test]
fn simulate_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results.csv");
    let args = ["simulate", "--eps", "0.4", "--tau-list", "0,1", "--replicas", "4", "--seed", "9", "--out"];
    let run = |threads: &str| {
        let o = shflab(&[&args[..], &[out.to_str().unwrap()]].concat(), &[("SHFLAB_THREADS", threads)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(&out).unwrap()
    };
    let (a, b) = (run("1"), run("2"));
    assert_eq!(a, b);
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("replica,tau,F_xi,F_xitau"));
    assert_eq!(lines.count(), 8);
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 9);
    assert_eq!(sidecar["summary"][0]["correlation"], 1.0);
}

#[test]
fn toy_and_chaos_subcommands() {
    let o = shflab(&["toy", "project", "--n", "4", "--fn", "product:0,1", "--blocks", "0;1;2;3"], &[]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["norm_sq"], 0.0);
    let o = shflab(&["toy", "correlation", "--n", "6", "--fn", "parity", "--rho", "0.5"], &[]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["exact"], 0.5f64.powi(6));
    let o = shflab(&["chaos", "slab", "--s", "0.25", "--t", "0.5", "--K", "2", "--samples", "2000"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = shflab(&["toy", "project", "--fn", "wobble"], &[]);
    assert_eq!(o.status.code(), Some(2));
}
