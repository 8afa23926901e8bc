use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::Rng;
use sbbts_core::stochastic::{GaussianNoise, RandomSource};

const SMALL: &str = "schema_version = 1
seed = 3

[sbbts]
outer_iterations = 1
n_epoch = 2
batch_size = 8
d_model = 8
n_head = 2
n_pi = 4
";

fn sbbts(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbbts"))
        .current_dir(dir)
        .env_remove("SBBTS_OUT_DIR")
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Vec<PathBuf> {
    let out = sbbts(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap().lines().map(PathBuf::from).collect()
}

fn write_config(dir: &Path) -> String {
    std::fs::write(dir.join("run.toml"), SMALL).unwrap();
    "run.toml".into()
}

#[test]
fn heston_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d);
    let c = ["--config", cfg.as_str(), "--out", "o"];
    let sim = ok(d, &[&c[..], &["simulate-heston", "--paths", "24", "--length", "30"]].concat());
    assert!(sim.iter().any(|p| p.ends_with("heston_truth.csv")));
    let truth = std::fs::read_to_string(d.join("o/heston_truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 25);
    assert!(truth.starts_with("path_id,kappa,theta,xi_vol,rho,r,v0\n"));

    ok(d, &[&c[..], &["train", "--data", "o/heston_paths.csv"]].concat());
    let losses = std::fs::read_to_string(d.join("o/losses.csv")).unwrap();
    assert_eq!(losses.lines().next(), Some("outer,epoch,loss"));
    assert_eq!(losses.lines().count(), 3);

    ok(d, &[&c[..], &["generate", "--checkpoint", "o/model.ckpt", "--paths", "24"]].concat());
    let gen = std::fs::read_to_string(d.join("o/generated.csv")).unwrap();
    assert!(gen.starts_with("date_index,X,v,path_id\n"));
    assert_eq!(gen.lines().count(), 24 * 30 + 1);

    ok(d, &[&c[..], &["heston-bench", "--real", "o/heston_paths.csv", "--synth", "o/generated.csv"]].concat());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("o/calibration_report.json")).unwrap()).unwrap();
    assert!(report["sources"].is_array());

    ok(d, &[&c[..], &["eval", "--real", "o/heston_paths.csv", "--synth", "o/generated.csv"]].concat());
    for f in ["eval_report.json", "eval_metrics.csv", "eval_acf.csv", "eval_correlations.csv"] {
        assert!(d.join("o").join(f).exists(), "{f} missing");
    }

    let resolved = std::fs::read_to_string(d.join("o/resolved_config.toml")).unwrap();
    let back: toml::Value = toml::from_str(&resolved).unwrap();
    assert_eq!(back["seed"].as_integer(), Some(3));
}

fn write_returns(path: &Path, n: usize, d: usize) {
    let mut rng = RandomSource::new(9).rng();
    let mut s = (0..d).map(|j| format!("asset{j}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for _ in 0..n {
        let common = rng.standard_normal();
        let row: Vec<String> = (0..d)
            .map(|j| {
                let heavy = if rng.random_bool(0.05) { 3.0 } else { 1.0 };
                (0.01 * (0.5 * common + heavy * rng.standard_normal()) * (1.0 + j as f64 / d as f64)).to_string()
            })
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn factor_augment_and_feature_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d);
    write_returns(&d.join("returns.csv"), 300, 8);
    let c = ["--config", cfg.as_str(), "--out", "o"];
    ok(d, &[&c[..], &["factor-fit", "--returns", "returns.csv", "--factors", "3", "--clusters", "2", "--window", "21"]].concat());
    for f in ["factor_model.json", "factors.csv", "residuals.csv"] {
        assert!(d.join("o").join(f).exists(), "{f} missing");
    }
    ok(d, &[&c[..], &["augment", "--returns", "returns.csv", "--baseline", "noise", "--window", "21"]].concat());
    let targets = std::fs::read_to_string(d.join("o/augmented_targets.csv")).unwrap();
    assert!(targets.starts_with("window_id,"));

    ok(d, &[&c[..], &["features", "--returns", "returns.csv", "--row", "260"]].concat());
    let feats = std::fs::read_to_string(d.join("o/features.csv")).unwrap();
    assert_eq!(feats.lines().count(), 1 + 8);

    let early = sbbts(d, &[&c[..], &["features", "--returns", "returns.csv", "--row", "10"]].concat());
    assert_eq!(early.status.code(), Some(3));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "seed = 1\n").unwrap();
    let r = sbbts(d, &["--config", "bad.toml", "simulate-heston"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("schema_version"));

    let cfg = write_config(d);
    let r = sbbts(d, &["--config", &cfg, "train", "--data", "missing.csv"]);
    assert_eq!(r.status.code(), Some(1));

    std::fs::write(d.join("wrong.csv"), "t,X,id\n0,1,0\n").unwrap();
    let r = sbbts(d, &["--config", &cfg, "train", "--data", "wrong.csv"]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn out_flag_beats_environment_beats_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), format!("out_dir = \"from_config\"\n{SMALL}")).unwrap();
    let args = ["--config", "run.toml", "simulate-heston", "--paths", "2", "--length", "12"];
    ok(d, &args);
    assert!(d.join("from_config/heston_paths.csv").exists());

    let out = Command::new(env!("CARGO_BIN_EXE_sbbts"))
        .current_dir(d)
        .env("SBBTS_OUT_DIR", "from_env")
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.join("from_env/heston_paths.csv").exists());

    let out = Command::new(env!("CARGO_BIN_EXE_sbbts"))
        .current_dir(d)
        .env("SBBTS_OUT_DIR", "from_env2")
        .env("RUST_LOG", "error")
        .args(["--out", "from_flag"])
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.join("from_flag/heston_paths.csv").exists());
    assert!(!d.join("from_env2").exists());
}
