//! End-to-end runs of the `rsd` binary and the library entry points.

use std::path::{Path, PathBuf};
use std::process::Command;

use rsd_cli::{bench_csv, run_bench, BenchRow, Config};
use rsd_core::analysis::rrs_exact_outcome;
use rsd_core::LanguageModel;
use rsd_core::NGramModel;
use serde_json::{json, Value};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn model(name: &str) -> String {
    fixtures().join("models").join(name).display().to_string()
}

fn rsd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rsd"))
        .args(args)
        .env("RSD_THREADS", "2")
        .output()
        .expect("spawn rsd")
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn bench(dir: &Path, value: Value) -> Vec<BenchRow> {
    let cfg = Config::load(&write_config(dir, &value)).unwrap();
    run_bench(&cfg).unwrap()
}

#[test]
fn corrupted_model_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken_target.json");
    std::fs::write(&bad, r#"{"vocab_size": 3, "order": 0, "table": {"": ["0.5", "oops"]}}"#).unwrap();
    let cfg = write_config(
        dir.path(),
        &json!({
            "models": [{"name": "m", "draft": model("skew_draft.json"), "target": bad, "draft_size": 1, "target_size": 2}],
            "decoders": [{"kind": "SD", "params": {"L": 2}}],
            "trials": 10, "seed": 0, "output": {"length": 4}
        }),
    );
    let out = rsd(&["verify", "--config", cfg.to_str().unwrap()]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(2), "{stderr}");
    assert!(stderr.contains("bad config"), "{stderr}");
    assert!(stderr.contains("broken_target.json"), "{stderr}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &json!({
            "models": [{"name": "m", "draft": model("skew_draft.json"), "target": model("skew_target.json"), "draft_size": 1, "target_size": 2}],
            "trials": 10, "seed": 0, "output": {"length": 4}, "trails": 5
        }),
    );
    let out = rsd(&["bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trails"));
}

#[test]
fn impossible_tv_threshold_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &json!({
            "models": [{"name": "toy", "draft": model("v8_draft.json"), "target": model("v8_target.json"), "draft_size": 1, "target_size": 2}],
            "decoders": [{"kind": "RSD-C", "params": {"b": [2, 2]}}],
            "trials": 100, "seed": 5,
            "transforms": {"temperature": 0.3},
            "output": {"length": 3, "prompt": [0, 1]},
            "thresholds": {"first_token_tv": 1e-6, "sequence_tv": 1e-6}
        }),
    );
    let out = rsd(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["all_pass"], false);
    let checks = report["checks"].as_array().unwrap();
    let recovery: Vec<&Value> = checks
        .iter()
        .filter(|c| c["name"].as_str().unwrap().contains("_tv/"))
        .collect();
    assert_eq!(recovery.len(), 2);
    for c in recovery {
        assert_eq!(c["pass"], false);
        assert!(c["statistic"].as_f64().unwrap() > 1e-6);
    }
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL first_token_tv/toy/RSD-C/2-2"));
}

#[test]
fn shipped_verify_config_passes() {
    let cfg = fixtures().join("verify.json");
    let out = rsd(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ar_and_all_accept_block_efficiencies() {
    let dir = tempfile::tempdir().unwrap();
    let target = model("v8_target.json");
    let rows = bench(
        dir.path(),
        json!({
            "models": [{"name": "same", "draft": target, "target": target, "draft_size": 1, "target_size": 10}],
            "decoders": [{"kind": "AR"}, {"kind": "SD", "params": {"L": 3}}],
            "trials": 50, "seed": 1, "output": {"length": 40, "prompt": [0, 1]}
        }),
    );
    assert_eq!(rows[0].eff, 1.0);
    assert_eq!(rows[0].accept_rate, 0.0);
    assert_eq!(rows[1].eff, 4.0);
    assert_eq!(rows[1].accept_rate, 1.0);
    assert_eq!(rows[1].target_calls, 3.0);
}

/// Per-round efficiency of a depth-2 tree on unigram models: `1 + a + a^2`.
fn two_level_eta(a: f64) -> f64 {
    1.0 + a + a * a
}

#[test]
fn rsd_c_beats_sd_on_divergent_pair() {
    let draft = NGramModel::load(model("skew_draft.json")).unwrap();
    let target = NGramModel::load(model("skew_target.json")).unwrap();
    let p = draft.next_distribution(&[]).unwrap();
    let q = target.next_distribution(&[]).unwrap();
    let (_, a_sd) = rrs_exact_outcome(&p, &q, 1).unwrap();
    let (_, a_rsd) = rrs_exact_outcome(&p, &q, 2).unwrap();
    assert!((a_sd - 0.5).abs() < 1e-12);
    assert!((a_rsd - 0.625).abs() < 1e-12);
    let (eta_sd, eta_rsd) = (two_level_eta(a_sd), two_level_eta(a_rsd));
    assert!(eta_rsd - eta_sd > 0.25);

    let dir = tempfile::tempdir().unwrap();
    let rows = bench(
        dir.path(),
        json!({
            "models": [{"name": "skew", "draft": model("skew_draft.json"), "target": model("skew_target.json"), "draft_size": 1, "target_size": 10}],
            "decoders": [{"kind": "SD", "params": {"L": 2}}, {"kind": "RSD-C", "params": {"b": [2, 2]}}],
            "trials": 10000, "seed": 2024, "output": {"length": 8}
        }),
    );
    let (sd, rsdc) = (&rows[0], &rows[1]);
    let sigma = (sd.eff_std_error.powi(2) + rsdc.eff_std_error.powi(2)).sqrt();
    assert!(rsdc.eff - sd.eff > 3.0 * sigma, "{} vs {} (sigma {sigma})", rsdc.eff, sd.eff);
    assert!((sd.eff - eta_sd).abs() < 4.0 * sd.eff_std_error, "{} vs {eta_sd}", sd.eff);
    assert!((rsdc.eff - eta_rsd).abs() < 4.0 * rsdc.eff_std_error, "{} vs {eta_rsd}", rsdc.eff);
}

#[test]
fn bench_csv_is_reproducible() {
    let cfg = fixtures().join("bench.json");
    let a = rsd(&["bench", "--config", cfg.to_str().unwrap()]);
    let b = Command::new(env!("CARGO_BIN_EXE_rsd"))
        .args(["bench", "--config", cfg.to_str().unwrap()])
        .env("RSD_THREADS", "1")
        .output()
        .unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,task,mode,decoder,spec,eff,mbsu,accept_rate,target_calls,trials,seed"
    );
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 11, "{line}");
        for v in &cols[5..] {
            assert!(v.parse::<f64>().unwrap().is_finite(), "{line}");
        }
        let acc: f64 = cols[7].parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

#[test]
fn seed_override_and_json_format() {
    let cfg = fixtures().join("bench.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rows.json");
    let res = rsd(&["bench", "--config", cfg.to_str().unwrap(), "--seed", "99", "--format", "json", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let rows: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r["seed"] == 99));

    let config = Config::load(&cfg).unwrap();
    let csv = bench_csv(&run_bench(&config).unwrap());
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",11")));
}

#[test]
fn figure1_diagonal_and_rrs_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fig.json");
    std::fs::write(&cfg, r#"{"p_grid": [0.2, 0.7], "q_grid": [0.2, 0.7], "gammas": [2], "trials": 2000, "seed": 1}"#).unwrap();
    let out = rsd(&["figure1", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "p,q,method,gamma,acceptance_analytic,acceptance_empirical");
    let mut n = 0;
    for line in lines {
        let c: Vec<&str> = line.split(',').collect();
        if c[2] == "rrs" || (c[0] == c[1] && c[2] == "multi-round") {
            assert_eq!(c[4], "1", "{line}");
            assert_eq!(c[5], "1", "{line}");
        }
        n += 1;
    }
    assert_eq!(n, 4 * 3);
}

#[test]
fn figure1_rejects_out_of_range_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fig.json");
    std::fs::write(&cfg, r#"{"p_grid": [1.5]}"#).unwrap();
    let out = rsd(&["figure1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
