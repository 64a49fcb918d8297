//! End-to-end runs of the compiled binary: pipeline wiring, exit codes,
//! manifests, and byte-level reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn smislab() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_smislab"));
    // Isolate from any ambient seed override.
    cmd.env_remove("SMISLAB_SEED");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth_small(dir: &Path, seed: u64) {
    run_ok(smislab().args([
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--n-assets",
        "80",
        "--n-art9",
        "8",
        "--n-art8",
        "24",
        "--n-art6",
        "8",
        "--n-quarters",
        "12",
        "--seed",
        &seed.to_string(),
    ]));
}

fn data_flags(data: &Path) -> Vec<String> {
    let p = |name: &str| data.join(name).to_str().unwrap().to_owned();
    vec![
        "--holdings".into(),
        p("holdings.csv"),
        "--funds".into(),
        p("funds.csv"),
        "--prices".into(),
        p("prices.csv"),
        "--esg".into(),
        p("esg.csv"),
    ]
}

fn manifest(dir: &Path) -> serde_json::Value {
    let raw = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest.json exists");
    serde_json::from_str(&raw).expect("manifest parses")
}

fn is_hex_digest(v: &serde_json::Value) -> bool {
    v.as_str().is_some_and(|s| s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit()))
}

#[test]
fn full_pipeline_completes_with_exit_zero() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data, 7);
    for name in ["holdings.csv", "funds.csv", "prices.csv", "esg.csv", "ground_truth.csv"] {
        assert!(data.join(name).is_file(), "{name} missing");
    }
    let m = manifest(&data);
    assert_eq!(m["command"], "synth");
    assert_eq!(m["rng_seed"], 7);
    assert!(is_hex_digest(&m["config_sha256"]));
    assert_eq!(m["inputs"].as_array().unwrap().len(), 0);
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 5);

    let score_dir = tmp.path().join("score");
    run_ok(smislab().args([
        "score",
        "--holdings",
        data.join("holdings.csv").to_str().unwrap(),
        "--funds",
        data.join("funds.csv").to_str().unwrap(),
        "--quarter-range",
        "2010Q1:2012Q4",
        "--out",
        score_dir.to_str().unwrap(),
    ]));
    let scores = std::fs::read_to_string(score_dir.join("scores.csv")).unwrap();
    assert!(scores.starts_with("asset_id,quarter,smis,"));
    assert!(scores.lines().count() > 100);

    let bt_dir = tmp.path().join("bt");
    let mut cmd = smislab();
    cmd.arg("backtest").args(data_flags(&data)).args([
        "--shares",
        data.join("ground_truth.csv").to_str().unwrap(),
        "--strategy",
        "smis",
        "--engine",
        "tilt",
        "--k",
        "5",
        "--benchmark-size",
        "40",
        "--end",
        "2012-12-31",
        "--out",
        bt_dir.to_str().unwrap(),
    ]);
    run_ok(&mut cmd);
    let report = std::fs::read_to_string(bt_dir.join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("smis,"));
    assert!(lines[2].starts_with("benchmark,"));
    // No validation ran: every band cell of the strategy row is empty.
    assert!(lines[1].ends_with(",,,"));
    assert!(bt_dir.join("weights.csv").is_file());
    assert!(bt_dir.join("diagnostics.jsonl").is_file());
    let m = manifest(&bt_dir);
    assert_eq!(m["command"], "backtest");
    let inputs = m["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 5);
    assert!(inputs.iter().all(|i| is_hex_digest(&i["sha256"])));
    assert_eq!(m["config"]["strategy"]["kind"], "TopSmis");

    let val_dir = tmp.path().join("val");
    let mut cmd = smislab();
    cmd.arg("validate").args(data_flags(&data)).args([
        "--strategy",
        "smis",
        "--k",
        "5",
        "--benchmark-size",
        "40",
        "--end",
        "2012-12-31",
        "--n-random",
        "20",
        "--ci",
        "0.9",
        "--out",
        val_dir.to_str().unwrap(),
    ]);
    run_ok(&mut cmd);
    let report = std::fs::read_to_string(val_dir.join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 3);
    let strategy_row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(strategy_row.len(), 45);
    // Bands are filled: every third band column is a flag word.
    for flag in strategy_row[12..].iter().skip(2).step_by(3) {
        assert!(matches!(*flag, "better" | "worse" | "inside"), "bad flag {flag:?}");
    }

    let reg_dir = tmp.path().join("reg");
    let mut cmd = smislab();
    cmd.args([
        "regress",
        "--holdings",
        data.join("holdings.csv").to_str().unwrap(),
        "--funds",
        data.join("funds.csv").to_str().unwrap(),
        "--esg",
        data.join("esg.csv").to_str().unwrap(),
        "--taus",
        "0.25,0.5,0.75",
        "--bootstrap",
        "10",
        "--out",
        reg_dir.to_str().unwrap(),
    ]);
    run_ok(&mut cmd);
    let reg = std::fs::read_to_string(reg_dir.join("regression_results.csv")).unwrap();
    assert!(reg.starts_with("regressor,tau_0.25,tau_0.5,tau_0.75,se_0.25,se_0.5,se_0.75"));
    assert!(reg.lines().any(|l| l.starts_with("esg_score,")));

    let rep_dir = tmp.path().join("rep");
    let mut cmd = smislab();
    cmd.args([
        "report",
        "--holdings",
        data.join("holdings.csv").to_str().unwrap(),
        "--funds",
        data.join("funds.csv").to_str().unwrap(),
        "--esg",
        data.join("esg.csv").to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        rep_dir.to_str().unwrap(),
    ]);
    run_ok(&mut cmd);
    let scatter = std::fs::read_to_string(rep_dir.join("scatter.csv")).unwrap();
    assert!(scatter.starts_with("quarter,asset_id,esg,smis,significant"));
    for line in scatter.lines().skip(1).take(50) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 5);
        assert!(cols[2].parse::<f64>().is_ok());
        assert!(cols[3].parse::<f64>().is_ok());
        assert!(cols[4] == "0" || cols[4] == "1");
    }
    let sectors = std::fs::read_to_string(rep_dir.join("sectors.csv")).unwrap();
    assert!(sectors.starts_with("sector,n,mean_smis,mean_esg"));
    assert!(sectors.lines().count() > 1);
}

#[test]
fn oversized_k_exits_one_with_insufficient_universe() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data, 7);
    let out_dir = tmp.path().join("bt");
    let mut cmd = smislab();
    cmd.arg("backtest").args(data_flags(&data)).args([
        "--strategy",
        "smis",
        "--k",
        "100",
        "--benchmark-size",
        "40",
        "--end",
        "2012-12-31",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("insufficient-universe"), "stderr: {stderr}");
    // The manifest is still written on failure.
    assert_eq!(manifest(&out_dir)["command"], "backtest");
}

#[test]
fn usage_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let out = smislab().args(["score", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = smislab()
        .args(["--jobs", "0", "synth", "--out", tmp.path().join("a").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let mut cmd = smislab();
    cmd.args(["synth", "--out", tmp.path().join("b").to_str().unwrap()])
        .env("SMISLAB_SEED", "not-a-number");
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SMISLAB_SEED"));

    // Inverted quarter range is rejected at flag parse time.
    let out = smislab()
        .args([
            "score",
            "--holdings",
            "h.csv",
            "--funds",
            "f.csv",
            "--quarter-range",
            "2013Q1:2011Q4",
            "--out",
            tmp.path().join("c").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_one_and_is_recorded_unreadable() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data, 7);
    let out_dir = tmp.path().join("score");
    let mut cmd = smislab();
    cmd.args([
        "score",
        "--holdings",
        tmp.path().join("absent.csv").to_str().unwrap(),
        "--funds",
        data.join("funds.csv").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(&out_dir);
    let inputs = m["inputs"].as_array().unwrap();
    assert_eq!(inputs[0]["sha256"], "unreadable");
    assert!(is_hex_digest(&inputs[1]["sha256"]));
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 0);
}

#[test]
fn seed_env_overrides_the_flag() {
    let tmp = TempDir::new().unwrap();
    let by_flag = tmp.path().join("flag");
    synth_small(&by_flag, 7);

    let by_env = tmp.path().join("env");
    let mut cmd = smislab();
    cmd.args([
        "synth",
        "--out",
        by_env.to_str().unwrap(),
        "--n-assets",
        "80",
        "--n-art9",
        "8",
        "--n-art8",
        "24",
        "--n-art6",
        "8",
        "--n-quarters",
        "12",
        "--seed",
        "999",
    ])
    .env("SMISLAB_SEED", "7");
    run_ok(&mut cmd);

    for name in ["holdings.csv", "prices.csv", "esg.csv"] {
        let a = std::fs::read(by_flag.join(name)).unwrap();
        let b = std::fs::read(by_env.join(name)).unwrap();
        assert_eq!(a, b, "{name} should match the --seed 7 output");
    }
    assert_eq!(manifest(&by_env)["rng_seed"], 7);
}

#[test]
fn reports_are_byte_identical_across_runs_and_job_counts() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data, 7);

    let run_validate = |out_dir: &PathBuf, jobs: &str| {
        let mut cmd = smislab();
        cmd.args(["--jobs", jobs])
            .arg("validate")
            .args(data_flags(&data))
            .args([
                "--strategy",
                "smis",
                "--k",
                "5",
                "--benchmark-size",
                "40",
                "--end",
                "2012-12-31",
                "--n-random",
                "20",
                "--seed",
                "17",
                "--out",
                out_dir.to_str().unwrap(),
            ]);
        run_ok(&mut cmd);
        std::fs::read(out_dir.join("report.csv")).unwrap()
    };

    let first = run_validate(&tmp.path().join("r1"), "1");
    let second = run_validate(&tmp.path().join("r2"), "1");
    let third = run_validate(&tmp.path().join("r3"), "4");
    assert_eq!(first, second, "same seed and inputs must reproduce report.csv");
    assert_eq!(first, third, "report.csv must not depend on --jobs");
    for dir in ["r1", "r2"] {
        let w = std::fs::read(tmp.path().join(dir).join("weights.csv")).unwrap();
        assert!(!w.is_empty());
    }
    let w1 = std::fs::read(tmp.path().join("r1").join("weights.csv")).unwrap();
    let w2 = std::fs::read(tmp.path().join("r2").join("weights.csv")).unwrap();
    assert_eq!(w1, w2);
}
