use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const E2: &str = r#"{"states": ["deficit", "surplus"], "transition": [[0.4, 0.6], [0.4, 0.6]], "net_gen": [-1, 1]}"#;

fn battpool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_battpool"))
        .args(args)
        .env_remove("CI")
        .env_remove("BATTPOOL_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

/// Day of five-minute samples with a sinusoid-ish shape offset per location.
fn trace_csv(phase: usize) -> String {
    let mut s = String::from("timestamp,power_mw\n");
    for i in 0..576 {
        let t = 1_262_304_000 + 300 * i as i64;
        let ts = chrono::DateTime::from_timestamp(t, 0)
            .unwrap()
            .format("%Y-%m-%dT%H:%M:%SZ");
        let v = 6.0 + 3.0 * (((i + phase) % 24) as f64 / 4.0 - 3.0).tanh();
        s.push_str(&format!("{ts},{v}\n"));
    }
    s
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn decay_reports_e2_rate() {
    let dir = TempDir::new().unwrap();
    let chain = write(dir.path(), "e2.json", E2);
    let v = stdout_json(&battpool(&["decay", "--chain", p(&chain)]));
    let lambda = v["lambda"].as_f64().unwrap();
    assert!((lambda - 1.5f64.ln()).abs() < 1e-9, "{lambda}");
    assert_eq!(v["bound_satisfied"], Value::Bool(true));
    assert!((v["drift"].as_f64().unwrap() - 0.2).abs() < 1e-12);
}

#[test]
fn size_and_lolp_agree_on_e2() {
    let dir = TempDir::new().unwrap();
    let chain = write(dir.path(), "e2.json", E2);
    let v = stdout_json(&battpool(&["size", "--chain", p(&chain), "--eps", "0.4"]));
    assert_eq!(v["result"]["b_star"].as_f64(), Some(0.0));
    let v = stdout_json(&battpool(&[
        "lolp-exact",
        "--chain",
        p(&chain),
        "--capacity",
        "3",
    ]));
    let expected = 0.4 / (0..=3).map(|k| 1.5f64.powi(k)).sum::<f64>();
    assert!((v["lolp"].as_f64().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(battpool(&["--help"]).status.code(), Some(0));
    assert_eq!(battpool(&["decay"]).status.code(), Some(2));
    assert_eq!(battpool(&["no-such-command"]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(
        battpool(&["validate", "--chain", p(&missing)])
            .status
            .code(),
        Some(1)
    );

    let bad = write(
        dir.path(),
        "bad.json",
        "{\n  \"states\": [\"a\"],\n  oops\n}",
    );
    let out = battpool(&["validate", "--chain", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains(":3"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let positive = write(
        dir.path(),
        "pos.json",
        r#"{"states": ["a", "b"], "transition": [[0.5, 0.5], [0.5, 0.5]], "net_gen": [1, 2]}"#,
    );
    let out = battpool(&["validate", "--chain", p(&positive)]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["accepted"], Value::Bool(false));
}

#[test]
fn trace_errors_name_the_line() {
    let dir = TempDir::new().unwrap();
    let dup = write(
        dir.path(),
        "dup.csv",
        "timestamp,power_mw\n2010-01-01T00:00:00Z,1\n2010-01-01T00:05:00Z,2\n2010-01-01T00:05:00Z,3\n",
    );
    let out = battpool(&["simulate", "--trace", p(&dup), "--capacity", "10"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dup.csv") && err.contains('4'), "{err}");

    let gap = write(
        dir.path(),
        "gap.csv",
        "timestamp,power_mw\n2010-01-01T00:00:00Z,1\n2010-01-01T00:07:00Z,2\n",
    );
    assert_eq!(
        battpool(&["simulate", "--trace", p(&gap), "--capacity", "10"])
            .status
            .code(),
        Some(1)
    );

    let holes = write(
        dir.path(),
        "holes.csv",
        "timestamp,power_mw\n2010-01-01T00:00:00Z,1\n2010-01-01T00:10:00Z,2\n",
    );
    assert_eq!(
        battpool(&["simulate", "--trace", p(&holes), "--capacity", "10"])
            .status
            .code(),
        Some(1)
    );
    let out = battpool(&[
        "simulate",
        "--trace",
        p(&holes),
        "--capacity",
        "10",
        "--forward-fill",
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 5);
}

#[test]
fn monte_carlo_needs_seed_under_ci() {
    let dir = TempDir::new().unwrap();
    let chain = write(dir.path(), "e2.json", E2);
    let args = [
        "lolp-mc",
        "--chain",
        p(&chain),
        "--capacity",
        "2",
        "--steps",
        "20000",
    ];
    let out = Command::new(env!("CARGO_BIN_EXE_battpool"))
        .args(args)
        .env("CI", "true")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let a = battpool(&[&args[..], &["--seed", "5"]].concat());
    let b = battpool(&[&args[..], &["--seed", "5"]].concat());
    assert_eq!(stdout_json(&a), stdout_json(&b));
}

#[test]
fn study_on_traces_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "loc_a.csv", &trace_csv(0));
    let b = write(dir.path(), "loc_b.csv", &trace_csv(7));
    let run = |out: &Path| {
        battpool(&[
            "study",
            "--traces",
            p(&a),
            p(&b),
            "--eps",
            "0.2",
            "0.1",
            "--out-dir",
            p(out),
        ])
    };
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let out = run(&first);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(run(&second).status.success());
    for name in ["study.csv", "study.json"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
    let report: Value =
        serde_json::from_slice(&fs::read(first.join("study.json")).unwrap()).unwrap();
    let rows = report["table"]["rows"].as_array().unwrap();
    let ns: Vec<u64> = rows.iter().map(|r| r["n"].as_u64().unwrap()).collect();
    assert_eq!(ns, vec![1, 1, 2, 2]);
    assert_eq!(report["config_sha256"].as_str().unwrap().len(), 64);

    let csv = fs::read_to_string(first.join("study.csv")).unwrap();
    assert!(csv.starts_with("# battpool"));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(
        header,
        "N,epsilon,subset_ids,B_requirement_MJ,B_requirement_MWh,lolp_at_requirement,subsets_evaluated"
    );

    let out = battpool(&[
        "report",
        "--input",
        p(&first.join("study.json")),
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    assert_eq!(out.stdout, fs::read(first.join("study.csv")).unwrap());
}

#[test]
fn single_location_study_has_one_row_per_eps() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "only.csv", &trace_csv(3));
    let out_dir = dir.path().join("out");
    let out = battpool(&[
        "study",
        "--traces",
        p(&a),
        "--eps",
        "0.05",
        "--format",
        "csv",
        "--out-dir",
        p(&out_dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!out_dir.join("study.json").exists());
    let csv = fs::read_to_string(out_dir.join("study.csv")).unwrap();
    let data: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert_eq!(data.len(), 1);
    assert!(data[0].starts_with("1,0.05,only,"), "{}", data[0]);
}

#[test]
fn study_rejects_empty_eps_list() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.csv", &trace_csv(0));
    let cfg = write(
        dir.path(),
        "cfg.json",
        &format!(r#"{{"traces": [{:?}], "epsilons": []}}"#, p(&a)),
    );
    let out = battpool(&["study", "--config", p(&cfg), "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("study.csv").exists());
}

#[test]
fn schema_documents_columns() {
    let out = battpool(&["report", "--schema"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for col in [
        "subset_ids",
        "B_requirement_MWh",
        "lolp_at_requirement",
        "loss_flag",
    ] {
        assert!(text.contains(col), "{col}");
    }
}

#[test]
fn fit_writes_chain_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "site.csv", &trace_csv(0));
    let out = battpool(&[
        "fit",
        "--trace",
        p(&a),
        "--bins",
        "4",
        "--granularity",
        "60",
        "--smoothing",
        "0.5",
        "--out-dir",
        p(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let chain = dir.path().join("site.chain.json");
    assert!(dir.path().join("site.chain.meta.json").exists());
    let v = stdout_json(&battpool(&["decay", "--chain", p(&chain)]));
    assert!(v["lambda"].as_f64().unwrap() > 0.0);
}
