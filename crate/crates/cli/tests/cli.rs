use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use obfs_cli::config::RunConfig;
use serde_json::Value;

fn obfs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obfs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr)
        .unwrap_or_else(|_| panic!("{}", String::from_utf8_lossy(&out.stderr)))
}

fn simulate(dir: &Path, key: &str, n: usize) -> std::path::PathBuf {
    let out = obfs(&[
        "simulate",
        "-s",
        key,
        "-n",
        &n.to_string(),
        "--seed",
        "3",
        "-o",
        p(dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    dir.join("sample.csv")
}

#[test]
fn mnc_recovers_the_mean_shift_feature() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = simulate(&tmp.path().join("sim"), "a", 2000);
    let out_dir = tmp.path().join("sel");
    let out = obfs(&["select", "-i", p(&csv), "-o", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0));
    let sel: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("selection.json")).unwrap()).unwrap();
    assert_eq!(sel["selected"], serde_json::json!(["f0"]));
    assert_eq!(sel["rule"], "MNC");
    let marg = fs::read_to_string(out_dir.join("marginals.csv")).unwrap();
    assert!(marg.starts_with("feature,marginal,log_marginal,log_complement\nf0,"));
}

#[test]
fn cmnc_with_zero_features_selects_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = simulate(&tmp.path().join("sim"), "b", 300);
    let out_dir = tmp.path().join("sel");
    let out = obfs(&["select", "-i", p(&csv), "-o", p(&out_dir), "-d", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let sel: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("selection.json")).unwrap()).unwrap();
    assert_eq!(sel["selected"], serde_json::json!([]));
    assert_eq!(sel["D"], 0);
}

#[test]
fn malformed_csv_reports_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bad.csv");
    fs::write(&csv, "a,b,label\n1.0,2.0,0\n1.5,oops,1\n").unwrap();
    let out = obfs(&["select", "-i", p(&csv), "-o", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["line"], 3);
    assert_eq!(err["error"], "input");
    fs::write(&csv, "a,b,label\n1.0,2.0,7\n").unwrap();
    assert_eq!(obfs(&["obf", "-i", p(&csv)]).status.code(), Some(2));
}

#[test]
fn numeric_failures_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("dup.csv");
    // class 1 is absent, so kappa_offset = 1.5 leaves kappa* - |A| - 1 < 0
    fs::write(&csv, "a,label\n1.0,0\n2.0,0\n").unwrap();
    let out = obfs(&[
        "posterior",
        "-i",
        p(&csv),
        "-o",
        p(&tmp.path().join("o")),
        "--kappa-offset",
        "1.5",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(stderr_json(&out)["error"], "numeric");
}

#[test]
fn posterior_json_lists_named_partitions() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("d.csv");
    fs::write(
        &csv,
        "x,label,y\n0.1,0,1.0\n0.4,1,-0.3\n1.2,0,0.2\n-0.7,1,0.9\n0.3,0,-1.1\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("post");
    let out = obfs(&["posterior", "-i", p(&csv), "-o", p(&out_dir), "--top", "6"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("posterior.json")).unwrap()).unwrap();
    assert_eq!(v["n_partitions"], 6);
    let top = v["top_partitions"].as_array().unwrap();
    assert_eq!(top.len(), 6);
    let total: f64 = top.iter().map(|e| e["prob"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(top
        .iter()
        .all(|e| e["partition"].as_str().unwrap().contains('x')));
    let keys: Vec<&String> = v["marginal_f"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["x", "y"]);
    assert!(v["log_Z"].as_f64().unwrap().is_finite());
}

#[test]
fn effective_config_is_echoed_and_reloads() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = simulate(&tmp.path().join("sim"), "c", 200);
    let out_dir = tmp.path().join("o");
    let cfg_path = tmp.path().join("base.toml");
    fs::write(
        &cfg_path,
        "prior = \"block-size\"\nblock_penalty = 0.5\n[policy]\nkappa_offset = 4.0\n",
    )
    .unwrap();
    let out = obfs(&[
        "--config",
        p(&cfg_path),
        "select",
        "-i",
        p(&csv),
        "-o",
        p(&out_dir),
        "--nu-0",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let echoed = RunConfig::load(&out_dir.join("config.toml")).unwrap();
    assert_eq!(echoed.policy.kappa_offset, 4.0);
    assert_eq!(echoed.policy.nu_0, 2.0);
    assert_eq!(echoed.block_penalty, 0.5);
    assert_eq!(RunConfig::from_toml_str(&echoed.to_toml()).unwrap(), echoed);
    // rerunning from the echo reproduces the outputs
    let again = obfs(&[
        "--config",
        p(&out_dir.join("config.toml")),
        "select",
        "-o",
        p(&tmp.path().join("o2")),
    ]);
    assert!(again.status.success());
    assert_eq!(
        fs::read(out_dir.join("marginals.csv")).unwrap(),
        fs::read(tmp.path().join("o2/marginals.csv")).unwrap()
    );
    fs::write(&cfg_path, "colour = 3\n").unwrap();
    let bad = obfs(&["--config", p(&cfg_path), "verify"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sweep_is_reproducible_and_reports_rates() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str| {
        let d = tmp.path().join(dir);
        let out = obfs(&[
            "sweep",
            "-s",
            "b",
            "--n-grid",
            "100,200,500,1000,2000,3000,4000,5000",
            "--replicates",
            "1",
            "--seed",
            "4",
            "-o",
            p(&d),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        d
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["sweep.csv", "rates.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let rates: Value =
        serde_json::from_str(&fs::read_to_string(a.join("rates.json")).unwrap()).unwrap();
    let features = rates["reports"][0]["features"].as_array().unwrap();
    for f in features.iter().filter(|f| f["role"] == "good") {
        assert!(f["rate"]["fit"]["slope"].as_f64().unwrap() < 0.0, "{f}");
    }
    assert!(features.iter().any(|f| f["role"] == "good"));
    assert!(fs::read_to_string(a.join("sweep.csv"))
        .unwrap()
        .starts_with("seed,n,quantity,value\n"));
}

#[test]
fn sweep_refuses_thirteen_features() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("wide.toml");
    let mut mean = vec!["0.0"; 13];
    mean[0] = "1.0";
    fs::write(
        &spec,
        format!(
            "features = 13\n[class0]\nmean = [{}]\ndiagonal = [{}]\n[class1]\nmean = [{}]\ndiagonal = [{}]\n",
            mean.join(","),
            vec!["1.0"; 13].join(","),
            vec!["0.0"; 13].join(","),
            vec!["1.0"; 13].join(","),
        ),
    )
    .unwrap();
    let out = obfs(&[
        "sweep",
        "-s",
        p(&spec),
        "--n-grid",
        "10,20",
        "-o",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"]
        .as_str()
        .unwrap()
        .contains("cap of 12"));
}

#[test]
fn verify_passes_and_detects_faults() {
    let out = obfs(&["verify", "--features", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    for suite in [
        "zero-data",
        "dp-vs-enumeration",
        "obf-vs-general",
        "fan-inequality",
    ] {
        assert!(
            table
                .lines()
                .any(|l| l.starts_with(suite) && l.contains("PASS")),
            "{table}"
        );
    }
    let out = obfs(&["verify", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(1));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table
        .lines()
        .any(|l| l.starts_with("dp-vs-enumeration") && l.contains("FAIL")));
    assert!(table
        .lines()
        .any(|l| l.starts_with("zero-data") && l.contains("PASS")));
}

#[test]
fn obf_writes_scores_and_selection() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = simulate(&tmp.path().join("sim"), "a", 1000);
    let out_dir = tmp.path().join("obf");
    let out = obfs(&[
        "obf",
        "-i",
        p(&csv),
        "-o",
        p(&out_dir),
        "--inclusion",
        "0.3",
        "-d",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let sel: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("selection.json")).unwrap()).unwrap();
    assert_eq!(sel["rule"], "OBF-CMNC");
    assert_eq!(sel["selected"].as_array().unwrap().len(), 2);
    assert_eq!(sel["selected"][0], "f0");
    let bad = obfs(&["obf", "-i", p(&csv), "--inclusion", "0.2,0.3"]);
    assert_eq!(bad.status.code(), Some(2));
}
