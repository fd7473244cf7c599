use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mimo-mmse"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mimo-mmse-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn figure_output_is_reproducible_and_seed_dependent() {
    let paths: Vec<PathBuf> = ["a.csv", "b.csv", "c.csv"].iter().map(|n| tmp(n)).collect();
    for (p, seed) in paths.iter().zip(["42", "42", "43"]) {
        let out = run(&["figure", "--id", "1", "--seed", seed, "--n-mc", "200", "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |p: &PathBuf| std::fs::read(p).unwrap();
    assert_eq!(read(&paths[0]), read(&paths[1]));
    assert_ne!(read(&paths[0]), read(&paths[2]));
    let text = String::from_utf8(read(&paths[0])).unwrap();
    assert!(text.starts_with("# figure=1 config_sha256="));
    assert!(text.lines().next().unwrap().ends_with("seed=42"));
}

#[test]
fn usage_errors_exit_with_one() {
    for args in [
        vec!["figure", "--id", "6"],
        vec!["figure"],
        vec!["no-such-command"],
        vec!["emi", "--n-mc", "1"],
        vec!["fixed-point", "--config", "/nonexistent/config.json"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let cfg = tmp("bad.json");
    std::fs::write(&cfg, r#"{"snr_grid_db": [], "t": 4}"#).unwrap();
    assert_eq!(run(&["fixed-point", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    std::fs::write(&cfg, r#"{"colour": 3}"#).unwrap();
    assert_eq!(run(&["fixed-point", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_with_two() {
    // a non-PSD explicit correlation passes parsing but fails the model check
    let cfg = tmp("nonpsd.json");
    std::fs::write(
        &cfg,
        r#"{"t": 2, "r": 2, "correlation": {"transmit": {"matrix": {"rows": 2, "cols": 2, "re": [1, 3, 3, 1], "im": [0, 0, 0, 0]}}, "receive": "iid"}}"#,
    )
    .unwrap();
    let out = run(&["fixed-point", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn selftest_exit_codes() {
    let ok = run(&["selftest"]);
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8(ok.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
    for fault in ["drop-sigma4", "wrong-log-base"] {
        let bad = run(&["selftest", "--inject", fault]);
        assert_eq!(bad.status.code(), Some(3), "{fault}");
        assert!(String::from_utf8(bad.stdout).unwrap().contains("FAIL"));
    }
}

#[test]
fn json_commands_produce_parseable_output() {
    let out = run(&["select-antennas", "--snr-db", "15", "--config", &{
        let p = tmp("t8.json");
        std::fs::write(&p, r#"{"t": 8, "r": 8, "correlation": {"transmit": "iid", "receive": "iid"}}"#).unwrap();
        p.to_str().unwrap().to_string()
    }]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["s_opt"], 6);

    let out = run(&["fixed-point", "--snr-db", "0,10"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert!(v[1]["i_bar_nats"].as_f64().unwrap() > v[0]["i_bar_nats"].as_f64().unwrap());

    let out = run(&["emi", "--snr-db", "10", "--n-mc", "50", "--seed", "3"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["emi_nats"]["n"], 50);
    assert_eq!(v[0]["emi_nats"]["seed"], 3);

    let out = run(&["optimize", "--scheme", "ibar-structured", "--snr-db", "10", "--n-mc", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["scheme"], "ibar_structured");
    assert!(!v[0]["result"]["trace"].as_array().unwrap().is_empty());
}

#[test]
fn timing_reports_configured_schemes() {
    let cfg = tmp("timing.json");
    std::fs::write(&cfg, r#"{"schemes": ["ibar_structured", "ihat_structured"]}"#).unwrap();
    let out = run(&["timing", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let keys: Vec<&String> = v["seconds"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["ibar_structured", "ihat_structured"]);
    assert!(v["hardware"].is_string());
}
