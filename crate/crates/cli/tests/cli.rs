use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn demodocus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_demodocus"))
        .arg("crawl")
        .args(args)
        .env_remove("DEMODOCUS_WEBDRIVER_URL")
        .output()
        .unwrap()
}

#[test]
fn exit_code_reflects_violations() {
    let out = demodocus(&[&fixture("fig3.json"), "--users", "keyboard"]);
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["violations"].as_array().unwrap().len(), 3);
    assert_eq!(report["config"]["users"], serde_json::json!(["nondisabled", "keyboard"]));

    let out = demodocus(&[&fixture("accessible.json")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn errors_exit_with_one() {
    let out = demodocus(&[&fixture("fig3.json"), "--users", "nobody"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nobody"));

    let out = demodocus(&["http://example.invalid/"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DEMODOCUS_WEBDRIVER_URL"));

    let out = demodocus(&[&fixture("fig3.json"), "--max-states", "0"]);
    assert_eq!(out.status.code(), Some(1));

    let out = demodocus(&["/no/such/fixture.json", "--driver", "sim"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn files_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.txt");
    let dot = dir.path().join("g.dot");
    let out = demodocus(&[
        &fixture("fig3.json"),
        "--users",
        "keyboard",
        "--format",
        "text",
        "--out",
        report.to_str().unwrap(),
        "--dot",
        dot.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("violations: 3"));
    let dot = std::fs::read_to_string(&dot).unwrap();
    assert!(dot.starts_with("digraph \"omni_keyboard\""));
    assert_eq!(dot.matches("#f4cccc").count(), 3);
}

#[test]
fn budgets_strategy_and_strict_mode() {
    let out = demodocus(&[&fixture("fig3.json"), "--max-states", "3", "--strategy", "pipeline", "--strict"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["crawl"]["states"], 3);
    assert_eq!(report["crawl"]["truncated"], true);
    assert_eq!(report["config"]["reachability"], "incoming_edge");
    assert_eq!(report["config"]["crawl"]["strategy"]["kind"], "pipeline");
}

#[test]
fn config_file_is_applied_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "users = [\"keyboard\", \"screenreader\"]\ngap_ratio = 2.5\n\n[crawl]\nmax_depth = 1\nexhaustive = true\n",
    )
    .unwrap();
    let out = demodocus(&[&fixture("fig3.json"), "--config", cfg.to_str().unwrap()]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["config"]["gap_ratio"], 2.5);
    assert_eq!(report["config"]["crawl"]["max_depth"], 1);
    assert_eq!(report["config"]["crawl"]["exhaustive"], true);
    assert_eq!(report["config"]["users"], serde_json::json!(["nondisabled", "keyboard", "screenreader"]));

    std::fs::write(&cfg, "colour = \"blue\"\n").unwrap();
    let out = demodocus(&[&fixture("fig3.json"), "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
