use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use atomic_loans::agents::builtin;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atomic-loans"))
        .args(args)
        .env_remove("ATOMIC_LOANS_TRACE_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run_with_trace(scenario: &str, seed: &str, path: &Path) -> Output {
    cli(&["run", "--scenario", scenario, "--seed", seed, "--trace", path.to_str().unwrap()])
}

#[test]
fn lists_every_builtin() {
    let out = cli(&["list-scenarios"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for name in [
        "atomic_swap_baseline",
        "happy_path",
        "default_bidding",
        "default_no_bids_seizure",
        "nonreciprocating_lender",
        "double_agent_alice",
        "winner_walks_away",
        "lender_unresponsive_refund",
    ] {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name} missing");
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&cli(&["run", "--scenario", "no_such_scenario"])), 1);
    assert_eq!(code(&cli(&["enumerate", "--honest", "bob", "--depth", "17"])), 1);
    assert_eq!(code(&cli(&["enumerate", "--honest", "mallory", "--depth", "2"])), 1);
    assert_eq!(code(&cli(&["frobnicate"])), 1);
    assert_eq!(code(&cli(&[])), 1);
    assert_eq!(code(&cli(&["validate", "--trace", "/nonexistent/trace.jsonl"])), 1);
}

#[test]
fn run_prints_amounts_with_chain_names() {
    let out = cli(&["run", "--scenario", "happy_path"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("500 BCoin"), "{}", stdout(&out));
}

#[test]
fn traces_are_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"), dir.path().join("c.jsonl"));
    assert_eq!(code(&run_with_trace("default_bidding", "7", &a)), 0);
    assert_eq!(code(&run_with_trace("default_bidding", "7", &b)), 0);
    assert_eq!(code(&run_with_trace("default_bidding", "8", &c)), 0);
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c, "a different seed draws different secrets");
}

#[test]
fn trace_lines_have_fixed_key_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    assert_eq!(code(&run_with_trace("happy_path", "1", &path)), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    for line in text.lines() {
        let keys: Vec<usize> = ["\"seq\":", "\"time\":", "\"chain\":", "\"actor\":", "\"kind\":", "\"detail\":"]
            .iter()
            .map(|k| line.find(k).unwrap_or_else(|| panic!("{k} missing in {line}")))
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "{line}");
    }
}

#[test]
fn trace_dir_env_names_the_file_after_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_atomic-loans"))
        .args(["run", "--scenario", "happy_path"])
        .env("ATOMIC_LOANS_TRACE_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let written = dir.path().join("happy_path.jsonl");
    assert!(written.exists());
    assert_eq!(code(&cli(&["validate", "--trace", written.to_str().unwrap()])), 0);
}

#[test]
fn report_deltas_match_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, report) = (dir.path().join("t.jsonl"), dir.path().join("r.json"));
    let out = cli(&[
        "run",
        "--scenario",
        "default_bidding",
        "--trace",
        trace.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    // sum the per-transaction effects straight from the trace
    let mut bob_bcoin = 0i64;
    for line in std::fs::read_to_string(&trace).unwrap().lines() {
        let e: Value = serde_json::from_str(line).unwrap();
        if e["kind"] == "tx-accepted" && e["chain"] == "BCoin" {
            for eff in e["detail"]["effects"].as_array().unwrap() {
                if eff["holder"] == "bob" {
                    bob_bcoin += eff["delta"].as_i64().unwrap();
                }
            }
        }
    }
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["deltas"]["bob"]["BCoin"].as_i64(), Some(bob_bcoin));
    assert_eq!(bob_bcoin, 1_000);
    assert_eq!(r["terminal"], "settled");
}

#[test]
fn validate_reports_the_first_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    assert_eq!(code(&run_with_trace("default_bidding", "3", &path)), 0);
    let good = std::fs::read_to_string(&path).unwrap();
    let ok = cli(&["validate", "--trace", path.to_str().unwrap()]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));

    let lines: Vec<&str> = good.lines().collect();
    let claim = lines.iter().position(|l| l.contains("\"kind\":\"claim\"")).unwrap();

    // a derived line removed
    let mut dropped = lines.clone();
    dropped.remove(claim);
    std::fs::write(&path, dropped.join("\n") + "\n").unwrap();
    let out = cli(&["validate", "--trace", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains(&format!("line {}", claim + 1)), "{}", stderr(&out));

    // an amount edited
    let mut edited = lines.clone();
    let tampered = lines[claim].replace("\"amount\":1000", "\"amount\":1001");
    assert_ne!(tampered, lines[claim]);
    edited[claim] = &tampered;
    std::fs::write(&path, edited.join("\n") + "\n").unwrap();
    let out = cli(&["validate", "--trace", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains(&format!("line {}", claim + 1)), "{}", stderr(&out));

    // garbage
    std::fs::write(&path, format!("{}\nnot json\n", lines[0])).unwrap();
    let out = cli(&["validate", "--trace", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn unmet_expectations_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    let mut config = builtin::get("happy_path").unwrap();
    config.name = "happy_path_wrong".into();
    config.expect.deltas.insert("bob.bcoin".into(), 501);
    std::fs::write(&path, config.to_toml()).unwrap();
    let out = cli(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stdout(&out));

    config.expect.deltas.insert("bob.bcoin".into(), 500);
    std::fs::write(&path, config.to_toml()).unwrap();
    assert_eq!(code(&cli(&["run", "--scenario", path.to_str().unwrap()])), 0);
}

#[test]
fn scenario_files_reject_fractional_amounts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    let text = builtin::get("happy_path").unwrap().to_toml().replace("principal = 10000", "principal = 10000.5");
    assert!(text.contains("10000.5"));
    std::fs::write(&path, text).unwrap();
    assert_eq!(code(&cli(&["run", "--scenario", path.to_str().unwrap()])), 1);
}

#[test]
fn small_enumeration_is_clean_both_ways() {
    let par = cli(&["enumerate", "--honest", "alice", "--depth", "4"]);
    let seq = cli(&["enumerate", "--honest", "alice", "--depth", "4", "--sequential"]);
    assert_eq!(code(&par), 0, "{}", stdout(&par));
    assert_eq!(stdout(&par), stdout(&seq));
    assert!(stdout(&par).contains("violations: 0"));
}

#[test]
fn enumerate_accepts_a_terms_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("terms.toml");
    std::fs::write(
        &path,
        "principal = 10000\ninterest = 200\nliquidation_fee = 100\nseizable = 7000\nrefundable = 8000\n",
    )
    .unwrap();
    let out = cli(&["enumerate", "--honest", "bob", "--depth", "3", "--terms", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    // undercollateralized terms are refused up front
    std::fs::write(&path, "principal = 10000\nseizable = 100\nrefundable = 100\n").unwrap();
    let out = cli(&["enumerate", "--honest", "bob", "--depth", "3", "--terms", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}
