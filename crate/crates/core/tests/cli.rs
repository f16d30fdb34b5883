use std::path::Path;
use std::process::{Command, Output};

fn forgetd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forgetd"))
        .args(args)
        .env_remove("FORGETD_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = forgetd(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Generates a small graph and trace, replays it and returns the directory.
fn pipeline(dir: &Path) {
    let graph = dir.join("graph.jsonl");
    let trace = dir.join("trace.jsonl");
    let out = dir.join("out");
    ok(&["gen-pimo", "--seed", "3", "--out", p(&graph), "--things", "600", "--private", "60", "--tasks", "30", "--years", "1", "--contexts", "8"]);
    ok(&["gen-trace", "--workload", "multitask", "--seed", "3", "--graph", p(&graph), "--out", p(&trace)]);
    ok(&["replay", "--graph", p(&graph), "--trace", p(&trace), "--out", p(&out), "--strict"]);
}

#[test]
fn full_pipeline_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let out = dir.path().join("out");
    for f in ["mb.csv", "mb_timeline.csv", "audit.jsonl", "tiers.csv", "mb_state.jsonl"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let mb = std::fs::read_to_string(out.join("mb.csv")).unwrap();
    assert_eq!(mb.lines().next(), Some("thing,user,context,mb,ts"));
    assert!(mb.lines().count() > 1);

    let text = ok(&["report", "--out", p(&out), "--format", "text"]);
    assert!(text.contains("refusals total"));
    let listed = ok(&["report", "--out", p(&out), "--format", "csv"]);
    assert!(listed.lines().all(|l| Path::new(l).exists()));
}

#[test]
fn query_diary_and_sync_plan() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let graph = dir.path().join("graph.jsonl");
    let trace = dir.path().join("trace.jsonl");
    let state = dir.path().join("out/mb_state.jsonl");
    let tiers = dir.path().join("out/tiers.csv");

    let json = ok(&["query", "--graph", p(&graph), "--state", p(&state), "--q", "report", "--threshold", "0", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["threshold"], 0.0);
    assert!(v["shown"].is_array());
    let table = ok(&["query", "--graph", p(&graph), "--state", p(&state), "--q", "report"]);
    assert!(!table.is_empty());

    let diary = ok(&["diary", "--graph", p(&graph), "--trace", p(&trace), "--state", p(&state), "--from", "2011-07-01", "--to", "2011-12-31"]);
    for line in diary.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    assert!(diary.lines().count() > 0);

    let plan = ok(&["sync-plan", "--graph", p(&graph), "--state", p(&state), "--tiers", p(&tiers), "--device", "mobile"]);
    serde_json::from_str::<serde_json::Value>(&plan).unwrap();
}

#[test]
fn exit_codes() {
    assert_eq!(forgetd(&["--help"]).status.code(), Some(0));
    assert_eq!(forgetd(&["--version"]).status.code(), Some(0));
    assert_eq!(forgetd(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(forgetd(&["replay", "--graph", "x"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.jsonl");
    let out = forgetd(&["gen-trace", "--graph", p(&missing), "--out", p(&dir.path().join("t.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let graph = dir.path().join("g.jsonl");
    ok(&["gen-pimo", "--out", p(&graph), "--things", "50", "--private", "5", "--tasks", "5", "--contexts", "4"]);
    let out = forgetd(&["query", "--graph", p(&graph), "--q", "x", "--threshold", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = forgetd(&["query", "--graph", p(&graph), "--q", "   "]);
    assert_eq!(out.status.code(), Some(1));
    let out = forgetd(&["report", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = forgetd(&["gen-pimo", "--out", p(&graph), "--things", "10", "--private", "20"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[spread]\nno_such_key = 1\n").unwrap();
    let graph = dir.path().join("g.jsonl");
    ok(&["gen-pimo", "--out", p(&graph), "--things", "50", "--private", "5", "--tasks", "5", "--contexts", "4"]);
    let out = forgetd(&["--config", p(&cfg), "query", "--graph", p(&graph), "--q", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    for f in [&a, &b] {
        ok(&["gen-pimo", "--seed", "9", "--out", p(f), "--things", "300", "--private", "30", "--tasks", "10", "--contexts", "6"]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (ta, tb) = (dir.path().join("ta.jsonl"), dir.path().join("tb.jsonl"));
    for t in [&ta, &tb] {
        ok(&["gen-trace", "--workload", "revisit", "--graph", p(&a), "--out", p(t)]);
    }
    assert_eq!(std::fs::read(&ta).unwrap(), std::fs::read(&tb).unwrap());
}
