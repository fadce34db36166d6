mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use common::*;

fn cone(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cone"))
        .args(args)
        .env_remove("CONE_STATE_DIR")
        .env_remove("CONE_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .expect("run cone")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_events(dir: &Path, seed: u64, events: usize) -> String {
    let spec = StreamSpec {
        events,
        ..StreamSpec::small("cli")
    };
    let lines: Vec<String> = event_stream(seed, &spec)
        .iter()
        .map(|e| serde_json::to_string(e).unwrap())
        .collect();
    let path = dir.join("events.jsonl");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn replay_then_list() {
    let dir = tempfile::tempdir().unwrap();
    let events = write_events(dir.path(), 11, 300);
    let state = dir.path().join("state");
    let state_s = state.to_str().unwrap();
    ok(&cone(&["replay", "--events", &events, "--state-dir", state_s]));
    assert!(state.join("cli").join("snapshot.json").exists());
    assert!(state.join("cli").join("journal.jsonl").exists());

    let listed: Value = serde_json::from_str(&ok(&cone(&["notifications", "list", "--state-dir", state_s]))).unwrap();
    let listed = listed.as_array().unwrap();
    assert!(!listed.is_empty());
    assert!(listed.iter().all(|n| n["emitted"] == true));

    let table = ok(&cone(&["notifications", "list", "--state-dir", state_s, "--format", "table"]));
    assert_eq!(table.lines().count(), listed.len() + 1);
}

#[test]
fn shadow_flag_and_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let events = write_events(dir.path(), 12, 200);
    let state = dir.path().join("shadow");
    let out = Command::new(env!("CARGO_BIN_EXE_cone"))
        .args(["replay", "--events", &events, "--state-dir", "/nonexistent/ignored", "--shadow"])
        .env("CONE_STATE_DIR", &state)
        .env_remove("CONE_CONFIG")
        .output()
        .unwrap();
    ok(&out);
    let listed: Value =
        serde_json::from_str(&ok(&cone(&["notifications", "list", "--state-dir", state.to_str().unwrap()]))).unwrap();
    let listed = listed.as_array().unwrap();
    assert!(!listed.is_empty());
    assert!(listed.iter().all(|n| n["emitted"] == false));
}

#[test]
fn replay_skips_bad_lines_and_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.jsonl");
    fs::write(
        &events,
        concat!(
            r#"{"repo_id":"r","pr_id":1,"event_type":"created","timestamp":"2021-01-01T00:00:00Z","author":"a","files":["x.cs"]}"#,
            "\nnot json\n",
            r#"{"repo_id":"r","pr_id":1,"event_type":"created","timestamp":"2021-01-01T00:00:00Z","author":"a","files":["x.cs"]}"#,
            "\n"
        ),
    )
    .unwrap();
    let state = dir.path().join("s");
    let out = cone(&["replay", "--events", events.to_str().unwrap(), "--state-dir", state.to_str().unwrap()]);
    ok(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("invalid event"), "{stderr}");
    assert!(stderr.contains("rejected"), "{stderr}");

    let config = dir.path().join("bad.json");
    fs::write(&config, "{\n  \"eoo_min\": 150\n}").unwrap();
    let out = cone(&[
        "replay",
        "--config",
        config.to_str().unwrap(),
        "--events",
        events.to_str().unwrap(),
        "--state-dir",
        state.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("eoo_min"));
}

#[test]
fn rce_build_prints_list() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.jsonl");
    let lines = [
        r#"{"repo_id":"r","pr_id":1,"event_type":"created","timestamp":"2021-01-01T00:00:00Z","author":"a","files":["a.cs","b.cs"]}"#,
        r#"{"repo_id":"r","pr_id":2,"event_type":"created","timestamp":"2021-01-02T00:00:00Z","author":"b","files":["b.cs","c.cs"]}"#,
        r#"{"repo_id":"r","pr_id":1,"event_type":"closed","timestamp":"2021-01-03T00:00:00Z","author":"a","close_reason":"merged"}"#,
        r#"{"repo_id":"r","pr_id":2,"event_type":"closed","timestamp":"2021-01-04T00:00:00Z","author":"b","close_reason":"merged"}"#,
        r#"{"repo_id":"r","pr_id":3,"event_type":"created","timestamp":"2021-01-05T00:00:00Z","author":"c","files":["d.cs","notes.md"]}"#,
        r#"{"repo_id":"r","pr_id":3,"event_type":"closed","timestamp":"2021-01-06T00:00:00Z","author":"c","close_reason":"merged"}"#,
    ];
    fs::write(&events, lines.join("\n")).unwrap();
    let out = ok(&cone(&[
        "rce",
        "build",
        "--events",
        events.to_str().unwrap(),
        "--window-days",
        "90",
        "--at",
        "2021-01-10T00:00:00Z",
    ]));
    let list: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(list["files"], serde_json::json!(["a.cs", "c.cs", "d.cs"]));
    assert_eq!(list["built_at"], "2021-01-10T00:00:00Z");
    assert_eq!(list["window_days"], 90);

    let short = ok(&cone(&[
        "rce",
        "build",
        "--events",
        events.to_str().unwrap(),
        "--window-days",
        "7",
        "--at",
        "2021-01-10T00:00:00Z",
    ]));
    let list: Value = serde_json::from_str(&short).unwrap();
    assert_eq!(list["files"], serde_json::json!(["d.cs"]));
}

#[test]
fn analyze_formats() {
    let dir = tempfile::tempdir().unwrap();
    let events = write_events(dir.path(), 13, 600);
    let base = ["analyze", "--events", events.as_str(), "--permutations", "200", "--seed", "3"];

    let json: Value = serde_json::from_str(&ok(&cone(&[&base[..], &["--format", "json"]].concat()))).unwrap();
    assert_eq!(json["bug_induction"]["cells"].as_array().unwrap().len(), 8);
    assert_eq!(json["correlation"]["permutations"], 200);

    let again: Value = serde_json::from_str(&ok(&cone(&[&base[..], &["--format", "json"]].concat()))).unwrap();
    assert_eq!(json, again, "same seed, same report");

    let csv = ok(&cone(&[&base[..], &["--format", "csv", "--windows", "3,9"]].concat()));
    assert_eq!(csv.lines().filter(|l| l.starts_with("bug_induction,")).count(), 4);

    let table = ok(&cone(&[&base[..], &["--format", "table"]].concat()));
    assert!(table.contains("permutation test"));
}
