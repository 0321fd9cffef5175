use std::path::Path;
use std::process::Command;

use boxpromo::{apply_overrides, files, replay, shipped, Error};
use boxpromo_core::log::LogHeader;
use boxpromo_core::run::run;
use boxpromo_core::scenario::{AdversaryConfig, PolicyKind, Scenario};

fn small() -> Scenario {
    Scenario::mp("small", 1, 3, 300, AdversaryConfig::new(PolicyKind::Random, 5))
}

fn boxpromo(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_boxpromo")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write_small_log(dir: &Path) -> std::path::PathBuf {
    let scenario = small();
    let (records, _) = run(&scenario).unwrap();
    let path = dir.join("small.jsonl");
    files::write_log(&path, &LogHeader::new(scenario), &records).unwrap();
    path
}

#[test]
fn log_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small();
    let header = LogHeader::new(scenario.clone());
    let (records, _) = run(&scenario).unwrap();
    let path = dir.path().join("log.jsonl");
    files::write_log(&path, &header, &records).unwrap();
    let (h, r) = files::read_log(&path).unwrap();
    assert_eq!(h, header);
    assert_eq!(r, records);
    let text = std::fs::read_to_string(&path).unwrap();
    for line in text.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(no_floats(&value), "non-integer number in {line}");
    }
}

fn no_floats(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Number(n) => n.is_i64() || n.is_u64(),
        serde_json::Value::Array(a) => a.iter().all(no_floats),
        serde_json::Value::Object(o) => o.values().all(no_floats),
        _ => true,
    }
}

#[test]
fn malformed_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_small_log(dir.path());
    let mut lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    lines[3] = "{\"tick\": \"three\"}".into();
    std::fs::write(&path, lines.join("\n")).unwrap();
    match files::read_log(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn wrong_schema_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_small_log(dir.path());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let mut header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    header["version"] = serde_json::json!(999);
    let rest: Vec<&str> = lines.collect();
    std::fs::write(&path, format!("{header}\n{}", rest.join("\n"))).unwrap();
    assert!(matches!(files::read_log(&path), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn replay_detects_a_tampered_record() {
    let scenario = small();
    let header = LogHeader::new(scenario.clone());
    let (mut records, _) = run(&scenario).unwrap();
    assert_eq!(replay(&header, &records).unwrap(), records.len());
    let target = records.iter().position(|r| r.action.is_some()).expect("some action");
    records[target].action = None;
    match replay(&header, &records) {
        Err(Error::Divergence { tick, detail }) => {
            assert_eq!(tick, records[target].tick);
            assert!(detail.contains("action"), "{detail}");
        }
        other => panic!("expected divergence, got {other:?}"),
    }
    records.truncate(target);
    assert!(matches!(replay(&header, &records), Err(Error::Divergence { .. })));
}

#[test]
fn shipped_scenarios_load() {
    let names: Vec<&str> = shipped::names().collect();
    assert_eq!(names.len(), shipped::all().unwrap().len());
    for name in names {
        let s = files::load_scenario(name).unwrap();
        assert_eq!(s.name, name);
    }
    assert!(matches!(files::load_scenario("no-such-scenario"), Err(Error::UnknownScenario(_))));
}

#[test]
fn capacity_override_needs_negative_control() {
    let mut s = small();
    let e = apply_overrides(&mut s, None, Some("2"), false).unwrap_err();
    assert_eq!(e.exit_code(), 3);
    apply_overrides(&mut s, Some(9), Some("2"), true).unwrap();
    assert!(s.negative_control && s.capacity_override.is_some());
    assert_eq!(s.adversary.seed, 9);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(boxpromo(&["run", "mp-quiesce-early", "--out", out]).0, 0);
    assert_eq!(boxpromo(&["run", "mp-stonewall", "--out", out]).0, 2);
    assert_eq!(boxpromo(&["run", "mp-seesaw-negative", "--out", out]).0, 1);
    assert_eq!(boxpromo(&["run", "nonexistent", "--out", out]).0, 3);
    assert_eq!(boxpromo(&["run", "mp-quiesce-early", "--out", out, "--override-capacity", "2"]).0, 3);
    assert_eq!(boxpromo(&["frobnicate"]).0, 3);

    let log = dir.path().join("mp-quiesce-early.jsonl");
    let log = log.to_str().unwrap();
    assert_eq!(boxpromo(&["replay", log]).0, 0);
    let (code, json) = boxpromo(&["audit", log]);
    assert_eq!(code, 0);
    assert!(serde_json::from_str::<serde_json::Value>(&json).is_ok());

    let audit = dir.path().join("mp-stonewall.audit.json");
    let (code, csv) = boxpromo(&["report", audit.to_str().unwrap(), "--csv"]);
    assert_eq!(code, 2);
    assert!(csv.starts_with("tick,column,level,k,l,g\n"));
    assert!(csv.lines().count() > 1);
    assert_eq!(boxpromo(&["audit", dir.path().join("missing.jsonl").to_str().unwrap()]).0, 3);
}

#[test]
fn seed_flag_changes_random_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    boxpromo(&["run", "mp-random", "--out", a.to_str().unwrap(), "--seed", "1"]);
    boxpromo(&["run", "mp-random", "--out", b.to_str().unwrap(), "--seed", "2"]);
    let read = |d: &Path| std::fs::read(d.join("mp-random.jsonl")).unwrap();
    assert_ne!(read(&a), read(&b));
}
