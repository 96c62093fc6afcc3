use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_coherelab"));
    cmd.args(args).env_remove("COHERELAB_SEED");
    if let Some(seed) = env_seed {
        cmd.env("COHERELAB_SEED", seed);
    }
    cmd.output().unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn manifest(dir: &Path, sub: &str) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join(format!("{sub}.manifest.json"))).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"], None).status.code(), Some(2));
    assert_eq!(run(&["coherence"], None).status.code(), Some(2));
    let t = fixture("transcripts.jsonl");
    assert_eq!(run(&["coherence", "--transcripts", &t, "--alpha", "1.5"], None).status.code(), Some(2));
}

#[test]
fn missing_input_file_is_a_data_error() {
    let out = tempfile::tempdir().unwrap();
    let o = run(
        &["validate", "--transcripts", "/nonexistent/t.jsonl", "--out-dir", out.path().to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn validation_violations_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    // A therapist turn carrying a label, and an index gap.
    let lines = [
        r#"{"session_id":"a","client_id":"c","session_index":0,"utterance_index":0,"speaker":"therapist","text":"x","gold_label":"positive"}"#,
        r#"{"session_id":"a","client_id":"c","session_index":0,"utterance_index":2,"speaker":"client","text":"y","gold_label":"mixed"}"#,
    ];
    std::fs::write(&t, lines.join("\n") + "\n").unwrap();
    let o = run(
        &["validate", "--transcripts", t.to_str().unwrap(), "--out-dir", dir.path().join("out").to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/validation_report.json")).unwrap()).unwrap();
    assert_eq!(report["violations"].as_array().unwrap().len(), 2);
}

#[test]
fn duplicate_utterance_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    let line = r#"{"session_id":"a","client_id":"c","session_index":0,"utterance_index":0,"speaker":"client","text":"x","gold_label":"positive"}"#;
    std::fs::write(&t, format!("{line}\n{line}\n")).unwrap();
    let o = run(
        &["validate", "--transcripts", t.to_str().unwrap(), "--out-dir", dir.path().join("out").to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("DUPLICATE_UTTERANCE"));
}

#[test]
fn clean_fixture_validates() {
    let out = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "validate",
            "--transcripts",
            &fixture("transcripts.jsonl"),
            "--self-reports",
            &fixture("self_reports.csv"),
            "--out-dir",
            out.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.path().join("validation_report.json").exists());
}

#[test]
fn seed_precedence_is_flag_then_env_then_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"seed": 11, "min_sessions_per_client": 2}"#).unwrap();
    let t = fixture("transcripts.jsonl");
    let seed_of = |extra: &[&str], env: Option<&str>, tag: &str| {
        let out = dir.path().join(tag);
        let mut args = vec!["label", "--transcripts", t.as_str(), "--config", config.to_str().unwrap()];
        args.extend(extra);
        args.extend(["--out-dir", out.to_str().unwrap()]);
        let o = run(&args, env);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let m = manifest(&out, "label");
        assert_eq!(m["config"]["min_sessions_per_client"], 2);
        m["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&[], None, "file"), 11);
    assert_eq!(seed_of(&[], Some("12"), "env"), 12);
    assert_eq!(seed_of(&["--seed", "13"], Some("12"), "flag"), 13);
}

#[test]
fn manifests_hash_their_outputs() {
    let out = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "coherence",
            "--transcripts",
            &fixture("transcripts.jsonl"),
            "--self-reports",
            &fixture("self_reports.csv"),
            "--out-dir",
            out.path().to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success());
    let m = manifest(out.path(), "coherence");
    let outputs = m["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for entry in outputs {
        let bytes = std::fs::read(out.path().join(entry["file"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap().len(), 64);
        assert!(!bytes.is_empty());
    }
}
