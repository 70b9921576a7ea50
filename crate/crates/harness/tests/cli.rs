//! End-to-end runs of the `multistrat` binary on the bundled fixture.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/esconv_fixture.json")
}

fn multistrat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multistrat"))
        .args(["--corpus", fixture().to_str().unwrap(), "--splits", "field"])
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn stats_as_json() {
    let o = multistrat(&["stats", "--json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["dialogues"], 12);
    assert_eq!(v["splits"]["train"]["buckets"], json!([13, 3, 2, 1]));
    assert_eq!(v["splits"]["test"]["total"], 4);
}

#[test]
fn build_writes_every_regime_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let o = multistrat(&["--out", out.to_str().unwrap(), "--seed", "7", "build", "--regime", "single,aio,obo", "--rl", "--rl-total", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = |name: &str| fs::read_to_string(out.join(name)).unwrap().lines().count();
    assert_eq!(lines("single.jsonl"), 19);
    assert_eq!(lines("aio.jsonl"), 19);
    assert_eq!(lines("obo.jsonl"), 29);
    assert_eq!(lines("rl-aio.jsonl"), 10);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["seed"], 7);
    assert_eq!(m["split"], "train");
    assert!(!out.join(".staging").exists());
}

#[test]
fn build_failure_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let o = multistrat(&["--out", out.to_str().unwrap(), "build", "--rl", "--rl-total", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.join("aio.jsonl").exists());
    assert!(!out.join(".staging").exists());
}

#[test]
fn echo_evaluation_then_report() {
    let dir = tempfile::tempdir().unwrap();
    for regime in ["aio", "obo"] {
        let run = dir.path().join(format!("echo-{regime}"));
        let o = multistrat(&["--out", run.to_str().unwrap(), "--profile", "echo", "eval-utterance", "--regime", regime]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let report = read_json(&run.join("report.json"));
        assert_eq!(report["report"]["emr"], 100.0, "{report}");
        assert_eq!(report["report"]["n"], 4);
    }
    let o = multistrat(&["--out", dir.path().join("summary").to_str().unwrap(), "report", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("Utterance level\n"));
    assert!(text.contains("echo-aio") && text.contains("echo-obo"));
    assert!(dir.path().join("summary").join("summary.json").exists());
}

#[test]
fn scripted_self_play_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, v: Value| fs::write(dir.path().join(name), v.to_string()).unwrap();
    write(
        "supporter.json",
        json!({"fallback": r#"[{"strategy":"Question","text":"What is on your mind?"}]"#}),
    );
    write("seeker.json", json!({"fallback": "I feel a bit better now."}));
    write("critic.json", json!({"fallback": "D. Yes, the Patient feels better."}));
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        r#"
seed = 3
max_turns = 4

[profiles.sup]
kind = "scripted"
script = "supporter.json"
"#,
    )
    .unwrap();
    let out = dir.path().join("selfplay");
    let o = multistrat(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "eval-dialogue",
        "--supporter",
        "sup",
        "--seeker",
        &format!("scripted:{}", dir.path().join("seeker.json").display()),
        "--critic",
        "scripted:critic.json",
        "--split",
        "train",
        "--n",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["dialogues"].as_array().unwrap().len(), 3);
    assert_eq!(m["aggregate"]["sr"], 100.0);
    assert_eq!(m["aggregate"]["at"], 1.0);
    assert_eq!(fs::read_to_string(out.join("selfplay.jsonl")).unwrap().lines().count(), 3);
}

#[test]
fn exit_codes() {
    assert_eq!(multistrat(&["nonsense"]).status.code(), Some(1));
    assert_eq!(multistrat(&["eval-utterance", "--regime", "aio"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "colour = \"blue\"\n").unwrap();
    assert_eq!(multistrat(&["--config", bad.to_str().unwrap(), "stats"]).status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_multistrat"))
        .args(["--corpus", "/nonexistent.json", "stats"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let tape = dir.path().join("empty-tape.jsonl");
    fs::write(&tape, "").unwrap();
    let o = multistrat(&[
        "--out",
        dir.path().join("r").to_str().unwrap(),
        "--profile",
        &format!("replay:{}", tape.display()),
        "eval-utterance",
        "--regime",
        "aio",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(multistrat(&["--help"]).status.code(), Some(0));
}
