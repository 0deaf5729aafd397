use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn limp(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_limp"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = limp(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn manifest(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: [&str; 7] = ["synth", "--users", "4", "--days", "30", "--pois", "30"];

#[test]
fn synth_is_deterministic_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    ok(a.path(), &SMALL);
    ok(b.path(), &SMALL);
    let mut other = SMALL.to_vec();
    other.extend(["--seed", "9"]);
    ok(c.path(), &other);
    let read = |d: &Path, f: &str| std::fs::read(d.join("data").join(f)).unwrap();
    for f in ["stays.csv", "labels.csv", "world.json"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    assert_ne!(read(a.path(), "stays.csv"), read(c.path(), "stays.csv"));

    let m = manifest(&a.path().join("data/manifest-synth.json"));
    assert_eq!(m["command"], "synth");
    assert_eq!(m["root_seed"], 42);
    assert_eq!(m["config"]["data"]["users"], 4);
    assert!(m["seeds"]["world"].is_u64());
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn offline_annotation_then_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &SMALL);
    let text = ok(d, &["annotate", "--backend", "mock", "--variant", "a2i"]);
    assert!(text.contains("0 failed"), "{text}");
    assert!(d.join("annotations/annotations.jsonl").exists());
    assert!(d.join("annotations/insights.json").exists());
    ok(d, &["evaluate"]);
    let row = manifest(&d.join("reports/annotation_eval.json"));
    // The clean mock follows the heuristic protocol, which the simulator's
    // labels are built to agree with.
    assert!(row["metrics"]["accuracy"].as_f64().unwrap() > 0.99, "{row}");

    ok(d, &["export-finetune"]);
    let m = manifest(&d.join("finetune/manifest-export-finetune.json"));
    assert_eq!(m["details"]["users"], 4);
    ok(d, &["report"]);
    assert!(d.join("reports/figures/confusion_annotation.svg").exists());
}

#[test]
fn train_manifests_record_the_intent_mode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &SMALL);
    for mode in ["none", "weighted"] {
        ok(d, &["train", "--intent-mode", mode, "--preset", "toy", "--epochs", "1"]);
        let m = manifest(&d.join(format!("checkpoints/manifest-train-{mode}.json")));
        assert_eq!(m["details"]["intent_mode"], mode);
        assert!(d.join(format!("checkpoints/{mode}.json")).exists());
        assert!(d.join(format!("reports/history_{mode}.csv")).exists());
    }
    let text = ok(d, &["evaluate"]);
    assert!(text.contains("w/o intent") && text.contains("Full"), "{text}");
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(limp(dir.path(), &["--no-such-flag"]).status.code(), Some(2));
    assert_eq!(limp(dir.path(), &["train", "--intent-mode", "sideways"]).status.code(), Some(2));
    assert_eq!(limp(dir.path(), &["ablate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = limp(dir.path(), &["stats"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
}

#[test]
fn config_files_and_flags_compose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\n[data]\nusers = 3\ndays = 10\npois = 20\n").unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_limp"))
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "synth", "--days", "12"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out.join("data/manifest-synth.json"));
    assert_eq!(m["root_seed"], 5);
    assert_eq!(m["config"]["data"]["users"], 3);
    assert_eq!(m["config"]["data"]["days"], 12);

    // A manifest replays as a config.
    let replay = Command::new(env!("CARGO_BIN_EXE_limp"))
        .arg("--config")
        .arg(out.join("data/manifest-synth.json"))
        .arg("--out")
        .arg(dir.path().join("replay"))
        .arg("synth")
        .output()
        .unwrap();
    assert!(replay.status.success());
    assert_eq!(
        std::fs::read(out.join("data/stays.csv")).unwrap(),
        std::fs::read(dir.path().join("replay/data/stays.csv")).unwrap()
    );

    std::fs::write(&cfg, "[data]\nusres = 3\n").unwrap();
    let bad = Command::new(env!("CARGO_BIN_EXE_limp"))
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "stats"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
