use std::path::Path;
use std::process::{Command, Output};

fn evocaptcha(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_evocaptcha")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ascii_generate_eval_report_cost() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ascii");
    evocaptcha(&["gen", "ascii", "--n", "20", "--seed", "3", "--images", "--out", s(&data)]);
    assert!(data.join("manifest.json").exists());
    assert_eq!(std::fs::read_dir(data.join("img")).unwrap().count(), 20);

    let csv = dir.path().join("oracle.csv");
    let out =
        evocaptcha(&["eval", "--dataset", s(&data), "--solver", "mock:oracle", "--mode", "text", "--out", s(&csv)]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("| Model |"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("Model,Result (%),Similarity (%),Avg Response Time (s)\n"), "{text}");
    assert!(text.contains(",100.00,100.00,"), "{text}");

    let json = dir.path().join("empty.json");
    evocaptcha(&["eval", "--dataset", s(&data), "--solver", "mock:empty", "--mode", "image", "--out", s(&json)]);
    let merged = dir.path().join("merged.csv");
    evocaptcha(&["report", "--input", s(&json), "--format", "csv", "--out", s(&merged)]);
    assert!(std::fs::read_to_string(&merged).unwrap().contains(",0.00,0.00,"));

    let trials = dir.path().join("oracle.trials.jsonl");
    let out = evocaptcha(&["cost", "--dataset", s(&data), "--trials", s(&trials)]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["generation_samples"], 20);
    assert_eq!(report["solve_trials"], 20);
}

#[test]
fn audio_generate_and_random_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("audio");
    evocaptcha(&["gen", "audio", "--n", "3", "--seed", "1", "--environments", "baseline,gaussian", "--out", s(&data)]);
    assert_eq!(std::fs::read_dir(data.join("audio")).unwrap().count(), 6);
    let md = dir.path().join("random.md");
    evocaptcha(&["eval", "--dataset", s(&data), "--solver", "mock:random:9", "--mode", "audio", "--out", s(&md)]);
    let table = std::fs::read_to_string(&md).unwrap();
    assert!(table.starts_with("| Model | Baseline (%) | Background (%) | Gaussian (%) | Combined (%) |"), "{table}");
}

#[test]
fn rejects_bad_arguments() {
    let bin = env!("CARGO_BIN_EXE_evocaptcha");
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(bin)
        .args(["eval", "--dataset", s(dir.path()), "--solver", "mock:oracle", "--mode", "video", "--out", "x.csv"])
        .output()
        .unwrap();
    assert!(!status.status.success());
    let status = Command::new(bin).args(["gen", "ascii", "--n", "0", "--out", s(dir.path())]).output().unwrap();
    assert!(!status.status.success());
}

#[test]
fn live_plan_projection() {
    let plan = Path::new(env!("CARGO_MANIFEST_DIR")).join("../harness/configs/live_run.toml");
    let dir = tempfile::tempdir().unwrap();
    let out = evocaptcha(&["live", "--plan", s(&plan), "--out", s(dir.path()), "--plan-only"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("projection: generation"), "{text}");
    assert!(text.contains("of 1800 s budget"), "{text}");
}
