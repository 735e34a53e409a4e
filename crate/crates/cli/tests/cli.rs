use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pinlogger"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn pinlogger")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: &str = r#"{"synth": {"n_users": 2, "reps": 3}, "train": {"hidden_dim": 8, "max_epochs": 40}}"#;

#[test]
fn pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.json"), SMALL).unwrap();
    for out in ["a", "b"] {
        let o = run(dir.path(), &["pipeline", "--config", "small.json", "--seed", "5", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("Attempts"));
    }
    for f in ["report.json", "model.json", "features.csv", "report.txt"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "pipeline");
    assert_eq!(manifest["seeds"]["train"], 5);
    assert_eq!(manifest["config"]["synth"]["n_users"], 2);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"seed": 1, "n_users": 3, "reps": 1}"#).unwrap();
    let o = run(dir.path(), &["synth", "--config", "c.json", "--users", "2", "--out", "s"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_dir(dir.path().join("s/sessions")).unwrap().count(), 2);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("s/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["n_users"], 2);
    assert_eq!(manifest["config"]["seed"], 1);
    let pins: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("s/pins.json")).unwrap()).unwrap();
    assert_eq!(pins["pins"].as_array().unwrap().len(), 50);
}

#[test]
fn stepwise_commands_and_label_space_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let steps: [&[&str]; 6] = [
        &["synth", "--seed", "2", "--users", "2", "--reps", "3", "--out", "s"],
        &["ingest", "--sessions", "s/sessions", "--out", "i"],
        &["ingest", "--sessions", "s/sessions", "--mode", "digit10", "--out", "id"],
        &["featurize", "--dataset", "i/dataset.json", "--out", "f"],
        &["featurize", "--dataset", "id/dataset.json", "--out", "fd"],
        &["train", "--features", "f/features.csv", "--seed", "2", "--hidden", "8", "--max-epochs", "40", "--out", "t"],
    ];
    for args in steps {
        let o = run(d, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let out = args[args.len() - 1];
        assert!(d.join(out).join("manifest.json").exists(), "{args:?} wrote no manifest");
    }

    let o = run(d, &["eval", "--model", "t/model.json", "--features", "t/test.csv", "--out", "e"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("test samples: 45"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(d.join("e/report.json")).unwrap()).unwrap();
    assert_eq!(report["n_test"], 45);

    // Digit features scored by a PIN model: labels outside the model's space.
    let o = run(d, &["eval", "--model", "t/model.json", "--features", "fd/features.csv", "--out", "e2"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(d, &["eval", "--model", "t/model.json", "--features", "t/test.csv", "--mode", "digit10", "--out", "e3"]);
    assert_eq!(code(&o), 1);
    let o = run(d, &["eval", "--model", "t/model.json", "--features", "t/test.csv", "--ks", "0", "--out", "e4"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn survey_prints_rho() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("k.csv"), "GPS,Camera,Gyroscope,Light\n5,4,2,1\n5,4,3,1\n4,3,2,1\n").unwrap();
    fs::write(d.join("c.csv"), "GPS,Camera,Gyroscope,Light\n5,4,2,1\n4,4,3,2\n5,3,2,1\n").unwrap();
    let o = run(d, &["survey", "--knowledge", "k.csv", "--concern", "c.csv", "--out", "v"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("rho = 1.000"), "{}", stdout(&o));
    assert!(d.join("v/manifest.json").exists());

    fs::write(d.join("bad.csv"), "GPS,Camera,Gyroscope,Light\n5,4,9,1\n").unwrap();
    let o = run(d, &["survey", "--knowledge", "k.csv", "--concern", "bad.csv", "--out", "v2"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn activity_from_script() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["activity", "--script", "sitting:10,call_event:10,sitting:10", "--seed", "3", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("a/activity.json")).unwrap()).unwrap();
    let events = doc["events"].as_array().unwrap();
    assert_eq!(events.len(), 1);
    assert!((events[0]["start_s"].as_f64().unwrap() - 10.0).abs() <= 0.5);
    assert!((events[0]["end_s"].as_f64().unwrap() - 20.0).abs() <= 0.5);
    assert_eq!(doc["windows"].as_array().unwrap().len(), 27);

    let o = run(dir.path(), &["activity", "--script", "dancing:10", "--out", "b"]);
    assert_eq!(code(&o), 1);
    let o = run(dir.path(), &["activity", "--out", "c"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &["no-such-command"])), 1);
    assert_eq!(code(&run(d, &["--help"])), 0);
    fs::write(d.join("bad.json"), r#"{"n_users": "many"}"#).unwrap();
    assert_eq!(code(&run(d, &["synth", "--config", "bad.json"])), 1);
    assert_eq!(code(&run(d, &["synth", "--users", "0", "--out", "z"])), 1);
    assert_eq!(code(&run(d, &["featurize", "--dataset", "missing.json"])), 2);
    fs::create_dir(d.join("empty")).unwrap();
    assert_eq!(code(&run(d, &["ingest", "--sessions", "empty"])), 1);
    fs::write(d.join("empty/x.jsonl"), "{\"k\":\"s\",\"t\":1}\n").unwrap();
    assert_eq!(code(&run(d, &["ingest", "--sessions", "empty"])), 1);
}

#[test]
fn serve_starts_and_rejects_bad_origin() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(d, &["serve", "--bind", "127.0.0.1:0", "--data-dir", "bad", "--origin", "bad\norigin"]);
    assert_eq!(code(&o), 1);

    let mut child = bin()
        .current_dir(d)
        .args(["serve", "--bind", "127.0.0.1:0", "--data-dir", "data"])
        .spawn()
        .unwrap();
    let manifest = d.join("data/manifest.json");
    let start = Instant::now();
    while !manifest.exists() && start.elapsed() < Duration::from_secs(20) {
        std::thread::sleep(Duration::from_millis(50));
    }
    std::thread::sleep(Duration::from_millis(200));
    let still_running = child.try_wait().unwrap().is_none();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(manifest.exists());
    assert!(still_running);
}
