use std::path::Path;
use std::process::{Command, Output};

use hycomm_core::{ReplayDump, Scenario};

fn hycomm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hycomm"))
        .args(args)
        .env_remove("HYCOMM_SEED")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
  "n_trials": 6,
  "strategies": ["no_collab", "late_all", "hycomm"],
  "budgets_floats": [100, 1000]
}"#;

#[test]
fn print_default_config_is_a_loadable_config() {
    let out = hycomm(&["--print-default-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = hycomm_core::ExperimentConfig::from_json(&text).unwrap();
    assert_eq!(cfg, hycomm_core::ExperimentConfig::default());
}

#[test]
fn gen_writes_a_scenario_that_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", "{}");
    let out_path = dir.path().join("scene.json");
    let out = hycomm(&["gen", "--config", &cfg, "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let scenario = Scenario::from_json(&text).unwrap();
    assert_eq!(scenario.objects.len(), 30);
    assert_eq!(Scenario::from_json(&scenario.to_json()).unwrap(), scenario);
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"world": {"n_agents": "three"}}"#);
    let out = hycomm(&["gen", "--config", &cfg, "--out", dir.path().join("x.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("world.n_agents"), "{err}");

    let cfg = write_config(dir.path(), "typo.json", r#"{"budgets": [1, 2]}"#);
    let out = hycomm(&["sweep", "--config", &cfg, "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budgets"));
}

#[test]
fn over_dense_world_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dense.json",
        r#"{"world": {"x_range": [-10, 10], "y_range": [-10, 10], "n_objects": [200, 200]}}"#,
    );
    let out = hycomm(&["gen", "--config", &cfg, "--out", dir.path().join("x.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too dense"));
}

#[test]
fn sweep_csv_is_parseable_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let svg = dir.path().join("a.svg");
    let out = hycomm(&["sweep", "--config", &cfg, "--out", a.to_str().unwrap(), "--svg", svg.to_str().unwrap(), "--jobs", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = hycomm(&["sweep", "--config", &cfg, "--out", b.to_str().unwrap(), "--jobs", "3"]);
    assert!(out.status.success());
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.join(","), hycomm_core::experiment::CSV_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    let no_collab: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[0] == "no_collab").collect();
    assert_eq!(no_collab.len(), 2);
    let ap_columns = |r: &csv::StringRecord| r.iter().skip(3).take(6).map(String::from).collect::<Vec<_>>();
    assert_eq!(ap_columns(no_collab[0]), ap_columns(no_collab[1]));
    assert!(rows.iter().all(|r| &r[9] == "6" && &r[10] == "2024"));
}

#[test]
fn seed_env_var_overrides_master_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let out_path = dir.path().join("seeded.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_hycomm"))
        .args(["sweep", "--config", &cfg, "--out", out_path.to_str().unwrap()])
        .env("HYCOMM_SEED", "77")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",77")));

    let out = Command::new(env!("CARGO_BIN_EXE_hycomm"))
        .args(["sweep", "--config", &cfg, "--out", out_path.to_str().unwrap()])
        .env("HYCOMM_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

fn replay(scene: &Path, strategy: &str, budget: u64) -> ReplayDump {
    let out = hycomm(&["replay", "--scenario", scene.to_str().unwrap(), "--strategy", strategy, "--budget", &budget.to_string(), "--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn replay_examples() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    assert!(hycomm(&["gen", "--out", scene.to_str().unwrap()]).status.success());

    let solo = replay(&scene, "no_collab", 800);
    assert!(solo.messages.is_empty());
    assert_eq!(solo.before, solo.after);

    let starved = replay(&scene, "hycomm", 0);
    assert_eq!(starved.after, solo.after);
    assert_eq!(starved.ap_after, solo.ap_after);
    assert_eq!(starved.volume.payload_bytes, 0);

    let scenario = Scenario::from_json(&std::fs::read_to_string(&scene).unwrap()).unwrap();
    let rich = replay(&scene, "hycomm", 1_000_000);
    assert_eq!(rich.messages.len(), scenario.neighbors[0].len());
    let trial = hycomm_core::Trial::new(scenario, &[hycomm_core::DetectorProfile::default()]).unwrap();
    for m in &rich.messages {
        assert_eq!(m.n_boxes, trial.local[m.sender].len());
        assert_eq!(m.n_points, trial.clouds[m.sender].len());
        assert_eq!(m.frame_bytes as u64, 26 + m.payload_bytes);
    }
}

#[test]
fn replay_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    std::fs::write(&scene, r#"{"seed": 1, "objects": [], "agents": [], "neighbors": []}"#).unwrap();
    let out = hycomm(&["replay", "--scenario", scene.to_str().unwrap(), "--strategy", "hycomm", "--budget", "10"]);
    assert_eq!(out.status.code(), Some(2));

    assert!(hycomm(&["gen", "--out", scene.to_str().unwrap()]).status.success());
    let out = hycomm(&["replay", "--scenario", scene.to_str().unwrap(), "--strategy", "telepathy", "--budget", "10"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn default_replay_reproduces_the_first_sweep_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "one.json", r#"{"n_trials": 1, "strategies": ["hycomm"], "budgets_floats": [800]}"#);
    let csv_path = dir.path().join("one.csv");
    let scene = dir.path().join("scene.json");
    assert!(hycomm(&["sweep", "--config", &cfg, "--out", csv_path.to_str().unwrap()]).status.success());
    assert!(hycomm(&["gen", "--config", &cfg, "--out", scene.to_str().unwrap()]).status.success());
    let out = hycomm(&["replay", "--config", &cfg, "--scenario", scene.to_str().unwrap(), "--strategy", "hycomm", "--budget", "800"]);
    assert!(out.status.success());
    let dump: ReplayDump = serde_json::from_slice(&out.stdout).unwrap();

    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let row = reader.records().next().unwrap().unwrap();
    let ap: Vec<f64> = (3..6).map(|i| row[i].parse().unwrap()).collect();
    for (got, want) in dump.ap_after.as_array().iter().zip(&ap) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
    assert!((dump.volume.log2_bytes - row[2].parse::<f64>().unwrap()).abs() < 1e-6);
}
