use std::path::Path;
use std::process::{Command, Output};

const SMALL_FV: &str = r#"
name = "small_fv"
experiment = "fv-run"
seed = 5

[domain]
type = "interval"
lower = 0.0
upper = 1.0

[model]
name = "brownian"

[params]
n = 300
dt = 1e-3
t_end = 0.5
checkpoints = [0.25]
bins = 20
oracle = "interval_ground_state"
"#;

fn qsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsd")).args(args).output().unwrap()
}

fn write_scenario(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL_FV);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let out_a = qsd(&["--workers", "1", "run", "--scenario", &scenario, "--out", a.to_str().unwrap()]);
    let out_b = qsd(&["--workers", "3", "run", "--scenario", &scenario, "--out", b.to_str().unwrap()]);
    assert!(out_a.status.success(), "{}", String::from_utf8_lossy(&out_a.stderr));
    assert!(out_b.status.success());
    let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    assert!(fa.iter().any(|(n, _)| n == "checkpoints.csv"));
    assert!(fa.iter().any(|(n, _)| n == "rebirths_n300.csv"));
    assert_eq!(fa, fb);
    for (name, bytes) in &fa {
        assert!(!bytes.contains(&b'\r'), "{name} has CR line endings");
    }
}

#[test]
fn seed_flag_overrides_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL_FV);
    let run = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        assert!(qsd(&["run", "--scenario", &scenario, "--seed", seed, "--out", out.to_str().unwrap()]).status.success());
        std::fs::read(out.join("checkpoints.csv")).unwrap()
    };
    assert_eq!(run("5", "x"), run("5", "y"));
    assert_ne!(run("5", "x"), run("6", "z"));
}

#[test]
fn errors_are_reported_as_json() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), &SMALL_FV.replace("dt = 1e-3", "dt = -1.0"));
    let out = qsd(&["run", "--scenario", &scenario, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let body: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    let text = format!("{} {}", body["error"], body["causes"]);
    assert!(text.contains("dt"), "{text}");

    let missing = qsd(&["check", "--scenario", tmp.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(serde_json::from_slice::<serde_json::Value>(&missing.stderr).is_ok());
}

#[test]
fn zero_workers_is_a_usage_error() {
    assert_eq!(qsd(&["--workers", "0", "list-models"]).status.code(), Some(2));
}

#[test]
fn model_commands() {
    let list = qsd(&["list-models"]);
    let text = String::from_utf8(list.stdout).unwrap();
    for name in ["brownian", "brownian_softkill", "remark1_1", "remark1_2", "remark1_3", "remark1_4"] {
        assert!(text.contains(name), "{text}");
    }
    assert!(qsd(&["describe", "remark1_3"]).status.success());
    assert_eq!(qsd(&["describe", "nonexistent"]).status.code(), Some(1));

    let tmp = tempfile::tempdir().unwrap();
    let out = qsd(&["check-model", "remark1_4", "--samples", "2000", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn bundled_scenarios_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let out = qsd(&["check", "--scenario", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        count += 1;
    }
    assert_eq!(count, 10);
}
