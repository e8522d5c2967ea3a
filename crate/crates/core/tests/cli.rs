use std::process::Command;

use northrt::harness::{read_records, CSV_HEADER};
use northrt::taskmodel::TaskSet;
use serde_json::Value;

fn northrt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_northrt"))
}

fn gen(dir: &std::path::Path, preset: &str, extra: &[&str]) -> std::path::PathBuf {
    let path = dir.join(format!("{preset}.json"));
    let status = northrt()
        .args(["gen", "--preset", preset, "--seed", "3", "--out"])
        .arg(&path)
        .args(extra)
        .status()
        .unwrap();
    assert!(status.success());
    path
}

fn solve(taskset: &std::path::Path, args: &[&str]) -> Value {
    let out = northrt().arg("solve").arg("--taskset").arg(taskset).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn gen_then_solve_with_each_method() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(dir.path(), "energy-rm", &["--n", "3", "--util", "0.6"]);
    let ts = TaskSet::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(ts.len(), 3);
    let mut finals = Vec::new();
    for method in ["north", "northplus", "sa", "brute"] {
        let v = solve(&path, &["--method", method, "--oracle", "rta", "--resolution", "60"]);
        assert_eq!(v["method"], method);
        assert_eq!(v["feasible"], true);
        assert!(v["obj_final"].as_f64().unwrap() <= v["obj_init"].as_f64().unwrap());
        finals.push(v["obj_final"].as_f64().unwrap());
    }
    // NORTH is within a few percent of the coarse grid.
    assert!(finals[0] <= finals[3] * 1.05, "{finals:?}");
}

#[test]
fn external_oracle_through_a_shell_command() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(dir.path(), "energy-rm", &["--n", "2", "--util", "0.3"]);
    // Schedulable exactly when every frequency is at least 0.7.
    let script = r#"exec:while read x && read p; do echo "$x" | awk '{ok=0; for(i=1;i<=NF;i++) if ($i < 0.7) ok=1; print ok; fflush()}'; done"#;
    let v = solve(&path, &["--method", "north", "--oracle", script]);
    assert_eq!(v["feasible"], true);
    for f in v["x"].as_array().unwrap() {
        let f = f.as_f64().unwrap();
        assert!((0.7..0.71).contains(&f), "{v}");
    }
}

#[test]
fn run_writes_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{ "preset": "energy-rm", "n": [3, 4], "utilization": 0.5, "seeds": { "from": 0, "to": 1 }, "methods": ["north", "sa"], "sa_iterations": 2000 }"#,
    )
    .unwrap();
    let out = dir.path().join("rows.csv");
    let status = northrt().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(read_records(text.as_bytes()).unwrap().len(), 8);
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(dir.path(), "control-dag", &["--n", "2", "--nodes", "1-3"]);
    let out = northrt()
        .arg("solve")
        .arg("--taskset")
        .arg(&path)
        .args(["--method", "north", "--oracle", "sim", "--time-limit", "-1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = northrt().args(["solve", "--taskset", "missing.json", "--method", "north", "--oracle", "rta"]).output().unwrap();
    assert!(!out.status.success());

    let out = northrt().args(["gen", "--preset", "nope", "--seed", "1", "--out", "x.json"]).output().unwrap();
    assert!(!out.status.success());
}
