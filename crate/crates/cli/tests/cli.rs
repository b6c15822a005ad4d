use std::process::Command;

fn pointloc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pointloc")).args(args).env_remove("POINTLOC_SEED").output().unwrap()
}

#[test]
fn gen_then_locate() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let labels = dir.path().join("labels.json");
    let out =
        pointloc(&["gen", "--family", "on-hyperplane-mix", "--d", "3", "--n", "30", "--out", inst.to_str().unwrap()]);
    assert!(out.status.success());
    let out = pointloc(&["locate", "--input", inst.to_str().unwrap(), "--out", labels.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["errors_vs_truth"], 0);
    let l: Vec<i8> = serde_json::from_str(&std::fs::read_to_string(labels).unwrap()).unwrap();
    assert_eq!(l.len(), 30);
    assert_eq!(l.iter().filter(|&&x| x == 0).count(), 3);
}

#[test]
fn seed_controls_output() {
    let a = pointloc(&["gen", "--d", "2", "--n", "5", "--seed", "7"]);
    let b = pointloc(&["gen", "--d", "2", "--n", "5", "--seed", "7"]);
    let c = Command::new(env!("CARGO_BIN_EXE_pointloc"))
        .args(["gen", "--d", "2", "--n", "5"])
        .env("POINTLOC_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert_ne!(a.stdout, pointloc(&["gen", "--d", "2", "--n", "5", "--seed", "8"]).stdout);
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = pointloc(&[
        "bench",
        "--mode",
        "zero",
        "--d",
        "2,3",
        "--n",
        "20",
        "--trials",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trials.csv", "summary.csv", "report.json"] {
        assert!(dir.path().join(f).exists());
    }
    assert_eq!(std::fs::read_to_string(dir.path().join("trials.csv")).unwrap().lines().count(), 5);
}

#[test]
fn config_errors_exit_two() {
    assert_eq!(pointloc(&["locate", "--d", "0"]).status.code(), Some(2));
    assert_eq!(pointloc(&["gen", "--family", "nope"]).status.code(), Some(2));
    assert_eq!(pointloc(&["active", "--epsilon", "2"]).status.code(), Some(2));
    assert_eq!(pointloc(&["locate", "--input", "/nonexistent/x.json"]).status.code(), Some(2));
    assert_eq!(pointloc(&[]).status.code(), Some(2));
}
