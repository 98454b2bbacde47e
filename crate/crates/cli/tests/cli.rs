use std::path::Path;
use std::process::{Command, Output};

fn gridcascade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridcascade"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn powerflow_on_bundled_case() {
    let o = gridcascade(&["powerflow", "ieee14", "--flat-start", "--no-q-limits"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("converged in 4 iterations"), "{text}");
    let bus2 = text
        .lines()
        .find(|l| l.trim_start().starts_with("2 "))
        .unwrap();
    assert!(bus2.contains("1.045000"));
}

#[test]
fn islands_after_outage() {
    let o = gridcascade(&["islands", "ieee14", "--out-lines", "7-8"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("2 island(s)"));
    assert!(text.contains("island 1: 8"));

    let o = gridcascade(&["islands", "ieee14", "--out-lines", "9-14,13-14"]);
    assert!(stdout(&o).contains("island 1: 14"));
}

#[test]
fn config_errors_exit_2() {
    let o = gridcascade(&["islands", "ieee14", "--out-lines", "3-9"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gridcascade(&["powerflow", "/definitely/not/here.m"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gridcascade(&["baseline", "--policy", "median"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let o = gridcascade(&["powerflow", "ieee14", "--flat-start", "--max-iter", "1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn baseline_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridcascade(&[
        "baseline",
        "--policy",
        "max",
        "--episodes",
        "20",
        "--seed",
        "4",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.starts_with("# policy = max\n"));
    assert!(report.contains("# seed.master = 4\n"));
    assert_eq!(report.lines().filter(|l| !l.starts_with('#')).count(), 21);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary
        .starts_with("policy,case,phase,episodes,wins,win_rate,mean_reward\nmax,ieee14,eval,20,"));
    assert!(dir.path().join("ma_reward.csv").exists());
}

#[test]
fn train_then_eval_is_reproducible() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = path(dir.path()).to_string();
        let o = gridcascade(&["train", "--episodes", "15", "--seed", "9", "--out", &out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let ck = dir.path().join("checkpoint.json");
        let eval_out = dir.path().join("eval");
        let o = gridcascade(&[
            "eval",
            "--checkpoint",
            path(&ck),
            "--episodes",
            "30",
            "--seed",
            "9",
            "--out",
            path(&eval_out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        [
            "checkpoint.json",
            "report.csv",
            "eval/report.csv",
            "eval/ma_reward.csv",
            "eval/summary.csv",
        ]
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_on_wrong_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path()).to_string();
    assert!(gridcascade(&["train", "--episodes", "0", "--out", &out])
        .status
        .success());
    let ck = dir.path().join("checkpoint.json");
    let o = gridcascade(&[
        "eval",
        "--checkpoint",
        path(&ck),
        "--env-preset",
        "ieee118",
        "--episodes",
        "2",
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = gridcascade(&[
        "eval",
        "--checkpoint",
        "/no/such/checkpoint.json",
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_env_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.env");
    std::fs::write(&cfg, "stage_max = many\n").unwrap();
    let o = gridcascade(&[
        "baseline",
        "--policy",
        "half",
        "--env-config",
        path(&cfg),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
