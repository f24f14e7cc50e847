use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flexquad"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("flexquad-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn plan_cob_prints_the_collide_profile() {
    let out = bin()
        .args(["plan-cob", "--goal", "4", "--wall", "4", "--a-max", "2", "--v-max", "1.5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("CollideToStop"), "{text}");
    assert!(text.contains("jump"), "{text}");
}

#[test]
fn simulate_then_replay_and_report() {
    let dir = tmp_dir("sim");
    let scenario = dir.join("push.txt");
    std::fs::write(&scenario, "environment = WALL_PUSH\nduration = 2\n").unwrap();

    let out = bin()
        .args(["simulate"])
        .arg(&scenario)
        .args(["--set", "seed=3", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let trace = stdout
        .lines()
        .find_map(|l| l.strip_prefix("trace: "))
        .map(PathBuf::from)
        .expect("trace path in output");
    assert!(trace.is_file());

    let replay = bin().args(["replay-estimate"]).arg(&trace).output().unwrap();
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stderr));

    let report = bin().args(["report"]).arg(&trace).output().unwrap();
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("rows: 200"), "{text}");
}

#[test]
fn unknown_scenario_keys_fail_with_the_line() {
    let dir = tmp_dir("badkey");
    let scenario = dir.join("bad.txt");
    std::fs::write(&scenario, "duration = 2\nnope = 1\n").unwrap();
    let out = bin().args(["simulate"]).arg(&scenario).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn sweep_runs_scenarios_in_parallel() {
    let dir = tmp_dir("sweep");
    let a = dir.join("a.txt");
    let b = dir.join("b.txt");
    std::fs::write(&a, "name = sweep-a\nenvironment = PULLEY_COM\nduration = 1\n").unwrap();
    std::fs::write(&b, "name = sweep-b\nenvironment = PULLEY_COM\nduration = 1\n").unwrap();
    let out = bin()
        .args(["sweep"])
        .arg(&a)
        .arg(&b)
        .args(["--jobs", "2", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("sweep-a_trace.csv").is_file());
    assert!(dir.join("sweep-b_trace.csv").is_file());
}
