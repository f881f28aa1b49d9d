use std::fs;
use std::process::Command;

fn oocsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oocsim"))
}

const CONFIG: &str = "# small lossy run
scheme = ooc2
window = 4
packets = 40
forced_drops = 3:1, 10:1
";

#[test]
fn run_writes_metrics_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, CONFIG).unwrap();
    let (m, t) = (dir.path().join("m.csv"), dir.path().join("t.csv"));
    let status = oocsim()
        .args(["run", "--scheme", "ooc4", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&m)
        .arg("--trace")
        .arg(&t)
        .status()
        .unwrap();
    assert!(status.success());
    let metrics = fs::read_to_string(&m).unwrap();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..5], ["ooc4", "3", row[2], "40", "true"]);
    let trace = fs::read_to_string(&t).unwrap();
    assert!(trace.starts_with("time_ms,node,event,seq,attempt,detail,scheme\n"));
    assert!(trace.lines().skip(1).all(|l| l.ends_with(",ooc4")));
}

#[test]
fn run_prints_metrics_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, CONFIG).unwrap();
    let out = oocsim()
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("ooc2,1,"));
}

#[test]
fn compare_emits_one_row_per_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, CONFIG).unwrap();
    let table = dir.path().join("table.csv");
    let status = oocsim()
        .args(["compare", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&table)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&table).unwrap();
    let schemes: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(schemes, ["ooc1", "ooc2", "ooc3", "ooc4"]);
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "window = 0\n").unwrap();
    let out = oocsim()
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("window"));

    fs::write(&cfg, "windw = 3\n").unwrap();
    let out = oocsim()
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("windw"));
}

#[test]
fn canned_experiments_pass() {
    for which in ["figure1", "forced-timeouts", "light-load", "congestion"] {
        let out = oocsim().args(["paper", which]).output().unwrap();
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(out.status.success(), "{which}:\n{text}");
        assert!(
            !text.is_empty() && text.lines().all(|l| l.starts_with("PASS ")),
            "{which}:\n{text}"
        );
    }
}
