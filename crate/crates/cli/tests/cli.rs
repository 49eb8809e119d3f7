use std::fs;
use std::process::Command;

fn fairdrift() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairdrift"))
}

const TINY: [&str; 16] = [
    "--scenario", "none", "--clients", "3", "--timesteps", "3", "--rounds", "1", "--epochs", "1",
    "--size", "30", "--hidden", "4", "--seeds", "2",
];

#[test]
fn run_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = fairdrift()
        .args(TINY)
        .args(["--algorithm", "fairfeddrift", "--delta", "0.5,1.0", "--window", "full,2"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["records.csv", "assignments.csv", "counters.json", "summary.csv", "summary_pooled.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let before = fs::read(out.join("summary.csv")).unwrap();
    let again = fairdrift().arg("summarize").arg(&out).output().unwrap();
    assert!(again.status.success());
    assert_eq!(fs::read(out.join("summary.csv")).unwrap(), before);
    assert!(String::from_utf8_lossy(&again.stdout).contains("fairfeddrift"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "algorithm = oracle\nscenario = none\nclients = 3\ntimesteps = 3\nrounds = 1\nepochs = 1\nsize = 30\nhidden = 4\nseeds = 1\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let res = fairdrift()
        .arg("--config")
        .arg(&cfg)
        .args(["--algorithm", "fedavg"])
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let records = fs::read_to_string(out.join("records.csv")).unwrap();
    assert!(records.lines().skip(1).all(|l| l.split(',').nth(1) == Some("fedavg")));
    assert_eq!(records.lines().count(), 1 + 9);
}

#[test]
fn bad_values_fail_with_named_errors() {
    let dir = tempfile::tempdir().unwrap();
    for (flag, value, needle) in [
        ("--alpha", "0", "alpha"),
        ("--scenario", "4.9", "scenario"),
        ("--window", "0", "window"),
    ] {
        let res = fairdrift()
            .args(TINY)
            .args([flag, value])
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(!res.status.success());
        let err = String::from_utf8_lossy(&res.stderr);
        assert!(err.contains(needle), "{flag}: {err}");
    }
    let res = fairdrift().args(["--dataset", "idx"]).output().unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("idx_images"));
}

#[test]
fn missing_idx_file_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let res = fairdrift()
        .args(["--dataset", "idx", "--scenario", "none", "--clients", "1", "--timesteps", "1"])
        .arg("--idx-images")
        .arg(dir.path().join("nope-images"))
        .arg("--idx-labels")
        .arg(dir.path().join("nope-labels"))
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("nope-images"));
}
