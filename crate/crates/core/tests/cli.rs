use std::process::Command;

fn cfmimo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cfmimo"))
}

#[test]
fn nmse_sweep_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nmse.csv");
    let summary = dir.path().join("summary.csv");
    let status = cfmimo()
        .args(["nmse-sweep", "--trials", "2", "--ues", "2,3", "--taus", "2", "--set", "num_aps=8"])
        .arg("--out")
        .arg(&out)
        .arg("--summary")
        .arg(&summary)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# config_sha256="));
    // comment, header and 2 UE counts x 4 strategies x 2 trials
    assert_eq!(text.lines().count(), 2 + 16);
    assert_eq!(std::fs::read_to_string(&summary).unwrap().lines().count(), 2 + 8);
}

#[test]
fn single_run_prints_key_values() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = cfmimo()
        .args(["single-run", "--seed", "4", "--set", "num_aps=16", "--set", "num_dl=3", "--set", "num_ul=3"])
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("feasible = "));
    assert!(text.contains("f_se_bits = "));
    let trace = std::fs::read_to_string(&trace).unwrap();
    assert!(trace.lines().count() >= 2);
}

#[test]
fn config_file_and_bad_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "num_aps = 16\nnum_dl = 2\nnum_ul = 2\n").unwrap();
    let out = dir.path().join("map.csv");
    let status = cfmimo()
        .arg("service-map")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 2 + 16 + 2 + 32);

    let bad = cfmimo().args(["single-run", "--set", "num_aps"]).output().unwrap();
    assert!(!bad.status.success());
    let bad = cfmimo().args(["single-run", "--scheme", "bogus"]).output().unwrap();
    assert!(!bad.status.success());
}
