use std::fs;
use std::path::Path;
use std::process::Command;

fn sbsde() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sbsde"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

#[test]
fn experiment_then_report() {
    let out = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/oracle_table.toml");
    let status = sbsde().arg("--out").arg(out.path()).arg("experiment").arg(&config).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let run = out.path().join("oracle-table");
    let summary = fs::read_to_string(run.join("summary.csv")).unwrap();
    assert!(summary.starts_with("k,y0,stderr,oracle,oracle_source,rel_error,c_hat\n"));
    assert!(summary.contains("inf,1.31102877714"));
    let meta = fs::read_to_string(run.join("meta.txt")).unwrap();
    assert!(meta.contains("kind = oracle-table") && meta.contains("[config]"));

    let status = sbsde().arg("report").arg(&run).output().unwrap();
    assert!(status.status.success());
    assert!(run.join("plot/ladder.dat").is_file());
    assert!(run.join("plot/profile_inf.dat").is_file());
}

#[test]
fn output_root_from_environment() {
    let out = tempfile::tempdir().unwrap();
    let status = sbsde().env("SBSDE_OUT", out.path()).args(["pde", "--m", "99"]).output().unwrap();
    assert!(status.status.success());
    let text = fs::read_to_string(out.path().join("pde.dat")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 101);
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "kind = \"oracle-table\"\nq = 3\nqq = 3\n").unwrap();
    let status = sbsde().arg("--out").arg(dir.path()).arg("experiment").arg(&path).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    let err = String::from_utf8_lossy(&status.stderr);
    assert!(err.contains("line 3") && err.contains("`qq`"), "{err}");
}

#[test]
fn failing_check_sets_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coarse.toml");
    // m = 7 is far too coarse for the 1e-3 grid error check.
    fs::write(&path, "kind = \"pde-crosscheck\"\nq = 3\nm = 7\n").unwrap();
    let status = sbsde().arg("--out").arg(dir.path()).arg("experiment").arg(&path).output().unwrap();
    assert_eq!(status.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&status.stdout).contains("FAIL fd_max_error"));
}

#[test]
fn simulate_dumps_bundle() {
    let out = tempfile::tempdir().unwrap();
    let status = sbsde()
        .arg("--out")
        .arg(out.path())
        .args(["--seed", "3", "simulate", "--n-paths", "50", "--n-steps", "20", "--t-max", "4"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let bytes = fs::read(out.path().join("bundle.bin")).unwrap();
    let bundle = singular_bsde::bundle_io::read_bundle(&mut bytes.as_slice()).unwrap();
    assert_eq!(bundle.n_paths(), 50);
    assert_eq!(bundle.seed(), 3);
}
