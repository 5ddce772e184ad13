use std::fs;
use std::path::Path;
use std::process::Command;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, body).unwrap();
    path
}

fn solver(args: &[&str], cfg: &Path, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_solver"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

const SMALL: &str = "\
[system]
n_atoms = 4
n_points = 64
length = 14
lambda_a = 0.1
lambda_m = 0.05
lambda_am = 0.02
lambda_con = 0.2

[integrator]
dt = 0.005
t_final = 0.2
record_every = 10
density_every = 20
";

#[test]
fn propagate_writes_observables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("prop");
    let res = solver(&["propagate"], &cfg, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let obs = fs::read_to_string(out.join("observables.csv")).unwrap();
    assert!(obs.starts_with('#'));
    assert!(obs.contains("lambda_con = 0.2"));
    let rows: Vec<&str> = obs.lines().filter(|l| !l.starts_with('#')).collect();
    // header plus records at steps 0, 10, 20, 30, 40
    assert_eq!(rows.len(), 6, "{obs}");
    assert!(out.join("final_state.json").exists());
    assert!(out.join("rdms.json").exists());
    assert!(out.join("density_a_20.csv").exists());
    let state: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("final_state.json")).unwrap()).unwrap();
    assert!(state.get("config").is_some());
}

#[test]
fn relax_then_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("relax");
    let res = solver(&["relax"], &cfg, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["convergence.csv", "final_state.json", "rdms.json", "basis.txt", "hamiltonian.txt"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let restart = format!(
        "{SMALL}\n[initial]\nrestart = {}\n",
        out.join("final_state.json").display()
    );
    let cfg2 = dir.path().join("restart.cfg");
    fs::write(&cfg2, restart).unwrap();
    let out2 = dir.path().join("again");
    let res = solver(&["propagate"], &cfg2, &out2);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    // A stationary state keeps its molecule number.
    let obs = fs::read_to_string(out2.join("observables.csv")).unwrap();
    let rows: Vec<Vec<f64>> = obs
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let first = rows.first().unwrap()[3];
    let last = rows.last().unwrap()[3];
    assert!((first - last).abs() < 1e-6, "{first} vs {last}");
}

#[test]
fn validate_reports_all_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("val");
    let res = solver(&["validate"], &cfg, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    let report = fs::read_to_string(out.join("validation.txt")).unwrap();
    assert!(report.contains("PASS"));
    assert!(!report.contains("FAIL"), "{report}");
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[system]\nn_atoms = 4\nbogus = 1\n");
    let res = solver(&["propagate"], &cfg, dir.path());
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("bogus") && err.contains("line 3"), "{err}");
}
