use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
# quick run
nx = 16
ny = 16
t_end = 0.02
diag_interval = 0.005
snapshot_interval = 0.01
mt_count = 40
eps_list = 0.4, 0.2
";

fn chns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chns"))
        .args(args)
        .output()
        .expect("run chns")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn report_on_empty_dir() {
    let tmp = TempDir::new().unwrap();
    let o = chns(&["report", path(tmp.path())]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("no results found"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let bad = write_config(tmp.path(), "bad.conf", "nx = -4\n");
    let o = chns(&["simulate", &bad]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));

    let unknown = write_config(tmp.path(), "unknown.conf", "nx = 16\nfoo = 1\n");
    assert_eq!(code(&chns(&["mt-check", &unknown])), 2);

    let missing = tmp.path().join("nope.conf");
    assert_eq!(code(&chns(&["eps-study", path(&missing)])), 2);
}

#[test]
fn simulate_writes_outputs_and_report_summarizes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.conf", SMALL);
    let out = tmp.path().join("out");
    let o = chns(&["simulate", &cfg, "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["diagnostics.csv", "report.txt", "manifest.txt", "run-config.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(out.join("snapshots/snap_00000_n.bin").is_file());
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("status complete"));
    assert_eq!(manifest.lines().filter(|l| l.starts_with("snapshot ")).count(), 3);

    let r = chns(&["report", path(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.contains("[Mass conservation]"));
    assert!(text.contains("[Entropy bound (n log n)]"));
    assert!(text.contains("Overall: PASS"));
}

#[test]
fn repeated_simulations_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.conf", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        // same calibration file in both, so only the run itself is compared
        fs::create_dir_all(d).unwrap();
        assert_eq!(code(&chns(&["mt-check", &cfg, "--out", path(d)])), 0);
        assert_eq!(code(&chns(&["simulate", &cfg, "--out", path(d)])), 0);
    }
    for f in [
        "diagnostics.csv",
        "report.txt",
        "mt-calibration.txt",
        "manifest.txt",
        "snapshots/snap_00002_u.bin",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn weak_check_rejects_foreign_trajectory() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.conf", SMALL);
    let other = write_config(tmp.path(), "other.conf", &format!("{SMALL}theta = 1\n"));
    let out = tmp.path().join("out");
    assert_eq!(code(&chns(&["simulate", &cfg, "--out", path(&out)])), 0);
    let o = chns(&["weak-check", &other, path(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("different configuration"));
    // 16 cells cannot be coarsened twice
    let o = chns(&["weak-check", &cfg, path(&out), "--out", path(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn weak_check_on_short_default_grid_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "w.conf",
        "t_end = 0.02\nsnapshot_interval = 0.005\ndiag_interval = 0.005\nmt_count = 40\n",
    );
    let out = tmp.path().join("out");
    assert_eq!(code(&chns(&["mt-check", &cfg, "--out", path(&out)])), 0);
    assert_eq!(code(&chns(&["simulate", &cfg, "--out", path(&out)])), 0);
    let o = chns(&["weak-check", &cfg, path(&out), "--out", path(&out)]);
    let csv = fs::read_to_string(out.join("weakform.csv")).unwrap();
    let failed = csv.lines().any(|l| l.ends_with(",FAIL"));
    assert_eq!(code(&o), if failed { 1 } else { 0 }, "{}", stderr(&o));
    for kind in ["residual_c", "residual_u", "gap_ln_n", "gap_ln_n_shrink"] {
        assert!(csv.contains(&format!(",{kind},")), "{kind}");
    }
    let r = chns(&["report", path(&out)]);
    assert!(String::from_utf8_lossy(&r.stdout).contains("[Generalized solution: weak-form identities]"));
}

#[test]
fn eps_study_writes_table_and_members() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.conf", SMALL);
    let out = tmp.path().join("out");
    let o = chns(&["eps-study", &cfg, "--out", path(&out)]);
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("eps-study.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().last().unwrap().starts_with("uniform_integrability,"));
    let members = fs::read_to_string(out.join("eps-study-members.txt")).unwrap();
    assert_eq!(members.matches("## eps = ").count(), 2);
    let r = chns(&["report", path(&out)]);
    assert_eq!(code(&r), code(&o));
    assert!(String::from_utf8_lossy(&r.stdout).contains("[Regularization family]"));
}
