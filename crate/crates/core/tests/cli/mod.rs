//! Command-line round trips, run inside the acceptance binary so they always execute.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
name = small
n_ue = 6
n_g = 2
constellation = 4
snr_sweep_db = 10, 20
trials = 1
seed = 7
";

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmw-pgp")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("small.conf");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn rerun_is_byte_identical_and_report_reads_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = bin(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (la, lb) = (listing(&a), listing(&b));
    assert!(la.iter().any(|(n, _)| n == "records.csv"));
    assert!(la.iter().any(|(n, _)| n.starts_with("fig_small_G")));
    assert_eq!(la, lb);

    let o = bin(&["report", "--in", a.to_str().unwrap(), "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ZF_PGP"));
}

#[test]
fn seed_override_changes_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(bin(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(bin(&["run", "--config", &cfg, "--seed", "8", "--out", b.to_str().unwrap()]).status.success());
    assert_ne!(fs::read(a.join("records.csv")).unwrap(), fs::read(b.join("records.csv")).unwrap());
}

#[test]
fn empty_sweep_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("snr_sweep_db = 10, 20", "snr_sweep_db ="));
    let o = bin(&["run", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("snr_sweep_db"));
}

#[test]
fn unknown_key_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}bogus = 1\n"));
    let o = bin(&["run", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 8"));
}

#[test]
fn opgpa_sweep_needs_targets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = bin(&["sweep-opgpa", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn missing_records_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin(&["report", "--in", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
}
