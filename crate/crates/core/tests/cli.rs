//! End-to-end runs of the `multisys` binary: exit codes, report contents and
//! the files it writes.

use std::path::Path;
use std::process::Command;

use multisys::germ::{MultiIndex, PolyGerm};
use multisys::io::{read_chain, read_system, read_tail, write_germ, write_system};
use multisys::linalg::{c64, identity, op_norm, ComplexMatrix};
use multisys::system::{random_conservative, MultiSystem};
use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_multisys"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run multisys");
    let code = out.status.code().unwrap_or(-1);
    let report = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (code, report)
}

fn verdict<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|v| v["name"] == name)
        .unwrap_or_else(|| panic!("no verdict {name} in {report}"))
}

fn residual(report: &Value, name: &str) -> f64 {
    verdict(report, name)["value"].as_f64().unwrap()
}

#[test]
fn generated_system_is_conservative() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (code, _) = run(
        d,
        &["generate", "conservative", "--n-params", "2", "--dim-x", "3", "--dim-u", "2", "--dim-y", "2", "--seed", "1", "--out", "s.json"],
    );
    assert_eq!(code, 0);
    let s = read_system(&d.join("s.json")).unwrap();
    assert_eq!((s.n_params, s.dim_x, s.dim_u, s.dim_y), (2, 3, 2, 2));
    let (code, report) = run(d, &["check", "conservative", "s.json"]);
    assert_eq!(code, 0);
    assert_eq!(verdict(&report, "conservative")["passed"], true);
    assert!(report["timing_ms"].is_number());
}

#[test]
fn scaled_system_fails_dissipativity_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let s = random_conservative(2, 2, 1, 1, 5).unwrap().scaled(2.0);
    write_system(&dir.path().join("s.json"), &s).unwrap();
    let (code, report) = run(dir.path(), &["check", "dissipative", "s.json"]);
    assert_eq!(code, 2);
    let v = verdict(&report, "dissipative");
    assert_eq!(v["passed"], false);
    assert_eq!(v["witness"].as_array().unwrap().len(), 2);
}

#[test]
fn multiplicity_beyond_cap_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = PolyGerm::new(1, 1, 1);
    g.insert(MultiIndex::new(vec![7]), identity(1)).unwrap();
    write_germ(&dir.path().join("g.json"), &g).unwrap();
    let (code, _) = run(dir.path(), &["generate", "germ-realization", "--germ", "g.json", "--out", "s.json"]);
    assert_eq!(code, 0);
    let (code, _) = run(dir.path(), &["check", "multiplicity", "s.json", "--degree-cap", "5"]);
    assert_eq!(code, 2);
    let (code, report) = run(dir.path(), &["check", "multiplicity", "s.json", "--degree-cap", "9"]);
    assert_eq!(code, 0);
    assert_eq!(report["values"]["multiplicity"], 7);
}

#[test]
fn cascade_then_factor_left() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a2 = random_conservative(2, 0, 2, 2, 11).unwrap();
    let a1 = random_conservative(2, 0, 2, 2, 12).unwrap();
    write_system(&d.join("a2.json"), &a2).unwrap();
    write_system(&d.join("a1.json"), &a1).unwrap();
    let (code, _) = run(d, &["cascade", "a2.json", "a1.json", "--out", "s.json"]);
    assert_eq!(code, 0);
    let (code, report) = run(d, &["factor", "left", "s.json", "--out-dir", "f"]);
    assert_eq!(code, 0);
    assert!(residual(&report, "reconstruction") < 1e-12);
    let chain = read_chain(&d.join("f/chain.json")).unwrap();
    let tail = read_tail(&d.join("f/tail.json")).unwrap();
    let s: MultiSystem = read_system(&d.join("s.json")).unwrap();
    let z = [c64(0.3, -0.1), c64(-0.2, 0.25)];
    let gap: ComplexMatrix = s.transfer_eval(&z).unwrap() - chain.eval(&z).unwrap() * tail.eval(&z).unwrap();
    assert!(op_norm(&gap) < 1e-12);
}

#[test]
fn decompose_along_cascade_split() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_system(&d.join("a2.json"), &random_conservative(1, 3, 2, 2, 21).unwrap()).unwrap();
    write_system(&d.join("a1.json"), &random_conservative(1, 2, 2, 2, 22).unwrap()).unwrap();
    let (code, _) = run(d, &["cascade", "a2.json", "a1.json", "--out", "s.json", "--x2-out", "x2.json"]);
    assert_eq!(code, 0);
    let (code, report) = run(d, &["decompose", "s.json", "x2.json", "--out-dir", "dec"]);
    assert_eq!(code, 0);
    assert!(residual(&report, "reassembly") < 1e-9);
    assert!(residual(&report, "transfer_product") < 1e-9);
    for f in ["alpha2", "alpha1", "intermediate", "x2", "x1"] {
        assert!(d.join(format!("dec/{f}.json")).exists(), "{f}");
    }
}

#[test]
fn problem2_rejects_nonzero_d() {
    let dir = tempfile::tempdir().unwrap();
    write_system(&dir.path().join("s.json"), &random_conservative(2, 2, 1, 1, 3).unwrap()).unwrap();
    let (code, _) = run(dir.path(), &["factor", "problem2", "s.json", "--out-dir", "out"]);
    assert_eq!(code, 1);
}

#[test]
fn germ_realization_of_product_monomial() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut g = PolyGerm::new(2, 1, 1);
    g.insert(MultiIndex::new(vec![1, 1]), identity(1)).unwrap();
    write_germ(&d.join("g.json"), &g).unwrap();
    let (code, report) = run(d, &["generate", "germ-realization", "--germ", "g.json", "--out", "s.json"]);
    assert_eq!(code, 0);
    assert!(residual(&report, "expansion_matches_germ") < 1e-12);
    let s = read_system(&d.join("s.json")).unwrap();
    let z = [c64(0.5, 0.0), c64(0.0, 0.4)];
    assert!((s.transfer_eval(&z).unwrap()[(0, 0)] - z[0] * z[1]).norm() < 1e-12);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["check", "conservative", "missing.json"]).0, 1);
    assert_eq!(run(dir.path(), &["frobnicate"]).0, 1);
    assert_eq!(run(dir.path(), &["agler", "x.json", "--r", "not-a-number"]).0, 1);
    assert_eq!(run(dir.path(), &["--help"]).0, 0);
}
