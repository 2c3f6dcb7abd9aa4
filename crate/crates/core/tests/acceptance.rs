//! Acceptance suite: ten end-to-end criteria, each printed as one PASS/FAIL
//! line. Runs without the libtest harness so the lines always appear.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use multisys::agler::agler_test;
use multisys::cascade::{cascade, check_condition_i, check_condition_ii, closcon_property_check, decompose};
use multisys::factorization::{
    factor_homogeneous, factor_left, factor_right, from_factorization, invariant_subspace_candidates,
    multiplicity, solve_problem2, Multiplicity,
};
use multisys::germ::{indices_of_degree, realize_germ, PolyGerm};
use multisys::linalg::{c64, op_norm, ComplexMatrix};
use multisys::subspace::Subspace;
use multisys::system::{random_conservative, MultiSystem};
use rand::Rng;

use common::{gaussian, neumann_transfer, polydisk_point, rng, sampled_condition_ii, torus_point, torus_unitary};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Random conservative system with `N ∈ 1..=3`, `dim_x ∈ 0..=max_x`,
/// `dim_u = dim_y ∈ 1..=max_u`.
fn random_dims_conservative(seed: u64, max_x: usize, max_u: usize) -> MultiSystem {
    let mut r = rng(seed ^ 0x5eed);
    let n = r.random_range(1..=3);
    let dx = r.random_range(0..=max_x);
    let du = r.random_range(1..=max_u);
    random_conservative(n, dx, du, du, seed).unwrap()
}

/// Random conservative pair whose middle spaces match.
fn random_pair(seed: u64) -> (MultiSystem, MultiSystem) {
    let mut r = rng(seed ^ 0xfa17);
    let n = r.random_range(1..=3);
    let dv = r.random_range(1..=3);
    let a2 = random_conservative(n, r.random_range(0..=4), dv, dv, seed).unwrap();
    let a1 = random_conservative(n, r.random_range(0..=4), dv, dv, seed + 7_777).unwrap();
    (a2, a1)
}

fn perturbed(s: &MultiSystem, seed: u64) -> MultiSystem {
    let mut r = rng(seed);
    let mut p = s.clone();
    for k in 0..s.n_params {
        p.a[k] += gaussian(s.dim_x, s.dim_x, &mut r) * c64(1e-3, 0.0);
        p.b[k] += gaussian(s.dim_x, s.dim_u, &mut r) * c64(1e-3, 0.0);
        p.c[k] += gaussian(s.dim_y, s.dim_x, &mut r) * c64(1e-3, 0.0);
        p.d[k] += gaussian(s.dim_y, s.dim_u, &mut r) * c64(1e-3, 0.0);
    }
    p
}

fn criterion_1() -> Outcome {
    let mut mismatches = 0;
    let mut conservative = 0;
    for i in 0..200u64 {
        let base = random_dims_conservative(i, 6, 3);
        let s = if i % 2 == 0 { base } else { perturbed(&base, i) };
        let algebraic = s.is_conservative(1e-9).is_conservative();
        let sampled = torus_unitary(&s, 100, 1e-8, 1_000 + i);
        if algebraic != sampled {
            mismatches += 1;
        }
        conservative += algebraic as usize;
    }
    outcome(
        mismatches == 0,
        format!("200 systems, {conservative} conservative, {mismatches} disagreements with the torus oracle"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let (a2, a1) = random_pair(i);
        let s = cascade(&a2, &a1).unwrap();
        let mut r = rng(i);
        for _ in 0..20 {
            let z = polydisk_point(s.n_params, 0.5, &mut r);
            let lhs = neumann_transfer(&s, &z, 80);
            let rhs = neumann_transfer(&a2, &z, 80) * neumann_transfer(&a1, &z, 80);
            worst = worst.max(op_norm(&(lhs - rhs)));
        }
    }
    outcome(worst < 1e-9, format!("max product residual {worst:.2e} (bound 1e-9)"))
}

fn criterion_3() -> Outcome {
    let (mut worst_tf, mut worst_pencil): (f64, f64) = (0.0, 0.0);
    for i in 0..100u64 {
        let (b2, b1) = random_pair(100 + i);
        let s = cascade(&b2, &b1).unwrap();
        let dec = decompose(&s, &Subspace::coordinate(s.dim_x, 0..b2.dim_x)).unwrap();
        // the split is unique up to a unitary W on the intermediate space
        let w: ComplexMatrix = dec.intermediate.basis().rows(b2.dim_x, b2.dim_u).into_owned();
        let mut r = rng(i);
        for _ in 0..20 {
            let z = polydisk_point(s.n_params, 0.5, &mut r);
            let t2 = neumann_transfer(&dec.alpha2, &z, 80);
            let t1 = neumann_transfer(&dec.alpha1, &z, 80);
            worst_tf = worst_tf.max(op_norm(&(t2 - neumann_transfer(&b2, &z, 80) * &w)));
            worst_tf = worst_tf.max(op_norm(&(t1 - w.adjoint() * neumann_transfer(&b1, &z, 80))));
        }
        let t = dec.basis_change();
        let rebuilt = cascade(&dec.alpha2, &dec.alpha1).unwrap();
        for k in 0..s.n_params {
            worst_pencil = worst_pencil
                .max(op_norm(&(t.adjoint() * &s.a[k] * &t - &rebuilt.a[k])))
                .max(op_norm(&(t.adjoint() * &s.b[k] - &rebuilt.b[k])))
                .max(op_norm(&(&s.c[k] * &t - &rebuilt.c[k])))
                .max(op_norm(&(&s.d[k] - &rebuilt.d[k])));
        }
    }
    outcome(
        worst_tf < 1e-8 && worst_pencil < 1e-9,
        format!("transfer residual {worst_tf:.2e} (1e-8), pencil residual {worst_pencil:.2e} (1e-9)"),
    )
}

fn criterion_4() -> Outcome {
    let (mut instances, mut holds, mut disagreements) = (0, 0, 0);
    for i in 0..50u64 {
        let (a2, a1) = random_pair(200 + i);
        let s = cascade(&a2, &a1).unwrap();
        let mut tests = vec![
            Subspace::zero(s.dim_x),
            Subspace::coordinate(s.dim_x, 0..a2.dim_x),
            Subspace::whole(s.dim_x),
        ];
        // one more invariant subspace from the candidate search
        let extra = invariant_subspace_candidates(&s, 6, i);
        tests.push(extra[(i as usize) % extra.len()].clone());
        for x2 in tests {
            let (exact, _) = check_condition_ii(&s, &x2).unwrap();
            let sampled = sampled_condition_ii(&s, &x2, 50, i);
            instances += 1;
            holds += exact as usize;
            disagreements += (exact != sampled) as usize;
        }
    }
    outcome(
        disagreements == 0,
        format!("{instances} instances, {holds} satisfy (ii), {disagreements} disagreements with the sampling oracle"),
    )
}

/// Random germ with nonzero terms exactly in degrees `m` and `m + 1`.
fn random_germ(n: usize, du: usize, m: usize, seed: u64) -> PolyGerm {
    let mut r = rng(seed);
    let mut g = PolyGerm::new(n, du, du);
    for d in [m, m + 1] {
        for t in indices_of_degree(n, d) {
            if r.random_bool(0.6) || d == m {
                g.insert(t, gaussian(du, du, &mut r)).unwrap();
            }
        }
    }
    g
}

fn criterion_5() -> Outcome {
    let (mut worst_left, mut worst_right): (f64, f64) = (0.0, 0.0);
    let mut wrong_order = 0;
    for i in 0..100u64 {
        let m = 1 + (i as usize % 3);
        let mut r = rng(300 + i);
        let n = r.random_range(1..=3);
        let s = if i % 2 == 0 {
            let du = r.random_range(1..=2);
            realize_germ(&random_germ(n, du, m, i)).unwrap()
        } else {
            let du = r.random_range(1..=3);
            let dx = r.random_range(2..=5);
            match m {
                1 => random_conservative(n, dx, du, du, i).unwrap(),
                2 => {
                    let mut s = random_conservative(n, dx, du, du, i).unwrap();
                    for d in s.d.iter_mut() {
                        d.fill(c64(0.0, 0.0));
                    }
                    s
                }
                _ => {
                    let a = random_conservative(n, 1, du, du, i).unwrap();
                    let b = random_conservative(n, 1, du, du, i + 1).unwrap();
                    let c = random_conservative(n, dx, du, du, i + 2).unwrap();
                    cascade(&a, &cascade(&b, &c).unwrap()).unwrap()
                }
            }
        };
        if multiplicity(&s, s.dim_x + 2) != Multiplicity::Order(m) {
            wrong_order += 1;
            continue;
        }
        let (chain, tail) = factor_left(&s, m).unwrap();
        let (psi, rchain) = factor_right(&s, m).unwrap();
        for _ in 0..20 {
            let z = polydisk_point(n, 0.4, &mut r);
            let theta = neumann_transfer(&s, &z, 200);
            worst_left = worst_left.max(op_norm(&(&theta - chain.eval(&z).unwrap() * tail.eval(&z).unwrap())));
            worst_right = worst_right.max(op_norm(&(&theta - psi.eval(&z).unwrap() * rchain.eval(&z).unwrap())));
        }
    }
    outcome(
        wrong_order == 0 && worst_left < 1e-9 && worst_right < 1e-9,
        format!(
            "100 systems, m in 1..=3; left {worst_left:.2e}, right {worst_right:.2e} (1e-9); {wrong_order} multiplicity mismatches"
        ),
    )
}

fn criterion_6() -> Outcome {
    let (mut worst_coeff, mut worst_norm): (f64, f64) = (0.0, 0.0);
    for i in 0..50u64 {
        let mut r = rng(400 + i);
        let n = r.random_range(1..=3);
        let m = r.random_range(1..=4);
        let du = r.random_range(1..=2);
        let mut g = PolyGerm::new(n, du, du);
        for t in indices_of_degree(n, m) {
            g.insert(t, gaussian(du, du, &mut r)).unwrap();
        }
        let chain = factor_homogeneous(&realize_germ(&g).unwrap(), m).unwrap();
        worst_coeff = worst_coeff.max(chain.expand().unwrap().max_coeff_diff(&g));
    }
    for i in 0..50u64 {
        let mut r = rng(500 + i);
        let n = r.random_range(1..=3);
        let m = r.random_range(1..=4);
        let d = r.random_range(1..=3);
        // stateless conservative factors; their product germ is the oracle
        let parts: Vec<MultiSystem> = (0..m)
            .map(|j| random_conservative(n, 0, d, d, 1_000 * i + j as u64).unwrap())
            .collect();
        let mut s = parts[0].clone();
        let mut expected = PolyGerm::linear(&parts[0].d).unwrap();
        for p in &parts[1..] {
            s = cascade(&s, p).unwrap();
            expected = expected.mul(&PolyGerm::linear(&p.d).unwrap()).unwrap();
        }
        let chain = factor_homogeneous(&s, m).unwrap();
        worst_coeff = worst_coeff.max(chain.expand().unwrap().max_coeff_diff(&expected));
        let points: Vec<_> = (0..100).map(|_| torus_point(n, &mut r)).collect();
        for v in chain.max_factor_norms(&points).unwrap() {
            worst_norm = worst_norm.max(v);
        }
    }
    outcome(
        worst_coeff < 1e-10 && worst_norm <= 1.0 + 1e-8,
        format!("coefficient residual {worst_coeff:.2e} (1e-10), max factor norm {worst_norm:.12} (1 + 1e-8)"),
    )
}

fn criterion_7() -> Outcome {
    let (mut max_norm, mut violations, mut unfalsified): (f64, usize, usize) = (0.0, 0, 0);
    for i in 0..100u64 {
        let s = random_dims_conservative(600 + i, 4, 3);
        let report = agler_test(&s, 50, 0.9, 1e-8, i).unwrap();
        max_norm = max_norm.max(report.max_norm);
        violations += (!report.passed() || report.max_norm > 1.0 + 1e-8) as usize;
        let scaled = agler_test(&s.output_scaled(1.5), 50, 0.9, 1e-8, i).unwrap();
        match scaled.witness {
            Some(w) if w.certified_norm > 1.0 + 1e-8 => {}
            _ => unfalsified += 1,
        }
    }
    outcome(
        violations == 0 && unfalsified == 0,
        format!("max norm {max_norm:.12} over 100 systems; {violations} false alarms; {unfalsified} scaled systems not falsified"),
    )
}

fn criterion_8() -> Outcome {
    let (mut failures, mut not_idempotent, mut oracle_mismatch, mut non_cc) = (0, 0, 0, 0);
    for i in 0..120u64 {
        let (mut a2, mut a1) = random_pair(700 + i);
        if i >= 100 {
            if i % 2 == 0 {
                a1 = a1.with_decoupled_unitary_block(1 + (i as usize % 3), i);
            } else {
                a2 = a2.with_decoupled_unitary_block(1 + (i as usize % 3), i);
            }
        }
        let report = match closcon_property_check(&a2, &a1) {
            Ok(r) => r,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        if report.cascade_closely_connected && !(report.alpha1_closely_connected && report.alpha2_closely_connected) {
            failures += 1;
        }
        non_cc += (!report.cascade_closely_connected) as usize;
        let s = cascade(&a2, &a1).unwrap();
        for sys in [&s, &a2, &a1] {
            // the closely connected part and the unitary part split the state space
            let cc_dim = sys.closely_connected_subspace().dim();
            if cc_dim + sys.unitary_part().dim() != sys.dim_x {
                oracle_mismatch += 1;
            }
            let once = sys.restrict_to_cc().unwrap();
            let twice = once.restrict_to_cc().unwrap();
            let mut r = rng(i);
            let z = polydisk_point(sys.n_params, 0.5, &mut r);
            let gap = op_norm(&(neumann_transfer(&once, &z, 80) - neumann_transfer(&twice, &z, 80)));
            if twice.dim_x != once.dim_x || !once.is_closely_connected() || gap > 1e-9 {
                not_idempotent += 1;
            }
        }
    }
    outcome(
        failures == 0 && not_idempotent == 0 && oracle_mismatch == 0,
        format!(
            "120 pairs ({non_cc} cascades not closely connected); {failures} implication failures, {not_idempotent} non-idempotent restrictions, {oracle_mismatch} unitary-part mismatches"
        ),
    )
}

fn criterion_9() -> Outcome {
    let (mut bad_candidates, mut not_found, mut worst): (usize, usize, f64) = (0, 0, 0.0);
    for i in 0..100u64 {
        let (a2, a1) = random_pair(800 + i);
        let w = from_factorization(&a2, &a1).unwrap();
        for x2 in [&w.projected_x2, &w.intersected_x2] {
            let ok = check_condition_i(&w.alpha_cc, x2).unwrap()
                && check_condition_ii(&w.alpha_cc, x2).unwrap().0;
            bad_candidates += (!ok) as usize;
        }
        let s = cascade(&a2, &a1).unwrap();
        match solve_problem2(&w.alpha_cc, 50, i).unwrap() {
            Some(out) => {
                let mut r = rng(i);
                for _ in 0..20 {
                    let z = polydisk_point(s.n_params, 0.5, &mut r);
                    let prod = neumann_transfer(&out.theta2, &z, 80) * neumann_transfer(&out.theta1, &z, 80);
                    worst = worst.max(op_norm(&(neumann_transfer(&s, &z, 80) - prod)));
                }
            }
            None => not_found += 1,
        }
    }
    outcome(
        bad_candidates == 0 && not_found == 0 && worst < 1e-9,
        format!("100 pairs; {bad_candidates} failing candidates, {not_found} searches without result, product residual {worst:.2e} (1e-9)"),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_multisys"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run multisys");
    let body: String = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .filter(|l| !l.contains("\"timing_ms\""))
        .map(|l| format!("{l}\n"))
        .collect();
    (out.status.code().unwrap_or(-1), body)
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let commands: Vec<Vec<&str>> = vec![
        vec!["generate", "conservative", "--n-params", "2", "--dim-x", "3", "--dim-u", "2", "--dim-y", "2", "--seed", "7", "--out", "a2.json"],
        vec!["generate", "conservative", "--n-params", "2", "--dim-x", "2", "--dim-u", "2", "--dim-y", "2", "--seed", "8", "--out", "a1.json"],
        vec!["cascade", "a2.json", "a1.json", "--out", "s.json", "--x2-out", "x2.json", "--seed", "3"],
        vec!["decompose", "s.json", "x2.json", "--out-dir", "dec", "--seed", "4"],
        vec!["check", "dissipative", "s.json"],
        vec!["check", "closely-connected", "s.json", "--out", "cc.json"],
        vec!["factor", "left", "s.json", "--out-dir", "left", "--seed", "5"],
        vec!["factor", "right", "s.json", "--out-dir", "right", "--seed", "5"],
        vec!["factor", "problem2", "s.json", "--out-dir", "p2", "--seed", "6"],
        vec!["agler", "s.json", "--trials", "20", "--seed", "9"],
        vec!["agler", "s.json", "--trials", "20", "--seed", "9", "--scale", "2"],
    ];
    let outputs = ["a2.json", "a1.json", "s.json", "x2.json", "dec/alpha2.json", "dec/alpha1.json", "cc.json", "left/chain.json", "left/tail.json", "right/chain.json", "p2/theta2.json", "p2/theta1.json"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let mut bodies = Vec::new();
        for c in &commands {
            bodies.push(run_cli(d, c));
        }
        let files: Vec<Vec<u8>> = outputs.iter().map(|f| std::fs::read(d.join(f)).unwrap_or_default()).collect();
        runs.push((bodies, files));
    }
    let identical = runs[0] == runs[1];
    let codes: Vec<i32> = runs[0].0.iter().map(|(c, _)| *c).collect();
    let expected_codes = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2];
    outcome(
        identical && codes == expected_codes,
        format!("{} commands run twice; identical reports and files: {identical}; exit codes {codes:?}", commands.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("conservativity equivalence", criterion_1),
        ("cascade transfer identity", criterion_2),
        ("cascade/decompose round trip", criterion_3),
        ("condition (ii) rank criterion", criterion_4),
        ("left/right factorization", criterion_5),
        ("homogeneous factorization", criterion_6),
        ("Agler falsifier soundness", criterion_7),
        ("close-connectedness", criterion_8),
        ("factorization pipeline", criterion_9),
        ("CLI determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += (!o.passed) as usize;
        println!(
            "{} {:>2} {name}: {} [{:.1}s]",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
