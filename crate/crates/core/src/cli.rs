//! The `multisys` command-line front end.
//!
//! Every command prints a JSON run report on stdout. Exit codes: `0` when
//! every verdict passes, `2` when some verdict fails, `1` on usage, parse or
//! precondition errors. Seeds are taken from flags only.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::agler::{agler_test, AglerReport};
use crate::cascade::{cascade, decompose_tol, verify_factor_tf};
use crate::factorization::{
    factor_homogeneous, factor_left, factor_right, multiplicity, solve_problem2, Multiplicity,
};
use crate::germ::realize_germ;
use crate::io::{
    matrix_to_json, read_germ, read_subspace, read_system, to_json_string, write_chain,
    write_subspace, write_system, write_tail,
};
use crate::linalg::{op_norm, random_polydisk_point};
use crate::subspace::Subspace;
use crate::system::{random_conservative, torus_sequence, ConservativityReport, Dissipativity, MultiSystem};

/// Tolerance for the contractivity of homogeneous factors.
const CONTRACTIVITY_TOL: f64 = 1e-8;

/// Radius of the polydisk sampled for factorization reconstruction checks.
const RECONSTRUCTION_RADIUS: f64 = 0.4;

#[derive(Debug, Parser)]
#[command(name = "multisys", version, about = "Multiparametric conservative systems: cascades, factorization, Agler tests")]
pub struct Cli {
    #[command(flatten)]
    pub tolerances: Tolerances,

    /// Also write the run report to this file.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Tolerances {
    /// Relative singular-value threshold for rank decisions.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub rank_tol: f64,
    /// Threshold for algebraic identities and reconstruction residuals.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub residual_tol: f64,
    /// Number of torus points for sampled checks.
    #[arg(long, global = true, default_value_t = 100)]
    pub torus_samples: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a new system file.
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
    },
    /// Test a property of a system file.
    Check {
        what: CheckKind,
        system: PathBuf,
        /// Highest degree searched by `multiplicity` (default dim_x + 2).
        #[arg(long)]
        degree_cap: Option<usize>,
        /// Write the computed subspace (closely-connected, unitary-part).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cascade connection `alpha2 · alpha1`.
    Cascade {
        alpha2: PathBuf,
        alpha1: PathBuf,
        /// Output system file.
        #[arg(long)]
        out: PathBuf,
        /// Write the `X²` block of the cascade's state space.
        #[arg(long)]
        x2_out: Option<PathBuf>,
        /// Polydisk points used to verify transfer-function products.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Seed for every random choice of the run.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Split a conservative system along an invariant subspace.
    Decompose {
        system: PathBuf,
        x2: PathBuf,
        /// Directory for the output files; created if missing.
        #[arg(long)]
        out_dir: PathBuf,
        /// Polydisk points used to verify transfer-function products.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Seed for every random choice of the run.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Factor the transfer function.
    Factor {
        mode: FactorMode,
        system: PathBuf,
        /// Directory for the output files; created if missing.
        #[arg(long)]
        out_dir: PathBuf,
        /// Order of the factorization (default: the multiplicity).
        #[arg(long)]
        order: Option<usize>,
        /// Highest degree searched for the multiplicity (default dim_x + 2).
        #[arg(long)]
        degree_cap: Option<usize>,
        /// Candidate draws for `problem2`.
        #[arg(long, default_value_t = 50)]
        budget: usize,
        /// Polydisk points used to verify transfer-function products.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Seed for every random choice of the run.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Search for commuting contractions with ‖θ(rT)‖ > 1.
    Agler {
        system: PathBuf,
        /// Number of contraction tuples tried.
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Radius: tuples are scaled by `r` before evaluation.
        #[arg(long, default_value_t = 0.9)]
        r: f64,
        /// A norm above `1 + tol` counts as a violation.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Test `scale · θ` instead of `θ`.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Seed for every random choice of the run.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum GenerateKind {
    /// Random conservative system.
    Conservative {
        /// Number of parameters N.
        #[arg(long)]
        n_params: usize,
        /// State dimension.
        #[arg(long)]
        dim_x: usize,
        /// Input dimension.
        #[arg(long)]
        dim_u: usize,
        /// Output dimension (must equal dim_u).
        #[arg(long)]
        dim_y: usize,
        /// Seed for every random choice of the run.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output system file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Shift realization of a germ file.
    GermRealization {
        /// Input germ file.
        #[arg(long)]
        germ: PathBuf,
        /// Output system file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    Conservative,
    Dissipative,
    CloselyConnected,
    UnitaryPart,
    Multiplicity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FactorMode {
    Left,
    Right,
    Homogeneous,
    Problem2,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
    pub tol: f64,
}

/// Machine-readable record of one run. `timing_ms` is the last field so
/// that report bodies can be compared without it.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub seed: Option<u64>,
    pub tolerances: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
    pub residuals: Vec<Residual>,
    pub values: BTreeMap<String, Value>,
    pub outputs: Vec<String>,
    pub timing_ms: f64,
}

impl RunReport {
    fn new(command: Vec<String>) -> Self {
        RunReport {
            command,
            seed: None,
            tolerances: BTreeMap::new(),
            verdicts: Vec::new(),
            residuals: Vec::new(),
            values: BTreeMap::new(),
            outputs: Vec::new(),
            timing_ms: 0.0,
        }
    }

    fn tol(&mut self, name: &str, value: f64) {
        self.tolerances.insert(name.into(), value);
    }

    fn value(&mut self, name: &str, value: Value) {
        self.values.insert(name.into(), value);
    }

    fn verdict(&mut self, name: &str, passed: bool, value: Option<f64>, tol: Option<f64>) {
        self.verdicts.push(Verdict {
            name: name.into(),
            passed,
            value,
            tol,
            witness: None,
        });
    }

    /// Records a residual and the verdict `value < tol`.
    fn residual(&mut self, name: &str, value: f64, tol: f64) {
        self.residuals.push(Residual {
            name: name.into(),
            value,
            tol,
        });
        self.verdict(name, value < tol, Some(value), Some(tol));
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

fn complex_list(z: &[Complex64]) -> Value {
    Value::Array(z.iter().map(|v| json!([v.re, v.im])).collect())
}

fn load(path: &Path) -> anyhow::Result<MultiSystem> {
    read_system(path).with_context(|| format!("reading system {}", path.display()))
}

fn save(report: &mut RunReport, path: &Path, s: &MultiSystem) -> anyhow::Result<()> {
    write_system(path, s)?;
    report.output(path);
    Ok(())
}

fn conservativity_into(report: &mut RunReport, r: &ConservativityReport) {
    report.verdict("conservative", r.is_conservative(), Some(r.worst_residual), Some(r.tol));
    report.value("isometric_family", json!(r.is_isometric_family));
    report.value("coisometric_family", json!(r.is_coisometric_family));
    if let Some((j, k)) = r.failing_pair {
        report.value("failing_pair", json!([j + 1, k + 1]));
    }
}

/// `max ‖f(z) − g(z)‖` over `samples` points of the polydisk of radius 0.4.
fn sampled_gap(
    n_params: usize,
    samples: usize,
    seed: u64,
    mut gap: impl FnMut(&[Complex64]) -> crate::error::Result<f64>,
) -> anyhow::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let z = random_polydisk_point(n_params, RECONSTRUCTION_RADIUS, &mut rng);
        worst = worst.max(gap(&z)?);
    }
    Ok(worst)
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn resolve_order(s: &MultiSystem, order: Option<usize>, cap: Option<usize>, report: &mut RunReport) -> anyhow::Result<usize> {
    if let Some(m) = order {
        return Ok(m);
    }
    let cap = cap.unwrap_or(s.dim_x + 2);
    report.value("degree_cap", json!(cap));
    match multiplicity(s, cap) {
        Multiplicity::Order(m) => Ok(m),
        Multiplicity::VanishesUpTo(c) => bail!("transfer function vanishes up to degree {c}; pass --order"),
    }
}

fn execute(cli: &Cli, report: &mut RunReport) -> anyhow::Result<()> {
    let tols = &cli.tolerances;
    match &cli.command {
        Command::Generate { kind } => match kind {
            GenerateKind::Conservative {
                n_params,
                dim_x,
                dim_u,
                dim_y,
                seed,
                out,
            } => {
                report.seed = Some(*seed);
                report.tol("residual_tol", tols.residual_tol);
                let s = random_conservative(*n_params, *dim_x, *dim_u, *dim_y, *seed)?;
                save(report, out, &s)?;
                conservativity_into(report, &s.is_conservative(tols.residual_tol));
            }
            GenerateKind::GermRealization { germ, out } => {
                report.tol("residual_tol", tols.residual_tol);
                let g = read_germ(germ)?;
                let s = realize_germ(&g)?;
                save(report, out, &s)?;
                report.value("dim_x", json!(s.dim_x));
                let top = g.max_degree().unwrap_or(0);
                let gap = s.taylor_coefficients(top + 1).max_coeff_diff(&g);
                report.residual("expansion_matches_germ", gap, tols.residual_tol);
                // shift realizations are rarely conservative; informational only
                report.value("conservative", json!(s.is_conservative(tols.residual_tol).is_conservative()));
            }
        },
        Command::Check {
            what,
            system,
            degree_cap,
            out,
        } => {
            let s = load(system)?;
            match what {
                CheckKind::Conservative => {
                    report.tol("residual_tol", tols.residual_tol);
                    conservativity_into(report, &s.is_conservative(tols.residual_tol));
                }
                CheckKind::Dissipative => {
                    report.tol("residual_tol", tols.residual_tol);
                    report.tol("torus_samples", tols.torus_samples as f64);
                    match s.is_dissipative_sampled(tols.torus_samples, tols.residual_tol) {
                        Dissipativity::Pass { max_norm, .. } => {
                            report.verdict("dissipative", true, Some(max_norm), Some(1.0 + tols.residual_tol));
                        }
                        Dissipativity::Fail { witness, norm, .. } => {
                            report.verdicts.push(Verdict {
                                name: "dissipative".into(),
                                passed: false,
                                value: Some(norm),
                                tol: Some(1.0 + tols.residual_tol),
                                witness: Some(complex_list(&witness)),
                            });
                        }
                    }
                }
                CheckKind::CloselyConnected | CheckKind::UnitaryPart => {
                    report.tol("rank_tol", tols.rank_tol);
                    let (name, sub, passed) = if *what == CheckKind::CloselyConnected {
                        let cc = s.closely_connected_subspace_tol(tols.rank_tol);
                        let ok = cc.dim() == s.dim_x;
                        ("closely_connected", cc, ok)
                    } else {
                        let u = s.unitary_part_tol(tols.rank_tol);
                        let ok = u.is_zero();
                        ("completely_non_unitary", u, ok)
                    };
                    report.value("subspace_dim", json!(sub.dim()));
                    report.value("dim_x", json!(s.dim_x));
                    report.verdict(name, passed, None, None);
                    if let Some(path) = out {
                        write_subspace(path, &sub)?;
                        report.output(path);
                    }
                }
                CheckKind::Multiplicity => {
                    let cap = degree_cap.unwrap_or(s.dim_x + 2);
                    report.value("degree_cap", json!(cap));
                    match multiplicity(&s, cap) {
                        Multiplicity::Order(m) => {
                            report.value("multiplicity", json!(m));
                            report.verdict("multiplicity_within_cap", true, None, None);
                        }
                        Multiplicity::VanishesUpTo(c) => {
                            report.value("multiplicity", Value::Null);
                            report.value("vanishes_up_to", json!(c));
                            report.verdict("multiplicity_within_cap", false, None, None);
                        }
                    }
                }
            }
        }
        Command::Cascade {
            alpha2,
            alpha1,
            out,
            x2_out,
            samples,
            seed,
        } => {
            report.seed = Some(*seed);
            let a2 = load(alpha2)?;
            let a1 = load(alpha1)?;
            let s = cascade(&a2, &a1)?;
            save(report, out, &s)?;
            if let Some(path) = x2_out {
                write_subspace(path, &Subspace::coordinate(s.dim_x, 0..a2.dim_x))?;
                report.output(path);
            }
            report.tol("residual_tol", tols.residual_tol);
            let r = verify_factor_tf(&s, &a2, &a1, *samples, *seed)?;
            report.residual("transfer_product", r, tols.residual_tol);
            report.value("dim_x", json!(s.dim_x));
        }
        Command::Decompose {
            system,
            x2,
            out_dir,
            samples,
            seed,
        } => {
            report.seed = Some(*seed);
            report.tol("rank_tol", tols.rank_tol);
            report.tol("residual_tol", tols.residual_tol);
            let s = load(system)?;
            let x2s = read_subspace(x2).with_context(|| format!("reading subspace {}", x2.display()))?;
            let dec = decompose_tol(&s, &x2s, tols.rank_tol)?;
            ensure_dir(out_dir)?;
            save(report, &out_dir.join("alpha2.json"), &dec.alpha2)?;
            save(report, &out_dir.join("alpha1.json"), &dec.alpha1)?;
            for (name, sub) in [("intermediate", &dec.intermediate), ("x2", &dec.x2), ("x1", &dec.x1)] {
                let path = out_dir.join(format!("{name}.json"));
                write_subspace(&path, sub)?;
                report.output(&path);
            }
            report.value("intermediate_dim", json!(dec.intermediate.dim()));
            report.residual("reassembly", dec.reassembly_residual(&s)?, tols.residual_tol);
            let r = verify_factor_tf(&s, &dec.alpha2, &dec.alpha1, *samples, *seed)?;
            report.residual("transfer_product", r, tols.residual_tol);
        }
        Command::Factor {
            mode,
            system,
            out_dir,
            order,
            degree_cap,
            budget,
            samples,
            seed,
        } => {
            report.seed = Some(*seed);
            report.tol("residual_tol", tols.residual_tol);
            let s = load(system)?;
            ensure_dir(out_dir)?;
            match mode {
                FactorMode::Left => {
                    let m = resolve_order(&s, *order, *degree_cap, report)?;
                    let (chain, tail) = factor_left(&s, m)?;
                    let gap = sampled_gap(s.n_params, *samples, *seed, |z| {
                        Ok(op_norm(&(s.transfer_eval(z)? - chain.eval(z)? * tail.eval(z)?)))
                    })?;
                    report.value("order", json!(m));
                    report.value("spaces", json!(chain.spaces()));
                    write_chain(&out_dir.join("chain.json"), &chain)?;
                    write_tail(&out_dir.join("tail.json"), &tail)?;
                    report.output(&out_dir.join("chain.json"));
                    report.output(&out_dir.join("tail.json"));
                    report.residual("reconstruction", gap, tols.residual_tol);
                }
                FactorMode::Right => {
                    let m = resolve_order(&s, *order, *degree_cap, report)?;
                    let (tail, chain) = factor_right(&s, m)?;
                    let gap = sampled_gap(s.n_params, *samples, *seed, |z| {
                        Ok(op_norm(&(s.transfer_eval(z)? - tail.eval(z)? * chain.eval(z)?)))
                    })?;
                    report.value("order", json!(m));
                    report.value("spaces", json!(chain.spaces()));
                    write_chain(&out_dir.join("chain.json"), &chain)?;
                    write_tail(&out_dir.join("tail.json"), &tail)?;
                    report.output(&out_dir.join("chain.json"));
                    report.output(&out_dir.join("tail.json"));
                    report.residual("reconstruction", gap, tols.residual_tol);
                }
                FactorMode::Homogeneous => {
                    let m = resolve_order(&s, *order, *degree_cap, report)?;
                    let chain = factor_homogeneous(&s, m)?;
                    let gap = chain
                        .expand()?
                        .max_coeff_diff(&s.taylor_coefficients(m + s.dim_x + 1));
                    report.value("order", json!(m));
                    report.value("spaces", json!(chain.spaces()));
                    write_chain(&out_dir.join("chain.json"), &chain)?;
                    report.output(&out_dir.join("chain.json"));
                    report.residual("coefficients", gap, tols.residual_tol);
                    if s.is_conservative(tols.residual_tol).is_conservative() {
                        report.tol("torus_samples", tols.torus_samples as f64);
                        report.tol("contractivity_tol", CONTRACTIVITY_TOL);
                        let norms = chain.max_factor_norms(&torus_sequence(s.n_params, tols.torus_samples))?;
                        let worst = norms.iter().copied().fold(0.0, f64::max);
                        report.value("factor_norms", json!(norms));
                        report.verdict("factor_contractivity", worst <= 1.0 + CONTRACTIVITY_TOL, Some(worst), Some(1.0 + CONTRACTIVITY_TOL));
                    }
                }
                FactorMode::Problem2 => {
                    report.value("budget", json!(budget));
                    match solve_problem2(&s, *budget, *seed)? {
                        Some(out) => {
                            save(report, &out_dir.join("theta2.json"), &out.theta2)?;
                            save(report, &out_dir.join("theta1.json"), &out.theta1)?;
                            let path = out_dir.join("witness_x2.json");
                            write_subspace(&path, &out.witness_x2)?;
                            report.output(&path);
                            report.value("intermediate_dim", json!(out.intermediate_dim));
                            report.value("witness_dim", json!(out.witness_x2.dim()));
                            report.residual("transfer_product", out.residual, tols.residual_tol);
                        }
                        None => {
                            report.value("outcome", json!("inconclusive: no factorization found within budget"));
                            report.verdict("factorization_found", false, None, None);
                        }
                    }
                }
            }
        }
        Command::Agler {
            system,
            trials,
            r,
            tol,
            scale,
            seed,
        } => {
            report.seed = Some(*seed);
            report.tol("agler_tol", *tol);
            report.value("r", json!(r));
            report.value("scale", json!(scale));
            let s = load(system)?.output_scaled(*scale);
            let rep: AglerReport = agler_test(&s, *trials, *r, *tol, *seed)?;
            report.value("trials", json!(rep.trials));
            report.value("max_tail_bound", json!(rep.max_tail_bound));
            report.verdicts.push(Verdict {
                name: "no_agler_violation".into(),
                passed: rep.passed(),
                value: Some(rep.max_norm),
                tol: Some(1.0 + tol),
                witness: rep.witness.as_ref().map(|w| {
                    json!({
                        "strategy": w.strategy.name(),
                        "dim": w.tuple.dim(),
                        "norm": w.norm,
                        "certified_norm": w.certified_norm,
                        "tail_bound": w.tail_bound,
                        "tuple": w.tuple.mats().iter().map(matrix_to_json).collect::<Vec<_>>(),
                    })
                }),
            });
        }
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let echo = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let mut report = RunReport::new(echo);
    let start = Instant::now();
    if let Err(e) = execute(&cli, &mut report) {
        eprintln!("error: {e:#}");
        return 1;
    }
    report.timing_ms = start.elapsed().as_secs_f64() * 1e3;
    let text = match to_json_string(&report) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    print!("{text}");
    if let Some(path) = &cli.report {
        if let Err(e) = fs::write(path, &text) {
            eprintln!("error: {}: {e}", path.display());
            return 1;
        }
    }
    if report.passed() {
        0
    } else {
        2
    }
}
