//! One-sided test of Agler–Schur membership: evaluate `θ(rT)` on tuples of
//! commuting contractions and look for `‖θ(rT)‖ > 1`.
//!
//! For commuting `T = (T_1, …, T_N)` on `H`,
//! `θ(rT) = Σ_t θ̂_t ⊗ (rT)^t` acts on `U ⊗ H`. A norm above one is a
//! certificate of non-membership; staying below one proves nothing.
//!
//! For a system, the degree-`j` part of the series is
//! `(C⊗rT)(A⊗rT)^{j−2}(B⊗rT)` with `M⊗T := Σ_k M_k ⊗ T_k`, because the `T_k`
//! commute. The series is summed degree by degree until the geometric tail
//! bound `‖C⊗rT‖ ‖B⊗rT‖ a^{J−1} / (1 − a)`, `a = ‖A⊗rT‖`, drops below the
//! requested tolerance.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::germ::PolyGerm;
use crate::linalg::{c64, haar_unitary, identity, kron, op_norm, random_gaussian, zeros, ComplexMatrix};
use crate::system::MultiSystem;

/// Commutators of a valid tuple stay below this norm.
pub const COMMUTATOR_TOL: f64 = 1e-10;

/// Slack allowed on `‖T_k‖ ≤ 1`.
pub const CONTRACTION_SLACK: f64 = 1e-12;

/// Truncation degree beyond which a system evaluation gives up.
pub const MAX_SERIES_DEGREE: usize = 100_000;

/// Pairwise commuting contractions of a common size.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionTuple {
    mats: Vec<ComplexMatrix>,
}

impl ContractionTuple {
    pub fn new(mats: Vec<ComplexMatrix>) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty contraction tuple".into()))?;
        let dim = first.nrows();
        if dim == 0 {
            return Err(Error::InvalidArgument("contraction tuple dimension must be at least 1".into()));
        }
        for m in &mats {
            if m.shape() != (dim, dim) {
                return Err(Error::Shape {
                    what: "contraction tuple member".into(),
                    expected: (dim, dim),
                    found: m.shape(),
                });
            }
        }
        let t = ContractionTuple { mats };
        let comm = t.max_commutator();
        if comm >= COMMUTATOR_TOL {
            return Err(Error::InvalidArgument(format!(
                "tuple does not commute (commutator norm {comm:.3e})"
            )));
        }
        let norm = t.max_norm();
        if norm > 1.0 + CONTRACTION_SLACK {
            return Err(Error::InvalidArgument(format!(
                "tuple member is not a contraction (norm {norm:.15})"
            )));
        }
        Ok(t)
    }

    /// `T_k = c_k I` on `C^dim`.
    pub fn scalar(c: &[Complex64], dim: usize) -> Result<Self> {
        ContractionTuple::new(c.iter().map(|ck| identity(dim) * *ck).collect())
    }

    pub fn n_params(&self) -> usize {
        self.mats.len()
    }

    pub fn dim(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn mats(&self) -> &[ComplexMatrix] {
        &self.mats
    }

    pub fn max_commutator(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, tj) in self.mats.iter().enumerate() {
            for tk in &self.mats[j + 1..] {
                worst = worst.max(op_norm(&(tj * tk - tk * tj)));
            }
        }
        worst
    }

    pub fn max_norm(&self) -> f64 {
        self.mats.iter().map(op_norm).fold(0.0, f64::max)
    }

    /// `Σ_k M_k ⊗ (r T_k)`.
    fn pencil(&self, m: &[ComplexMatrix], r: f64) -> ComplexMatrix {
        let h = self.dim();
        let mut out = zeros(m[0].nrows() * h, m[0].ncols() * h);
        for (mk, tk) in m.iter().zip(&self.mats) {
            out += kron(mk, tk) * c64(r, 0.0);
        }
        out
    }
}

/// Families of commuting contractions used as test points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// `T_k = U D_k U*` with a shared Haar unitary `U` and diagonal contractions `D_k`.
    JointlyDiagonal,
    /// `T_k = T^k` for one random contraction `T` (not normal in general).
    PowerFamily,
    /// `T_k = c_k I` with `|c_k| ≤ 1`.
    Scalar,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::JointlyDiagonal, Strategy::PowerFamily, Strategy::Scalar];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::JointlyDiagonal => "jointly-diagonal",
            Strategy::PowerFamily => "power-family",
            Strategy::Scalar => "scalar",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown contraction strategy `{s}`")))
    }
}

/// Point of the closed unit disk: on the circle with probability 1/2,
/// otherwise uniform in the disk.
fn disk_or_circle<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let rho = if rng.random_bool(0.5) { 1.0 } else { rng.random::<f64>().sqrt() };
    Complex64::from_polar(rho, angle)
}

pub fn gen_commuting_contractions(
    n_params: usize,
    dim: usize,
    strategy: Strategy,
    seed: u64,
) -> Result<ContractionTuple> {
    if dim == 0 || n_params == 0 {
        return Err(Error::InvalidArgument(
            "contraction tuples need n_params ≥ 1 and dim ≥ 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats = match strategy {
        Strategy::JointlyDiagonal => {
            let u = haar_unitary(dim, &mut rng);
            (0..n_params)
                .map(|_| {
                    let diag = ComplexMatrix::from_fn(dim, dim, |i, j| {
                        if i == j { disk_or_circle(&mut rng) } else { c64(0.0, 0.0) }
                    });
                    &u * diag * u.adjoint()
                })
                .collect()
        }
        Strategy::PowerFamily => {
            let g = random_gaussian(dim, dim, &mut rng);
            let scale = rng.random_range(0.5..=1.0) / op_norm(&g);
            let t = g * c64(scale, 0.0);
            let mut mats = vec![t.clone()];
            for _ in 1..n_params {
                let next = mats.last().unwrap() * &t;
                mats.push(next);
            }
            mats
        }
        Strategy::Scalar => (0..n_params)
            .map(|_| identity(dim) * disk_or_circle(&mut rng))
            .collect(),
    };
    ContractionTuple::new(mats)
}

/// `θ(rT)` together with the truncation that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleEvaluation {
    pub value: ComplexMatrix,
    /// Highest degree summed.
    pub degree: usize,
    /// Upper bound on the norm of the omitted terms.
    pub tail_bound: f64,
}

/// Functions that can be evaluated at points and at contraction tuples.
pub trait TupleFunction {
    fn n_params(&self) -> usize;
    fn dim_u(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn eval_point(&self, z: &[Complex64]) -> Result<ComplexMatrix>;
    /// `θ(rT)` with a tail bound below `tol`.
    fn eval_tuple(&self, t: &ContractionTuple, r: f64, tol: f64) -> Result<TupleEvaluation>;
    /// `θ(rT)` summed through exactly `degree`.
    fn eval_tuple_to_degree(&self, t: &ContractionTuple, r: f64, degree: usize) -> Result<TupleEvaluation>;
}

fn check_tuple(n_params: usize, t: &ContractionTuple, r: f64) -> Result<()> {
    if t.n_params() != n_params {
        return Err(Error::ParamCount {
            expected: n_params,
            found: t.n_params(),
        });
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("radius {r} is not in (0, 1)")));
    }
    Ok(())
}

impl TupleFunction for PolyGerm {
    fn n_params(&self) -> usize {
        PolyGerm::n_params(self)
    }

    fn dim_u(&self) -> usize {
        PolyGerm::dim_u(self)
    }

    fn dim_y(&self) -> usize {
        PolyGerm::dim_y(self)
    }

    fn eval_point(&self, z: &[Complex64]) -> Result<ComplexMatrix> {
        self.eval(z)
    }

    fn eval_tuple(&self, t: &ContractionTuple, r: f64, _tol: f64) -> Result<TupleEvaluation> {
        self.eval_tuple_to_degree(t, r, self.max_degree().unwrap_or(0))
    }

    fn eval_tuple_to_degree(&self, t: &ContractionTuple, r: f64, degree: usize) -> Result<TupleEvaluation> {
        check_tuple(PolyGerm::n_params(self), t, r)?;
        let h = t.dim();
        let top = self.max_degree().unwrap_or(0);
        // powers[k][e] = (r T_k)^e
        let powers: Vec<Vec<ComplexMatrix>> = t
            .mats()
            .iter()
            .map(|tk| {
                let rt = tk * c64(r, 0.0);
                let mut p = vec![identity(h)];
                for e in 1..=top {
                    let next = &p[e - 1] * &rt;
                    p.push(next);
                }
                p
            })
            .collect();
        let mut value = zeros(PolyGerm::dim_y(self) * h, PolyGerm::dim_u(self) * h);
        let mut omitted = 0.0;
        for (idx, coeff) in self.iter() {
            if idx.degree() > degree {
                omitted += op_norm(coeff) * r.powi(idx.degree() as i32);
                continue;
            }
            let mut mono = identity(h);
            for (k, &e) in idx.as_slice().iter().enumerate() {
                mono *= &powers[k][e];
            }
            value += kron(coeff, &mono);
        }
        Ok(TupleEvaluation {
            value,
            degree: degree.min(top),
            tail_bound: omitted,
        })
    }
}

struct SystemSeries {
    d: ComplexMatrix,
    a: ComplexMatrix,
    b: ComplexMatrix,
    c: ComplexMatrix,
    /// `‖C⊗rT‖ ‖B⊗rT‖`
    cb: f64,
    /// `‖A⊗rT‖`
    ratio: f64,
}

impl SystemSeries {
    fn new(s: &MultiSystem, t: &ContractionTuple, r: f64) -> Self {
        let a = t.pencil(&s.a, r);
        let b = t.pencil(&s.b, r);
        let c = t.pencil(&s.c, r);
        SystemSeries {
            d: t.pencil(&s.d, r),
            cb: op_norm(&c) * op_norm(&b),
            ratio: op_norm(&a),
            a,
            b,
            c,
        }
    }

    /// Bound on the terms of degree `> degree`.
    fn tail_after(&self, degree: usize) -> f64 {
        if self.a.is_empty() || self.cb == 0.0 {
            return 0.0;
        }
        if degree == 0 {
            return f64::INFINITY;
        }
        self.cb * self.ratio.powi(degree as i32 - 1) / (1.0 - self.ratio)
    }

    fn sum_to(&self, degree: usize) -> ComplexMatrix {
        let mut value = if degree >= 1 { self.d.clone() } else { zeros(self.d.nrows(), self.d.ncols()) };
        if self.a.is_empty() {
            return value;
        }
        // state-side partial products (A⊗rT)^{j−2}(B⊗rT)
        let mut p = self.b.clone();
        for _ in 2..=degree {
            value += &self.c * &p;
            p = &self.a * p;
        }
        value
    }
}

impl TupleFunction for MultiSystem {
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn dim_u(&self) -> usize {
        self.dim_u
    }

    fn dim_y(&self) -> usize {
        self.dim_y
    }

    fn eval_point(&self, z: &[Complex64]) -> Result<ComplexMatrix> {
        self.transfer_eval(z)
    }

    fn eval_tuple(&self, t: &ContractionTuple, r: f64, tol: f64) -> Result<TupleEvaluation> {
        check_tuple(self.n_params, t, r)?;
        let series = SystemSeries::new(self, t, r);
        let degree = if series.tail_after(1) == 0.0 {
            1
        } else {
            if series.ratio >= 1.0 {
                return Err(Error::DivergentTail { ratio: series.ratio });
            }
            let mut j = 2;
            while series.tail_after(j) >= tol {
                j += 1;
                if j > MAX_SERIES_DEGREE {
                    return Err(Error::DivergentTail { ratio: series.ratio });
                }
            }
            j
        };
        Ok(TupleEvaluation {
            value: series.sum_to(degree),
            degree,
            tail_bound: series.tail_after(degree),
        })
    }

    fn eval_tuple_to_degree(&self, t: &ContractionTuple, r: f64, degree: usize) -> Result<TupleEvaluation> {
        check_tuple(self.n_params, t, r)?;
        let series = SystemSeries::new(self, t, r);
        let tail_bound = if series.ratio < 1.0 || series.tail_after(1) == 0.0 {
            series.tail_after(degree)
        } else {
            f64::INFINITY
        };
        Ok(TupleEvaluation {
            value: series.sum_to(degree),
            degree,
            tail_bound,
        })
    }
}

/// `Σ_t θ̂_t ⊗ (rT)^t`, truncated so that the omitted terms are below `tol`.
pub fn eval_at_tuple<F: TupleFunction + ?Sized>(
    f: &F,
    t: &ContractionTuple,
    r: f64,
    tol: f64,
) -> Result<TupleEvaluation> {
    f.eval_tuple(t, r, tol)
}

/// A tuple at which `‖θ(rT)‖ > 1 + tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct AglerWitness {
    pub strategy: Strategy,
    pub tuple: ContractionTuple,
    pub norm: f64,
    /// Norm recomputed at twice the truncation degree.
    pub certified_norm: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AglerReport {
    pub trials: usize,
    pub r: f64,
    pub tol: f64,
    pub max_norm: f64,
    /// Largest tail bound over all evaluations.
    pub max_tail_bound: f64,
    pub witness: Option<AglerWitness>,
}

impl AglerReport {
    /// No violation was found. This is not a membership proof.
    pub fn passed(&self) -> bool {
        self.witness.is_none()
    }
}

/// Evaluates `f` at `trials` random tuples (strategies in rotation, sizes
/// 1 to 4) and records the largest norm. The first tuple whose norm exceeds
/// `1 + tol` after re-evaluation at doubled degree becomes the witness.
pub fn agler_test<F: TupleFunction + ?Sized>(
    f: &F,
    trials: usize,
    r: f64,
    tol: f64,
    seed: u64,
) -> Result<AglerReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truncation_tol = (tol * 1e-2).max(1e-14);
    let mut report = AglerReport {
        trials,
        r,
        tol,
        max_norm: 0.0,
        max_tail_bound: 0.0,
        witness: None,
    };
    for i in 0..trials {
        let strategy = Strategy::ALL[i % Strategy::ALL.len()];
        let dim = rng.random_range(1..=4);
        let tuple = gen_commuting_contractions(f.n_params(), dim, strategy, rng.random())?;
        let eval = f.eval_tuple(&tuple, r, truncation_tol)?;
        let norm = op_norm(&eval.value);
        report.max_norm = report.max_norm.max(norm);
        report.max_tail_bound = report.max_tail_bound.max(eval.tail_bound);
        if norm > 1.0 + tol && report.witness.is_none() {
            let check = f.eval_tuple_to_degree(&tuple, r, 2 * eval.degree.max(1))?;
            let certified_norm = op_norm(&check.value);
            if certified_norm - check.tail_bound > 1.0 + tol {
                report.witness = Some(AglerWitness {
                    strategy,
                    tuple,
                    norm,
                    certified_norm,
                    tail_bound: check.tail_bound,
                });
            }
        }
    }
    Ok(report)
}

/// `max ‖θ(radius·ζ)‖` over the grid `ζ_k = e^{2πi j_k / grid}`.
///
/// For one variable this samples the Schur-class norm; for several variables
/// it is only a necessary condition for Agler–Schur membership.
pub fn polydisk_sup_norm<F: TupleFunction + ?Sized>(f: &F, grid_per_axis: usize, radius: f64) -> Result<f64> {
    if grid_per_axis == 0 {
        return Err(Error::InvalidArgument("grid needs at least one point per axis".into()));
    }
    if !(0.0..1.0).contains(&radius) {
        return Err(Error::InvalidArgument(format!("radius {radius} is not in [0, 1)")));
    }
    let n = f.n_params();
    let total = grid_per_axis.pow(n as u32);
    let mut worst: f64 = 0.0;
    let mut z = vec![c64(0.0, 0.0); n];
    for flat in 0..total {
        let mut rest = flat;
        for zk in z.iter_mut() {
            let j = rest % grid_per_axis;
            rest /= grid_per_axis;
            let angle = std::f64::consts::TAU * j as f64 / grid_per_axis as f64;
            *zk = Complex64::from_polar(radius, angle);
        }
        worst = worst.max(op_norm(&f.eval_point(&z)?));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::germ::MultiIndex;
    use crate::linalg::random_gaussian;
    use crate::system::random_conservative;

    fn identity_germ(n: usize) -> PolyGerm {
        let mut g = PolyGerm::new(n, 1, 1);
        g.insert(MultiIndex::unit(n, 0), identity(1)).unwrap();
        g
    }

    #[test]
    fn generated_tuples_satisfy_invariants() {
        for strategy in Strategy::ALL {
            for seed in 0..20 {
                let t = gen_commuting_contractions(3, 1 + (seed as usize % 5), strategy, seed).unwrap();
                assert!(t.max_commutator() < COMMUTATOR_TOL);
                assert!(t.max_norm() <= 1.0 + CONTRACTION_SLACK);
            }
        }
        assert!(matches!(
            gen_commuting_contractions(2, 0, Strategy::Scalar, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("nilpotent".parse::<Strategy>().is_err());
    }

    #[test]
    fn scalar_unitary_tuple() {
        let t = ContractionTuple::scalar(&[c64(1.0, 0.0), c64(-1.0, 0.0)], 3).unwrap();
        assert_eq!(t.max_commutator(), 0.0);
        assert!((t.max_norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_commuting_tuple_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_gaussian(3, 3, &mut rng);
        let b = random_gaussian(3, 3, &mut rng);
        let a = &a * c64(0.5 / op_norm(&a), 0.0);
        let b = &b * c64(0.5 / op_norm(&b), 0.0);
        assert!(ContractionTuple::new(vec![a, b]).is_err());
    }

    #[test]
    fn identity_function_at_tuple() {
        let g = identity_germ(1);
        let t = gen_commuting_contractions(1, 3, Strategy::PowerFamily, 4).unwrap();
        let e = eval_at_tuple(&g, &t, 0.9, 1e-12).unwrap();
        assert!(op_norm(&(e.value - &t.mats()[0] * c64(0.9, 0.0))) < 1e-15);
        let report = agler_test(&g, 30, 0.9, 1e-8, 2).unwrap();
        assert!(report.max_norm <= 0.9 + 1e-12);
    }

    #[test]
    fn z1_z2_at_scalar_tuple() {
        let mut g = PolyGerm::new(2, 1, 1);
        g.insert(MultiIndex::new(vec![1, 1]), identity(1)).unwrap();
        let t = ContractionTuple::scalar(&[c64(1.0, 0.0), c64(1.0, 0.0)], 2).unwrap();
        let e = eval_at_tuple(&g, &t, 0.5, 1e-12).unwrap();
        assert!(op_norm(&(e.value - identity(2) * c64(0.25, 0.0))) < 1e-15);
    }

    #[test]
    fn scalar_tuple_matches_point_evaluation() {
        let s = random_conservative(2, 3, 2, 2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let c: Vec<Complex64> = (0..2).map(|_| disk_or_circle(&mut rng)).collect();
            let t = ContractionTuple::scalar(&c, 2).unwrap();
            let e = eval_at_tuple(&s, &t, 0.8, 1e-13).unwrap();
            let z: Vec<Complex64> = c.iter().map(|ck| ck * 0.8).collect();
            let expected = kron(&s.transfer_eval(&z).unwrap(), &identity(2));
            assert!(op_norm(&(e.value - expected)) < 1e-10);
        }
    }

    #[test]
    fn truncation_refinement_agrees() {
        let s = random_conservative(3, 3, 1, 1, 12).unwrap();
        for strategy in Strategy::ALL {
            let t = gen_commuting_contractions(3, 3, strategy, 9).unwrap();
            let coarse = eval_at_tuple(&s, &t, 0.7, 1e-10).unwrap();
            let fine = s.eval_tuple_to_degree(&t, 0.7, 4 * coarse.degree).unwrap();
            assert!(op_norm(&(coarse.value - fine.value)) <= coarse.tail_bound.max(1e-14));
            assert!(coarse.tail_bound < 1e-10);
        }
    }

    #[test]
    fn system_matches_its_taylor_germ_on_tuples() {
        let s = random_conservative(2, 2, 1, 1, 14).unwrap();
        let t = gen_commuting_contractions(2, 2, Strategy::PowerFamily, 3).unwrap();
        let from_system = s.eval_tuple_to_degree(&t, 0.6, 12).unwrap();
        let germ = s.taylor_coefficients(12);
        let from_germ = germ.eval_tuple(&t, 0.6, 0.0).unwrap();
        assert!(op_norm(&(from_system.value - from_germ.value)) < 1e-12);
    }

    #[test]
    fn conservative_passes_and_scaled_fails() {
        for seed in 0..5 {
            let s = random_conservative(2, 3, 2, 2, 50 + seed).unwrap();
            let report = agler_test(&s, 30, 0.9, 1e-8, seed).unwrap();
            assert!(report.passed(), "max norm {}", report.max_norm);
            let doubled = s.output_scaled(2.0);
            let report = agler_test(&doubled, 30, 0.9, 1e-8, seed).unwrap();
            let w = report.witness.expect("doubled function must be falsified");
            assert!(w.certified_norm > 1.0);
        }
    }

    #[test]
    fn divergent_tail_is_reported() {
        let s = random_conservative(1, 2, 1, 1, 3).unwrap().scaled(3.0);
        let t = ContractionTuple::scalar(&[c64(1.0, 0.0)], 1).unwrap();
        assert!(matches!(
            eval_at_tuple(&s, &t, 0.9, 1e-10),
            Err(Error::DivergentTail { .. })
        ));
    }

    #[test]
    fn polydisk_norms() {
        let g = identity_germ(1);
        assert!((polydisk_sup_norm(&g, 16, 0.99).unwrap() - 0.99).abs() < 1e-12);
        let s = random_conservative(2, 2, 2, 2, 8).unwrap();
        let base = polydisk_sup_norm(&s, 20, 0.95).unwrap();
        assert!(base <= 1.0 + 1e-8);
        let doubled = polydisk_sup_norm(&s.output_scaled(2.0), 20, 0.95).unwrap();
        assert!(doubled >= 2.0 * base - 1e-8);
    }
}
