//! Multiplicity of the zero at the origin and factorization of transfer
//! functions into products of linear factors.
//!
//! For a system whose transfer function vanishes to order `m`,
//!
//! ```text
//! θ(z) = zL⁽¹⁾ ⋯ zL⁽ᵐ⁾ φ(z),    φ(0) ≠ 0,
//! ```
//!
//! with the canonical choice `L⁽¹⁾ = C`, `L⁽²⁾ = … = L⁽ᵐ⁻¹⁾ = A`,
//! `L⁽ᵐ⁾ = [A B]` and `φ(z) = col((I − zA)⁻¹zB, I)` (for `m = 1` the single
//! factor is `[C D]`). The right-hand version is transported through the
//! adjoint system. Factorizations of this kind are not unique; the functions
//! here always return this canonical chain.
//!
//! The second half of the module searches for a cascade decomposition of a
//! conservative system, which factors `θ = θ₂θ₁` with both factors again
//! transfer functions of conservative systems.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cascade::{cascade, check_condition_i, condition_ii, decompose, verify_factor_tf};
use crate::error::{Error, Result};
use crate::germ::PolyGerm;
use crate::linalg::{
    eigenvectors, hstack, identity, linear_combination, op_norm, random_gaussian, vstack, zeros,
    ComplexMatrix, DEFAULT_RANK_TOL,
};
use crate::subspace::{orthonormal_basis, subspace_intersection, Subspace};
use crate::system::MultiSystem;

/// Homogeneous parts with coefficients below this norm count as zero.
pub const VANISHING_TOL: f64 = 1e-10;

/// Residual bound accepted for a factorization found by [`solve_problem2`].
pub const PRODUCT_TOL: f64 = 1e-9;

/// Two candidate subspaces closer than this (projector distance) are merged.
const DEDUP_TOL: f64 = 1e-6;

/// Order of the zero of `θ` at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Multiplicity {
    /// Least degree of a nonzero homogeneous part.
    Order(usize),
    /// Every homogeneous part of degree `1..=cap` vanishes.
    VanishesUpTo(usize),
}

impl Multiplicity {
    pub fn order(self) -> Option<usize> {
        match self {
            Multiplicity::Order(m) => Some(m),
            Multiplicity::VanishesUpTo(_) => None,
        }
    }
}

/// Default search depth for [`multiplicity`]: `dim_x + 2`.
pub fn default_degree_cap(s: &MultiSystem) -> usize {
    s.dim_x + 2
}

/// Least degree `j ≤ degree_cap` of a nonzero Taylor coefficient.
pub fn multiplicity(s: &MultiSystem, degree_cap: usize) -> Multiplicity {
    let cap = degree_cap.max(1);
    let germ = s.taylor_until(cap, Some(VANISHING_TOL)).pruned(VANISHING_TOL);
    match germ.min_degree() {
        Some(m) => Multiplicity::Order(m),
        None => Multiplicity::VanishesUpTo(cap),
    }
}

/// A product `zL⁽¹⁾ ⋯ zL⁽ᵐ⁾` of linear pencils, stored in product order.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFactorChain {
    n_params: usize,
    factors: Vec<Vec<ComplexMatrix>>,
}

impl LinearFactorChain {
    /// Validates that there is at least one factor, every factor has
    /// `n_params` matrices of a common shape, and adjacent factors compose.
    pub fn new(factors: Vec<Vec<ComplexMatrix>>) -> Result<Self> {
        let first = factors
            .first()
            .ok_or_else(|| Error::InvalidArgument("a factor chain needs at least one factor".into()))?;
        let n_params = first.len();
        if n_params == 0 {
            return Err(Error::InvalidArgument("factors need at least one parameter".into()));
        }
        for (j, f) in factors.iter().enumerate() {
            if f.len() != n_params {
                return Err(Error::ListLength {
                    list: "factor",
                    expected: n_params,
                    found: f.len(),
                });
            }
            let shape = f[0].shape();
            for m in f {
                if m.shape() != shape {
                    return Err(Error::Shape {
                        what: format!("factor {}", j + 1),
                        expected: shape,
                        found: m.shape(),
                    });
                }
            }
            if j > 0 {
                let prev = &factors[j - 1][0];
                if prev.ncols() != shape.0 {
                    return Err(Error::Shape {
                        what: format!("factors {} and {}", j, j + 1),
                        expected: (prev.ncols(), shape.1),
                        found: shape,
                    });
                }
            }
        }
        Ok(LinearFactorChain { n_params, factors })
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Number of factors `m`.
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Dimensions of `Y⁽⁰⁾, Y⁽¹⁾, …, Y⁽ᵐ⁾`; factor `j` maps `Y⁽ʲ⁾` to `Y⁽ʲ⁻¹⁾`.
    pub fn spaces(&self) -> Vec<usize> {
        let mut out = vec![self.factors[0][0].nrows()];
        out.extend(self.factors.iter().map(|f| f[0].ncols()));
        out
    }

    /// The `N` matrices of factor `j` (zero-based).
    pub fn factor(&self, j: usize) -> &[ComplexMatrix] {
        &self.factors[j]
    }

    pub fn factors(&self) -> &[Vec<ComplexMatrix>] {
        &self.factors
    }

    /// `zL⁽ʲ⁾` for zero-based `j`.
    pub fn factor_eval(&self, j: usize, z: &[Complex64]) -> Result<ComplexMatrix> {
        self.check_point(z)?;
        let (r, c) = self.factors[j][0].shape();
        Ok(linear_combination(r, c, &self.factors[j], z))
    }

    pub fn eval(&self, z: &[Complex64]) -> Result<ComplexMatrix> {
        let mut out = self.factor_eval(0, z)?;
        for j in 1..self.len() {
            out *= self.factor_eval(j, z)?;
        }
        Ok(out)
    }

    /// The product as a homogeneous polynomial germ of degree `m`.
    pub fn expand(&self) -> Result<PolyGerm> {
        let mut out = PolyGerm::linear(&self.factors[0])?;
        for f in &self.factors[1..] {
            out = out.mul(&PolyGerm::linear(f)?)?;
        }
        Ok(out)
    }

    /// `max ‖ζL⁽ʲ⁾‖` over the given points, one entry per factor.
    pub fn max_factor_norms(&self, points: &[Vec<Complex64>]) -> Result<Vec<f64>> {
        let mut out = vec![0.0_f64; self.len()];
        for z in points {
            for (j, worst) in out.iter_mut().enumerate() {
                *worst = worst.max(op_norm(&self.factor_eval(j, z)?));
            }
        }
        Ok(out)
    }

    /// Chain of adjoint factors in reverse order.
    pub fn adjoint_reversed(&self) -> LinearFactorChain {
        LinearFactorChain {
            n_params: self.n_params,
            factors: self
                .factors
                .iter()
                .rev()
                .map(|f| f.iter().map(|m| m.adjoint()).collect())
                .collect(),
        }
    }

    fn check_point(&self, z: &[Complex64]) -> Result<()> {
        if z.len() != self.n_params {
            return Err(Error::ParamCount {
                expected: self.n_params,
                found: z.len(),
            });
        }
        Ok(())
    }
}

/// `φ(z) = φ(0) + θ_β(z)` where `β` is a system (so `θ_β(0) = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct TailFunction {
    pub constant: ComplexMatrix,
    pub vanishing_part: MultiSystem,
}

impl TailFunction {
    pub fn eval(&self, z: &[Complex64]) -> Result<ComplexMatrix> {
        Ok(&self.constant + self.vanishing_part.transfer_eval(z)?)
    }

    /// `z ↦ φ(z̄)*`.
    pub fn adjoint(&self) -> TailFunction {
        TailFunction {
            constant: self.constant.adjoint(),
            vanishing_part: self.vanishing_part.adjoint(),
        }
    }
}

fn require_order(s: &MultiSystem, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("multiplicity must be at least 1".into()));
    }
    if m > 1 {
        let d_norm = s.d.iter().map(op_norm).fold(0.0, f64::max);
        if d_norm > VANISHING_TOL {
            return Err(Error::Precondition(format!(
                "multiplicity {m} needs D = 0, but max ‖D_k‖ = {d_norm:.3e}"
            )));
        }
    }
    let germ = s.taylor_coefficients(m - 1);
    let worst = germ.iter().map(|(_, c)| c.norm()).fold(0.0, f64::max);
    if worst > VANISHING_TOL {
        return Err(Error::Precondition(format!(
            "θ has a nonzero homogeneous part below degree {m} (coefficient norm {worst:.3e})"
        )));
    }
    Ok(())
}

/// `θ(z) = zL⁽¹⁾ ⋯ zL⁽ᵐ⁾ φ(z)`.
///
/// `m` may be any order up to the multiplicity: every homogeneous part of
/// degree below `m` must vanish.
pub fn factor_left(s: &MultiSystem, m: usize) -> Result<(LinearFactorChain, TailFunction)> {
    require_order(s, m)?;
    let (n, dx, du, dy) = (s.n_params, s.dim_x, s.dim_u, s.dim_y);
    let ab: Vec<ComplexMatrix> = (0..n).map(|k| hstack(dx, &[&s.a[k], &s.b[k]])).collect();
    let factors = if m == 1 {
        vec![(0..n).map(|k| hstack(dy, &[&s.c[k], &s.d[k]])).collect()]
    } else {
        let mut f = vec![s.c.clone()];
        f.extend(std::iter::repeat_n(s.a.clone(), m - 2));
        f.push(ab);
        f
    };
    let chain = LinearFactorChain::new(factors)?;

    let pad_x = zeros(du, dx);
    let pad_u = zeros(du, du);
    let vanishing_part = MultiSystem::new(
        n,
        dx,
        du,
        dx + du,
        s.a.clone(),
        s.b.clone(),
        s.a.iter().map(|a| vstack(dx, &[a, &pad_x])).collect(),
        s.b.iter().map(|b| vstack(du, &[b, &pad_u])).collect(),
    )?;
    let constant = vstack(du, &[&zeros(dx, du), &identity(du)]);
    Ok((
        chain,
        TailFunction {
            constant,
            vanishing_part,
        },
    ))
}

/// `θ(z) = ψ(z) zR⁽ᵐ⁾ ⋯ zR⁽¹⁾`, from [`factor_left`] on the adjoint system.
///
/// The returned chain is in product order, i.e. its first factor is `R⁽ᵐ⁾`.
pub fn factor_right(s: &MultiSystem, m: usize) -> Result<(TailFunction, LinearFactorChain)> {
    let (chain, tail) = factor_left(&s.adjoint(), m)?;
    Ok((tail.adjoint(), chain.adjoint_reversed()))
}

/// Chain of a homogeneous transfer function `θ(z) = zC (zA)^{m−2} zB`
/// (or `zD` for `m = 1`).
///
/// Homogeneity is verified on Taylor coefficients up to degree
/// `m + dim_x + 1`.
pub fn factor_homogeneous(s: &MultiSystem, m: usize) -> Result<LinearFactorChain> {
    if m == 0 {
        return Err(Error::InvalidArgument("degree must be at least 1".into()));
    }
    let germ = s.taylor_coefficients(m + s.dim_x + 1);
    let stray = germ
        .iter()
        .filter(|(t, _)| t.degree() != m)
        .map(|(_, c)| c.norm())
        .fold(0.0, f64::max);
    if stray > VANISHING_TOL {
        return Err(Error::Precondition(format!(
            "θ is not homogeneous of degree {m} (stray coefficient norm {stray:.3e})"
        )));
    }
    let factors = if m == 1 {
        vec![s.d.clone()]
    } else {
        let mut f = vec![s.c.clone()];
        f.extend(std::iter::repeat_n(s.a.clone(), m - 2));
        f.push(s.b.clone());
        f
    };
    LinearFactorChain::new(factors)
}

fn krylov_closure(a: &[ComplexMatrix], start: &ComplexMatrix) -> Option<Subspace> {
    let n = start.nrows();
    let mut s = orthonormal_basis(start, DEFAULT_RANK_TOL).ok()?;
    loop {
        let q = s.basis().clone();
        let images: Vec<ComplexMatrix> = a.iter().map(|ak| ak * &q).collect();
        let mut blocks: Vec<&ComplexMatrix> = vec![&q];
        blocks.extend(images.iter());
        let next = orthonormal_basis(&hstack(n, &blocks), DEFAULT_RANK_TOL).ok()?;
        if next.dim() == s.dim() {
            return Some(next);
        }
        s = next;
    }
}

fn push_distinct(out: &mut Vec<Subspace>, s: &MultiSystem, cand: Subspace) {
    if out
        .iter()
        .any(|c| c.dim() == cand.dim() && c.distance(&cand) < DEDUP_TOL)
    {
        return;
    }
    if check_condition_i(s, &cand).unwrap_or(false) {
        out.push(cand);
    }
}

/// Common invariant subspaces of `{A_k}` to try as `X²`.
///
/// The list starts with `{0}`. Each of the `budget` draws alternates between
/// (a) the closure under all `A_k` of every eigenvector of a random
/// combination `Σ c_k A_k` (skipped when that combination vanishes) and
/// (b) extending a nested chain: the closure of the span of all random
/// vectors drawn so far. Near-duplicates are merged.
pub fn invariant_subspace_candidates(s: &MultiSystem, budget: usize, seed: u64) -> Vec<Subspace> {
    let dx = s.dim_x;
    let mut out = vec![Subspace::zero(dx)];
    if dx == 0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chain_vectors = zeros(dx, 0);
    let mut chain_full = false;
    for draw in 0..budget {
        if draw % 2 == 0 {
            let coeffs = random_gaussian(s.n_params, 1, &mut rng);
            let coeffs: Vec<Complex64> = coeffs.iter().copied().collect();
            let combo = linear_combination(dx, dx, &s.a, &coeffs);
            if op_norm(&combo) <= DEFAULT_RANK_TOL {
                continue;
            }
            for v in eigenvectors(&combo) {
                let start = ComplexMatrix::from_column_slice(dx, 1, v.as_slice());
                if let Some(c) = krylov_closure(&s.a, &start) {
                    push_distinct(&mut out, s, c);
                }
            }
        } else if !chain_full {
            let v = random_gaussian(dx, 1, &mut rng);
            chain_vectors = hstack(dx, &[&chain_vectors, &v]);
            if let Some(c) = krylov_closure(&s.a, &chain_vectors) {
                chain_full = c.is_whole();
                chain_vectors = c.basis().clone();
                push_distinct(&mut out, s, c);
            }
        } else {
            // keep the stream aligned with the draw count
            let _: f64 = rng.random();
        }
    }
    out
}

/// A factorization `θ = θ₂θ₁` through conservative systems.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationOutcome {
    pub theta2: MultiSystem,
    pub theta1: MultiSystem,
    pub intermediate_dim: usize,
    /// The invariant subspace of the closely connected part that produced
    /// the split, in that part's coordinates.
    pub witness_x2: Subspace,
    /// Sampled `max ‖θ − θ₂θ₁‖`.
    pub residual: f64,
}

/// Bounded search for a cascade decomposition of the closely connected part
/// of a conservative system with `D = 0`.
///
/// `Ok(None)` means the candidates were exhausted; it is not evidence that
/// no factorization exists.
pub fn solve_problem2(s: &MultiSystem, budget: usize, seed: u64) -> Result<Option<FactorizationOutcome>> {
    s.require_conservative()?;
    let d_norm = s.d.iter().map(op_norm).fold(0.0, f64::max);
    if d_norm > VANISHING_TOL {
        return Err(Error::Precondition(format!(
            "factorization search needs multiplicity > 1, i.e. D = 0 (max ‖D_k‖ = {d_norm:.3e})"
        )));
    }
    let cc = s.restrict_to_cc()?;
    for x2 in invariant_subspace_candidates(&cc, budget, seed) {
        if !condition_ii(&cc, &x2)?.holds {
            continue;
        }
        let dec = decompose(&cc, &x2)?;
        let residual = verify_factor_tf(s, &dec.alpha2, &dec.alpha1, 20, seed)?;
        if residual < PRODUCT_TOL {
            return Ok(Some(FactorizationOutcome {
                intermediate_dim: dec.intermediate.dim(),
                theta2: dec.alpha2,
                theta1: dec.alpha1,
                witness_x2: x2,
                residual,
            }));
        }
    }
    Ok(None)
}

/// The closely connected part of a cascade together with two subspaces that
/// split it again.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeWitness {
    /// `α_cc` for `α = α²α¹`.
    pub alpha_cc: MultiSystem,
    /// `X_cc` inside the cascade's state space; its basis gives the
    /// coordinates used by `alpha_cc`.
    pub cc_space: Subspace,
    /// Closure of `P_{X_cc} X²`, in `alpha_cc` coordinates.
    pub projected_x2: Subspace,
    /// `X_cc ∩ X²`, in `alpha_cc` coordinates.
    pub intersected_x2: Subspace,
}

/// Cascades two conservative systems, restricts to the closely connected
/// part and returns both candidate splitting subspaces.
pub fn from_factorization(alpha2: &MultiSystem, alpha1: &MultiSystem) -> Result<CascadeWitness> {
    alpha2.require_conservative()?;
    alpha1.require_conservative()?;
    let alpha = cascade(alpha2, alpha1)?;
    let (alpha_cc, cc_space) = alpha.restrict_to_cc_with_basis()?;
    let x2 = Subspace::coordinate(alpha.dim_x, 0..alpha2.dim_x);
    let projected_x2 = orthonormal_basis(&(cc_space.basis().adjoint() * x2.basis()), DEFAULT_RANK_TOL)?;
    let intersected_x2 = cc_space.coordinates_of(&subspace_intersection(&cc_space, &x2)?)?;
    Ok(CascadeWitness {
        alpha_cc,
        cc_space,
        projected_x2,
        intersected_x2,
    })
}
