//! Cascade connection of two systems and its inverse, the cascade
//! decomposition of a conservative system along an `A`-invariant subspace.
//!
//! The cascade `α = α²α¹` has state space `X² ⊕ V ⊕ X¹`, where `V` is the
//! output space of `α¹` (and input space of `α²`):
//!
//! ```text
//!        | A²  B²  0  |        | 0  |
//!  A_k = | 0   0   C¹ |  B_k = | D¹ |  C_k = [C²  D²  0]  D_k = 0
//!        | 0   0   A¹ |        | B¹ |
//! ```
//!
//! and its transfer function is `θ_α = θ_{α²} θ_{α¹}`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    block_diag, hstack, identity, op_norm, random_polydisk_point, vstack, zeros, ComplexMatrix,
    DEFAULT_RANK_TOL,
};
use crate::subspace::{
    is_invariant, orthogonal_complement, orthonormal_basis, subspace_sum, Subspace, MEMBERSHIP_TOL,
};
use crate::system::{MultiSystem, CONSERVATIVE_TOL};

/// Tolerance for the invariance test of condition (i).
pub const INVARIANCE_TOL: f64 = 1e-8;

/// Subsystems extracted by [`decompose`], with the three mutually orthogonal
/// pieces of the source state space they live on.
#[derive(Debug, Clone)]
pub struct CascadeDecomposition {
    pub alpha2: MultiSystem,
    pub alpha1: MultiSystem,
    pub intermediate: Subspace,
    pub x2: Subspace,
    pub x1: Subspace,
}

impl CascadeDecomposition {
    /// Unitary `[Q_{X²} Q_V Q_{X¹}]` mapping cascade coordinates to source
    /// coordinates.
    pub fn basis_change(&self) -> ComplexMatrix {
        let n = self.x2.ambient_dim();
        hstack(n, &[self.x2.basis(), self.intermediate.basis(), self.x1.basis()])
    }

    /// `max_k ‖G^{cascade}_k − diag(T*, I) G^{source}_k diag(T, I)‖` with `T`
    /// the recorded basis change.
    pub fn reassembly_residual(&self, source: &MultiSystem) -> Result<f64> {
        let rebuilt = cascade(&self.alpha2, &self.alpha1)?;
        let moved = source.change_state_basis(&self.basis_change());
        Ok((0..source.n_params)
            .map(|k| op_norm(&(rebuilt.block(k) - moved.block(k))))
            .fold(0.0, f64::max))
    }
}

/// Detailed verdict of condition (ii).
#[derive(Debug, Clone)]
pub struct ConditionIiReport {
    pub holds: bool,
    /// `dim Σ_k G_k*(X² ⊕ Y)`.
    pub span_dim: usize,
    /// `dim X² + dim Y`, the dimension of each `(ζG)*(X² ⊕ Y)`.
    pub expected_dim: usize,
    /// Norm of the input-space component of that span; it must vanish for the
    /// intermediate space to sit inside the state space.
    pub input_leak: f64,
    /// `V` as a subspace of the state space; `{0}` when the condition fails.
    pub intermediate: Subspace,
}

fn check_same_params(a: &MultiSystem, b: &MultiSystem) -> Result<()> {
    if a.n_params != b.n_params {
        return Err(Error::ParamCount {
            expected: a.n_params,
            found: b.n_params,
        });
    }
    Ok(())
}

/// The cascade connection `α²α¹` (`α¹` acts first).
pub fn cascade(alpha2: &MultiSystem, alpha1: &MultiSystem) -> Result<MultiSystem> {
    check_same_params(alpha2, alpha1)?;
    if alpha1.dim_y != alpha2.dim_u {
        return Err(Error::Shape {
            what: "cascade intermediate space".into(),
            expected: (alpha2.dim_u, alpha2.dim_u),
            found: (alpha1.dim_y, alpha1.dim_y),
        });
    }
    let (x2, v, x1) = (alpha2.dim_x, alpha1.dim_y, alpha1.dim_x);
    let (du, dy) = (alpha1.dim_u, alpha2.dim_y);
    let dx = x2 + v + x1;
    let n = alpha2.n_params;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    for k in 0..n {
        let mut ak = zeros(dx, dx);
        ak.view_mut((0, 0), (x2, x2)).copy_from(&alpha2.a[k]);
        ak.view_mut((0, x2), (x2, v)).copy_from(&alpha2.b[k]);
        ak.view_mut((x2, x2 + v), (v, x1)).copy_from(&alpha1.c[k]);
        ak.view_mut((x2 + v, x2 + v), (x1, x1)).copy_from(&alpha1.a[k]);
        a.push(ak);
        b.push(vstack(du, &[&zeros(x2, du), &alpha1.d[k], &alpha1.b[k]]));
        c.push(hstack(dy, &[&alpha2.c[k], &alpha2.d[k], &zeros(dy, x1)]));
    }
    MultiSystem::new(n, dx, du, dy, a, b, c, vec![zeros(dy, du); n])
}

fn check_state_ambient(s: &MultiSystem, x2: &Subspace) -> Result<()> {
    if x2.ambient_dim() != s.dim_x {
        return Err(Error::AmbientMismatch {
            left: s.dim_x,
            right: x2.ambient_dim(),
        });
    }
    Ok(())
}

fn invariance_residual(s: &MultiSystem, x2: &Subspace) -> f64 {
    s.a.iter()
        .map(|a| x2.residual(&(a * x2.basis())))
        .fold(0.0, f64::max)
}

/// Condition (i): `x2` is invariant under every `A_k`.
pub fn check_condition_i(s: &MultiSystem, x2: &Subspace) -> Result<bool> {
    check_state_ambient(s, x2)?;
    for a in &s.a {
        if !is_invariant(a, x2, INVARIANCE_TOL)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Condition (ii) decided by a rank count.
///
/// `(ζG)*(X² ⊕ Y) ⊆ M := Σ_k G_k*(X² ⊕ Y)` for every `ζ`, and each
/// `(ζG)*(X² ⊕ Y)` has dimension `dim X² + dim Y` when `ζG` is unitary;
/// conversely a constant image contains every Fourier coefficient
/// `G_k* w`. So the images are constant iff `dim M = dim X² + dim Y`. The
/// intermediate space `V = M ⊖ X²` must also lie in the state space, i.e.
/// `M` may have no input component.
pub fn condition_ii(s: &MultiSystem, x2: &Subspace) -> Result<ConditionIiReport> {
    condition_ii_tol(s, x2, DEFAULT_RANK_TOL)
}

/// As [`condition_ii`] with an explicit relative rank threshold.
pub fn condition_ii_tol(s: &MultiSystem, x2: &Subspace, rank_tol: f64) -> Result<ConditionIiReport> {
    check_state_ambient(s, x2)?;
    let report = s.is_conservative(CONSERVATIVE_TOL);
    if !report.is_conservative() {
        return Err(Error::Precondition(format!(
            "condition (ii) needs a conservative system (residual {:.3e})",
            report.worst_residual
        )));
    }
    if !check_condition_i(s, x2)? {
        return Err(Error::Precondition(format!(
            "condition (ii) needs condition (i) (invariance residual {:.3e})",
            invariance_residual(s, x2)
        )));
    }
    let (dx, du, dy) = (s.dim_x, s.dim_u, s.dim_y);
    let w = block_diag(&[x2.basis(), &identity(dy)]);
    let images: Vec<ComplexMatrix> = s.blocks().iter().map(|g| g.adjoint() * &w).collect();
    let refs: Vec<&ComplexMatrix> = images.iter().collect();
    let m = orthonormal_basis(&hstack(dx + du, &refs), rank_tol)?;
    let expected_dim = x2.dim() + dy;
    let input_leak = op_norm(&m.basis().rows(dx, du).into_owned());
    let holds = m.dim() == expected_dim && input_leak < MEMBERSHIP_TOL;
    let intermediate = if holds {
        let v = orthogonal_complement(&x2.embed(dx + du, 0), &m)?;
        orthonormal_basis(&v.basis().rows(0, dx).into_owned(), rank_tol)?
    } else {
        Subspace::zero(dx)
    };
    Ok(ConditionIiReport {
        holds,
        span_dim: m.dim(),
        expected_dim,
        input_leak,
        intermediate,
    })
}

/// Condition (ii) verdict together with the intermediate space `V`.
pub fn check_condition_ii(s: &MultiSystem, x2: &Subspace) -> Result<(bool, Subspace)> {
    let r = condition_ii(s, x2)?;
    Ok((r.holds, r.intermediate))
}

/// Splits a conservative system as a cascade along `x2`.
///
/// With `V` from condition (ii) and `X¹ = X ⊖ (X² ⊕ V)`, the subsystems are
/// the compressions `P_{X¹⊕V} G_k|X¹⊕U` and `P_{X²⊕Y} G_k|X²⊕V`, written in
/// orthonormal bases of `X²`, `V`, `X¹`.
pub fn decompose(s: &MultiSystem, x2: &Subspace) -> Result<CascadeDecomposition> {
    decompose_tol(s, x2, DEFAULT_RANK_TOL)
}

/// As [`decompose`] with an explicit relative rank threshold.
pub fn decompose_tol(s: &MultiSystem, x2: &Subspace, rank_tol: f64) -> Result<CascadeDecomposition> {
    check_state_ambient(s, x2)?;
    if !s.is_conservative(CONSERVATIVE_TOL).is_conservative() {
        return Err(Error::NotConservative {
            residual: s.is_conservative(CONSERVATIVE_TOL).worst_residual,
        });
    }
    if !check_condition_i(s, x2)? {
        return Err(Error::ConditionFailed {
            condition: "i",
            residual: invariance_residual(s, x2),
        });
    }
    let r = condition_ii_tol(s, x2, rank_tol)?;
    if !r.holds {
        return Err(Error::ConditionFailed {
            condition: "ii",
            residual: (r.span_dim as f64 - r.expected_dim as f64).abs().max(r.input_leak),
        });
    }
    let v = r.intermediate;
    let x1 = orthogonal_complement(&subspace_sum(x2, &v)?, &Subspace::whole(s.dim_x))?;

    let (q2, qv, q1) = (x2.basis(), v.basis(), x1.basis());
    let n = s.n_params;
    let alpha1 = MultiSystem::new(
        n,
        x1.dim(),
        s.dim_u,
        v.dim(),
        s.a.iter().map(|a| q1.adjoint() * a * q1).collect(),
        s.b.iter().map(|b| q1.adjoint() * b).collect(),
        s.a.iter().map(|a| qv.adjoint() * a * q1).collect(),
        s.b.iter().map(|b| qv.adjoint() * b).collect(),
    )?;
    let alpha2 = MultiSystem::new(
        n,
        x2.dim(),
        v.dim(),
        s.dim_y,
        s.a.iter().map(|a| q2.adjoint() * a * q2).collect(),
        s.a.iter().map(|a| q2.adjoint() * a * qv).collect(),
        s.c.iter().map(|c| c * q2).collect(),
        s.c.iter().map(|c| c * qv).collect(),
    )?;
    Ok(CascadeDecomposition {
        alpha2,
        alpha1,
        intermediate: v,
        x2: x2.clone(),
        x1,
    })
}

/// `max ‖θ_α(z) − θ_{α²}(z) θ_{α¹}(z)‖` over `n_points` samples from the
/// polydisk of radius 1/2.
pub fn verify_factor_tf(
    alpha: &MultiSystem,
    alpha2: &MultiSystem,
    alpha1: &MultiSystem,
    n_points: usize,
    seed: u64,
) -> Result<f64> {
    check_same_params(alpha, alpha2)?;
    check_same_params(alpha, alpha1)?;
    if alpha1.dim_y != alpha2.dim_u || alpha.dim_u != alpha1.dim_u || alpha.dim_y != alpha2.dim_y {
        return Err(Error::Shape {
            what: "factor spaces".into(),
            expected: (alpha.dim_y, alpha.dim_u),
            found: (alpha2.dim_y, alpha1.dim_u),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_points {
        let z: Vec<Complex64> = random_polydisk_point(alpha.n_params, 0.5, &mut rng);
        let lhs = alpha.transfer_eval(&z)?;
        let rhs = alpha2.transfer_eval(&z)? * alpha1.transfer_eval(&z)?;
        worst = worst.max(op_norm(&(lhs - rhs)));
    }
    Ok(worst)
}

/// Close-connectedness verdicts for a cascade and its two factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClosConReport {
    pub cascade_closely_connected: bool,
    pub alpha2_closely_connected: bool,
    pub alpha1_closely_connected: bool,
}

/// Checks that a closely connected cascade has closely connected factors.
pub fn closcon_property_check(alpha2: &MultiSystem, alpha1: &MultiSystem) -> Result<ClosConReport> {
    for (name, s) in [("alpha2", alpha2), ("alpha1", alpha1)] {
        let r = s.is_conservative(CONSERVATIVE_TOL);
        if !r.is_conservative() {
            return Err(Error::Precondition(format!(
                "{name} is not conservative (residual {:.3e})",
                r.worst_residual
            )));
        }
    }
    let joined = cascade(alpha2, alpha1)?;
    let report = ClosConReport {
        cascade_closely_connected: joined.is_closely_connected(),
        alpha2_closely_connected: alpha2.is_closely_connected(),
        alpha1_closely_connected: alpha1.is_closely_connected(),
    };
    if report.cascade_closely_connected
        && !(report.alpha2_closely_connected && report.alpha1_closely_connected)
    {
        return Err(Error::ImplicationViolated(format!("{report:?}")));
    }
    Ok(report)
}
