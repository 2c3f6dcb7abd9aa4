//! Subspaces of `C^n` stored by orthonormal bases.
//!
//! Every rank decision goes through [`orthonormal_basis`], a column-pivoted
//! Gram–Schmidt with one re-orthogonalisation pass. A column is kept only if
//! its residual exceeds `tol × (1 + largest input column norm)`.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::{check_finite, hstack, identity, op_norm, zeros, ComplexMatrix, DEFAULT_RANK_TOL};

/// Tolerance for "is contained in" checks on already-orthonormal data.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: ComplexMatrix,
}

impl Subspace {
    pub fn zero(ambient_dim: usize) -> Self {
        Subspace {
            basis: zeros(ambient_dim, 0),
        }
    }

    pub fn whole(ambient_dim: usize) -> Self {
        Subspace {
            basis: identity(ambient_dim),
        }
    }

    /// Span of the standard basis vectors `e_i`, `i ∈ range`.
    pub fn coordinate(ambient_dim: usize, range: Range<usize>) -> Self {
        assert!(range.end <= ambient_dim, "coordinate range out of bounds");
        let mut basis = zeros(ambient_dim, range.len());
        for (j, i) in range.enumerate() {
            basis[(i, j)] = crate::linalg::c64(1.0, 0.0);
        }
        Subspace { basis }
    }

    /// Wraps a basis that is claimed to be orthonormal, verifying the claim.
    pub fn from_orthonormal(basis: ComplexMatrix, tol: f64) -> Result<Self> {
        check_finite(&basis)?;
        let s = Subspace { basis };
        let residual = s.orthonormality_residual();
        if residual > tol {
            return Err(Error::NotOrthonormal { residual });
        }
        Ok(s)
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_whole(&self) -> bool {
        self.dim() == self.ambient_dim()
    }

    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    pub fn into_basis(self) -> ComplexMatrix {
        self.basis
    }

    pub fn projector(&self) -> ComplexMatrix {
        &self.basis * self.basis.adjoint()
    }

    /// `‖B*B − I‖`.
    pub fn orthonormality_residual(&self) -> f64 {
        op_norm(&(self.basis.adjoint() * &self.basis - identity(self.dim())))
    }

    /// `‖(I − P)V‖` for a block of column vectors `V`.
    pub fn residual(&self, vectors: &ComplexMatrix) -> f64 {
        assert_eq!(vectors.nrows(), self.ambient_dim());
        let proj = &self.basis * (self.basis.adjoint() * vectors);
        op_norm(&(vectors - proj))
    }

    /// Residual of `other` with respect to `self`; zero iff `other ⊆ self`.
    pub fn containment_residual(&self, other: &Subspace) -> f64 {
        self.residual(&other.basis)
    }

    /// Spectral norm of the projector difference.
    pub fn distance(&self, other: &Subspace) -> f64 {
        assert_eq!(self.ambient_dim(), other.ambient_dim());
        op_norm(&(self.projector() - other.projector()))
    }

    /// Lifts the subspace into `C^ambient`, placing its coordinates at
    /// rows `offset..offset + self.ambient_dim()`.
    pub fn embed(&self, ambient: usize, offset: usize) -> Subspace {
        assert!(offset + self.ambient_dim() <= ambient);
        let mut basis = zeros(ambient, self.dim());
        basis
            .view_mut((offset, 0), (self.ambient_dim(), self.dim()))
            .copy_from(&self.basis);
        Subspace { basis }
    }

    /// Expresses a subspace of `self`'s ambient space in the coordinates of
    /// `self`'s basis. The argument must lie inside `self`.
    pub fn coordinates_of(&self, inner: &Subspace) -> Result<Subspace> {
        let residual = self.containment_residual(inner);
        if residual > MEMBERSHIP_TOL {
            return Err(Error::NotContained { residual });
        }
        orthonormal_basis(&(self.basis.adjoint() * &inner.basis), DEFAULT_RANK_TOL)
    }
}

/// Orthonormal basis of the column span of `vectors`.
pub fn orthonormal_basis(vectors: &ComplexMatrix, tol: f64) -> Result<Subspace> {
    check_finite(vectors)?;
    let n = vectors.nrows();
    let mut work = vectors.clone();
    let largest = work
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    let threshold = tol * (1.0 + largest);
    let mut used = vec![false; work.ncols()];
    let mut cols: Vec<ComplexMatrix> = Vec::new();
    let mut basis = zeros(n, 0);

    while cols.len() < n {
        let pick = (0..work.ncols())
            .filter(|&j| !used[j])
            .map(|j| (j, work.column(j).norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((p, norm)) = pick else { break };
        if norm < threshold {
            break;
        }
        used[p] = true;
        let mut q: ComplexMatrix = work.columns(p, 1).into_owned();
        // second pass against the accepted basis
        q -= &basis * (basis.adjoint() * &q);
        let qn = q.norm();
        if qn < threshold {
            continue;
        }
        q /= crate::linalg::c64(qn, 0.0);
        for (j, &done) in used.iter().enumerate() {
            if !done {
                let coef = (q.adjoint() * work.column(j))[(0, 0)];
                let mut col = work.column_mut(j);
                col -= q.column(0) * coef;
            }
        }
        cols.push(q);
        let refs: Vec<&ComplexMatrix> = cols.iter().collect();
        basis = hstack(n, &refs);
    }
    Ok(Subspace { basis })
}

fn check_ambient(a: &Subspace, b: &Subspace) -> Result<()> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::AmbientMismatch {
            left: a.ambient_dim(),
            right: b.ambient_dim(),
        });
    }
    Ok(())
}

/// `span(a ∪ b)`.
pub fn subspace_sum(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    check_ambient(a, b)?;
    orthonormal_basis(&hstack(a.ambient_dim(), &[&a.basis, &b.basis]), DEFAULT_RANK_TOL)
}

fn complement_in_whole(a: &Subspace) -> Result<Subspace> {
    let n = a.ambient_dim();
    orthonormal_basis(&(identity(n) - a.projector()), DEFAULT_RANK_TOL)
}

/// `a ∩ b`, computed as `(a^⊥ + b^⊥)^⊥`.
pub fn subspace_intersection(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    check_ambient(a, b)?;
    let sum = subspace_sum(&complement_in_whole(a)?, &complement_in_whole(b)?)?;
    complement_in_whole(&sum)
}

/// `within ⊖ a`; requires `a ⊆ within`.
pub fn orthogonal_complement(a: &Subspace, within: &Subspace) -> Result<Subspace> {
    check_ambient(a, within)?;
    let residual = within.containment_residual(a);
    if residual > MEMBERSHIP_TOL {
        return Err(Error::NotContained { residual });
    }
    let w = &within.basis;
    let projected = w - &a.basis * (a.basis.adjoint() * w);
    orthonormal_basis(&projected, DEFAULT_RANK_TOL)
}

/// Whether `m s ⊆ s`, judged by `‖(I − P_s) m B_s‖ < tol`.
pub fn is_invariant(m: &ComplexMatrix, s: &Subspace, tol: f64) -> Result<bool> {
    let n = s.ambient_dim();
    if m.shape() != (n, n) {
        return Err(Error::Shape {
            what: "invariance test matrix".into(),
            expected: (n, n),
            found: m.shape(),
        });
    }
    Ok(s.residual(&(m * &s.basis)) < tol)
}

/// Orthonormal basis of `m s`.
pub fn image_subspace(m: &ComplexMatrix, s: &Subspace) -> Result<Subspace> {
    if m.ncols() != s.ambient_dim() {
        return Err(Error::Shape {
            what: "image map".into(),
            expected: (m.nrows(), s.ambient_dim()),
            found: m.shape(),
        });
    }
    orthonormal_basis(&(m * &s.basis), DEFAULT_RANK_TOL)
}
