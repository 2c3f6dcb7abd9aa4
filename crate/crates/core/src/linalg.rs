//! Dense complex matrix helpers shared by every other module.
//!
//! All operator blocks are stored as [`ComplexMatrix`], a dynamically sized
//! `nalgebra` matrix of `Complex64`. Zero-sized matrices are legal everywhere
//! (stateless systems have a zero-dimensional state space), so every helper
//! here guards the empty case instead of handing it to a decomposition.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Default relative threshold for every rank decision.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Condition-number ceiling above which `I - zA` is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn check_finite(m: &ComplexMatrix) -> Result<()> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            let v = m[(row, col)];
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
    }
    Ok(())
}

/// Spectral (operator 2-) norm.
pub fn op_norm(m: &ComplexMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Induced 1-norm (max column sum), used for condition estimates.
fn one_norm(m: &ComplexMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of a square matrix together with its 1-norm condition number.
pub fn inverse_with_condition(m: &ComplexMatrix) -> Result<(ComplexMatrix, f64)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((zeros(0, 0), 1.0));
    }
    let inv = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::NearSingular {
            condition: f64::INFINITY,
        })?;
    let condition = one_norm(m) * one_norm(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::NearSingular { condition });
    }
    Ok((inv, condition))
}

/// Horizontal concatenation; all blocks must share the row count `rows`.
pub fn hstack(rows: usize, blocks: &[&ComplexMatrix]) -> ComplexMatrix {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Vertical concatenation; all blocks must share the column count `cols`.
pub fn vstack(cols: usize, blocks: &[&ComplexMatrix]) -> ComplexMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(*b);
        at += b.nrows();
    }
    out
}

pub fn block_diag(blocks: &[&ComplexMatrix]) -> ComplexMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// `Σ_k z_k M_k` for matrices of a common shape `(rows, cols)`.
pub fn linear_combination(
    rows: usize,
    cols: usize,
    mats: &[ComplexMatrix],
    z: &[Complex64],
) -> ComplexMatrix {
    let mut out = zeros(rows, cols);
    for (m, zk) in mats.iter().zip(z) {
        out += m * *zk;
    }
    out
}

/// Complex Gaussian matrix with i.i.d. entries of unit variance.
pub fn random_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(s * re, s * im)
    })
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the phases of
/// `diag(R)` pushed back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    if n == 0 {
        return zeros(0, 0);
    }
    let qr = random_gaussian(n, n, rng).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn random_torus_point<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
        .collect()
}

/// Uniform sample from the closed polydisk of the given radius.
pub fn random_polydisk_point<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            let rho = radius * rng.random::<f64>().sqrt();
            Complex64::from_polar(rho, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect()
}

/// Eigenvectors of a square matrix, via the complex Schur form and
/// back-substitution on the triangular factor. Vectors are unit-normalised;
/// eigenvalues whose triangular solve breaks down are skipped.
pub fn eigenvectors(m: &ComplexMatrix) -> Vec<ComplexVector> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let Some(schur) = nalgebra::Schur::try_new(m.clone(), 1e-14, 10_000) else {
        return Vec::new();
    };
    let (q, t) = schur.unpack();
    let scale = op_norm(&t).max(1.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lambda = t[(i, i)];
        let mut y = ComplexVector::zeros(n);
        y[i] = c64(1.0, 0.0);
        let mut ok = true;
        for j in (0..i).rev() {
            let mut s = Complex64::new(0.0, 0.0);
            for l in (j + 1)..=i {
                s += t[(j, l)] * y[l];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < 1e-14 * scale {
                denom = c64(1e-14 * scale, 0.0);
            }
            y[j] = -s / denom;
            if !y[j].re.is_finite() || !y[j].im.is_finite() {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let v = &q * y;
        let nv = v.norm();
        if nv > 0.0 && nv.is_finite() {
            out.push(v / c64(nv, 0.0));
        }
    }
    out
}
