//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use multisys::linalg::{block_diag, identity, op_norm, ComplexMatrix};
use multisys::subspace::{orthonormal_basis, Subspace};
use multisys::system::MultiSystem;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn torus_point(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
        .collect()
}

/// Point with every coordinate of modulus at most `radius`.
pub fn polydisk_point(n: usize, radius: f64, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            let rho = radius * rng.random::<f64>();
            Complex64::from_polar(rho, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect()
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    })
}

fn combo(mats: &[ComplexMatrix], z: &[Complex64]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(mats[0].nrows(), mats[0].ncols());
    for (m, zk) in mats.iter().zip(z) {
        out += m * *zk;
    }
    out
}

/// `ζG` assembled block by block from `A, B, C, D`.
pub fn pencil(s: &MultiSystem, z: &[Complex64]) -> ComplexMatrix {
    let (dx, du, dy) = (s.dim_x, s.dim_u, s.dim_y);
    let mut g = ComplexMatrix::zeros(dx + dy, dx + du);
    g.view_mut((0, 0), (dx, dx)).copy_from(&combo(&s.a, z));
    g.view_mut((0, dx), (dx, du)).copy_from(&combo(&s.b, z));
    g.view_mut((dx, 0), (dy, dx)).copy_from(&combo(&s.c, z));
    g.view_mut((dx, dx), (dy, du)).copy_from(&combo(&s.d, z));
    g
}

/// Whether `ζG` is unitary to within `tol` at `points` random torus points.
pub fn torus_unitary(s: &MultiSystem, points: usize, tol: f64, seed: u64) -> bool {
    let mut rng = rng(seed);
    let (n_in, n_out) = (s.dim_x + s.dim_u, s.dim_x + s.dim_y);
    (0..points).all(|_| {
        let g = pencil(s, &torus_point(s.n_params, &mut rng));
        op_norm(&(g.adjoint() * &g - identity(n_in))) < tol
            && op_norm(&(&g * g.adjoint() - identity(n_out))) < tol
    })
}

/// `θ(z)` by the Neumann series `zD + Σ_j zC (zA)^j zB`.
pub fn neumann_transfer(s: &MultiSystem, z: &[Complex64], terms: usize) -> ComplexMatrix {
    let mut out = combo(&s.d, z);
    if s.dim_x == 0 {
        return out;
    }
    let (za, zc) = (combo(&s.a, z), combo(&s.c, z));
    let mut p = combo(&s.b, z);
    for _ in 0..terms {
        out += &zc * &p;
        p = &za * p;
    }
    out
}

/// Sampled form of the defect condition: `(ζG)*(X² ⊕ Y)` is the same
/// subspace at every sampled torus point and has no input component.
pub fn sampled_condition_ii(s: &MultiSystem, x2: &Subspace, points: usize, seed: u64) -> bool {
    let mut rng = rng(seed);
    let w = block_diag(&[x2.basis(), &identity(s.dim_y)]);
    let mut first: Option<Subspace> = None;
    for _ in 0..points {
        let zeta = torus_point(s.n_params, &mut rng);
        let img = orthonormal_basis(&(pencil(s, &zeta).adjoint() * &w), 1e-9).unwrap();
        if op_norm(&img.basis().rows(s.dim_x, s.dim_u).into_owned()) > 1e-8 {
            return false;
        }
        match &first {
            None => first = Some(img),
            Some(f) => {
                if f.dim() != img.dim() || f.distance(&img) > 1e-8 {
                    return false;
                }
            }
        }
    }
    true
}
