//! N-parametric systems `α = (N; A, B, C, D; X, U, Y)` with unit delay.
//!
//! The transfer function is `θ(z) = zD + zC (I − zA)⁻¹ zB`, where
//! `zT = Σ_k z_k T_k`. A system is conservative when the pencil
//! `ζG = Σ_k ζ_k [[A_k, B_k], [C_k, D_k]]` is unitary for every `ζ` on the
//! torus; matching Fourier coefficients of `ζ ↦ (ζG)*(ζG)` turns that into
//! the finitely many identities `Σ_k G_k*G_k = I`, `G_j*G_k = 0` (`j ≠ k`),
//! and their adjoint versions, which is what [`MultiSystem::is_conservative`]
//! checks.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::germ::{MultiIndex, PolyGerm, COEFF_DROP_TOL};
use crate::linalg::{
    block_diag, c64, check_finite, haar_unitary, hstack, identity, inverse_with_condition,
    linear_combination, op_norm, vstack, zeros, ComplexMatrix, DEFAULT_RANK_TOL,
};
use crate::subspace::{orthonormal_basis, Subspace};

/// Tolerance used when an operation requires a conservative input.
pub const CONSERVATIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiSystem {
    pub n_params: usize,
    pub dim_x: usize,
    pub dim_u: usize,
    pub dim_y: usize,
    pub a: Vec<ComplexMatrix>,
    pub b: Vec<ComplexMatrix>,
    pub c: Vec<ComplexMatrix>,
    pub d: Vec<ComplexMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservativityReport {
    pub is_isometric_family: bool,
    pub is_coisometric_family: bool,
    pub worst_residual: f64,
    /// Cross pair `(j, k)` with the largest violation of `G_j*G_k = 0` or
    /// `G_jG_k* = 0`, when that violation exceeds the tolerance.
    pub failing_pair: Option<(usize, usize)>,
    pub tol: f64,
}

impl ConservativityReport {
    pub fn is_conservative(&self) -> bool {
        self.is_isometric_family && self.is_coisometric_family
    }
}

/// Outcome of the sampled dissipativity check. A pass is only a necessary
/// condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Dissipativity {
    Pass { samples: usize, max_norm: f64 },
    Fail { witness: Vec<Complex64>, norm: f64, samples: usize },
}

impl Dissipativity {
    pub fn passed(&self) -> bool {
        matches!(self, Dissipativity::Pass { .. })
    }
}

impl MultiSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_params: usize,
        dim_x: usize,
        dim_u: usize,
        dim_y: usize,
        a: Vec<ComplexMatrix>,
        b: Vec<ComplexMatrix>,
        c: Vec<ComplexMatrix>,
        d: Vec<ComplexMatrix>,
    ) -> Result<Self> {
        let s = MultiSystem {
            n_params,
            dim_x,
            dim_u,
            dim_y,
            a,
            b,
            c,
            d,
        };
        s.validate()?;
        Ok(s)
    }

    /// Builds a system from its colligation blocks `G_k`, each of shape
    /// `(dim_x + dim_y) × (dim_x + dim_u)`.
    pub fn from_blocks(dim_x: usize, dim_u: usize, dim_y: usize, g: &[ComplexMatrix]) -> Result<Self> {
        let mut parts = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (k, gk) in g.iter().enumerate() {
            if gk.shape() != (dim_x + dim_y, dim_x + dim_u) {
                return Err(Error::Shape {
                    what: format!("G_{}", k + 1),
                    expected: (dim_x + dim_y, dim_x + dim_u),
                    found: gk.shape(),
                });
            }
            parts.0.push(gk.view((0, 0), (dim_x, dim_x)).into_owned());
            parts.1.push(gk.view((0, dim_x), (dim_x, dim_u)).into_owned());
            parts.2.push(gk.view((dim_x, 0), (dim_y, dim_x)).into_owned());
            parts.3.push(gk.view((dim_x, dim_x), (dim_y, dim_u)).into_owned());
        }
        MultiSystem::new(g.len(), dim_x, dim_u, dim_y, parts.0, parts.1, parts.2, parts.3)
    }

    /// The stateless system `θ(z) = zD`.
    pub fn stateless(d: Vec<ComplexMatrix>) -> Result<Self> {
        let n = d.len();
        let (dy, du) = d
            .first()
            .map(|m| m.shape())
            .ok_or_else(|| Error::InvalidArgument("need at least one parameter".into()))?;
        MultiSystem::new(
            n,
            0,
            du,
            dy,
            vec![zeros(0, 0); n],
            vec![zeros(0, du); n],
            vec![zeros(dy, 0); n],
            d,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_params == 0 {
            return Err(Error::InvalidArgument("n_params must be at least 1".into()));
        }
        let lists: [(&'static str, &Vec<ComplexMatrix>, (usize, usize)); 4] = [
            ("a", &self.a, (self.dim_x, self.dim_x)),
            ("b", &self.b, (self.dim_x, self.dim_u)),
            ("c", &self.c, (self.dim_y, self.dim_x)),
            ("d", &self.d, (self.dim_y, self.dim_u)),
        ];
        for (name, list, shape) in lists {
            if list.len() != self.n_params {
                return Err(Error::ListLength {
                    list: name,
                    expected: self.n_params,
                    found: list.len(),
                });
            }
            for (k, m) in list.iter().enumerate() {
                if m.shape() != shape {
                    return Err(Error::Shape {
                        what: format!("{}_{}", name, k + 1),
                        expected: shape,
                        found: m.shape(),
                    });
                }
                check_finite(m)?;
            }
        }
        Ok(())
    }

    /// The colligation block `G_k = [[A_k, B_k], [C_k, D_k]]` (zero-based `k`).
    pub fn block(&self, k: usize) -> ComplexMatrix {
        let top = hstack(self.dim_x, &[&self.a[k], &self.b[k]]);
        let bottom = hstack(self.dim_y, &[&self.c[k], &self.d[k]]);
        vstack(self.dim_x + self.dim_u, &[&top, &bottom])
    }

    pub fn blocks(&self) -> Vec<ComplexMatrix> {
        (0..self.n_params).map(|k| self.block(k)).collect()
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

    /// `zG = Σ_k z_k G_k`.
    pub fn pencil(&self, z: &[Complex64]) -> Result<ComplexMatrix> {
        self.check_point(z)?;
        Ok(linear_combination(
            self.dim_x + self.dim_y,
            self.dim_x + self.dim_u,
            &self.blocks(),
            z,
        ))
    }

    /// `θ(z) = zD + zC (I − zA)⁻¹ zB`.
    pub fn transfer_eval(&self, z: &[Complex64]) -> Result<ComplexMatrix> {
        self.check_point(z)?;
        let zd = linear_combination(self.dim_y, self.dim_u, &self.d, z);
        if self.dim_x == 0 {
            return Ok(zd);
        }
        let za = linear_combination(self.dim_x, self.dim_x, &self.a, z);
        let zb = linear_combination(self.dim_x, self.dim_u, &self.b, z);
        let zc = linear_combination(self.dim_y, self.dim_x, &self.c, z);
        let (resolvent, _) = inverse_with_condition(&(identity(self.dim_x) - za))?;
        Ok(zd + zc * resolvent * zb)
    }

    /// Taylor coefficients of `θ` up to total degree `max_total_degree`.
    ///
    /// Uses the recursion `P_{e_k} = B_k`, `P_t = Σ_k A_k P_{t−e_k}` for the
    /// coefficients of `(I − zA)⁻¹zB`, then `θ̂_t = Σ_k C_k P_{t−e_k}` for
    /// `|t| ≥ 2` and `θ̂_{e_k} = D_k`. Coefficients below
    /// [`COEFF_DROP_TOL`] are dropped.
    pub fn taylor_coefficients(&self, max_total_degree: usize) -> PolyGerm {
        self.taylor_until(max_total_degree, None)
    }

    /// Like [`taylor_coefficients`](Self::taylor_coefficients), but stops
    /// after the first degree holding a coefficient of norm at least
    /// `stop_tol`.
    pub(crate) fn taylor_until(&self, max_total_degree: usize, stop_tol: Option<f64>) -> PolyGerm {
        let n = self.n_params;
        let mut germ = PolyGerm::new(n, self.dim_u, self.dim_y);
        if max_total_degree == 0 {
            return germ;
        }
        for k in 0..n {
            if self.d[k].norm() >= COEFF_DROP_TOL {
                germ.insert(MultiIndex::unit(n, k), self.d[k].clone())
                    .expect("validated shapes");
            }
        }
        let stop = |g: &PolyGerm| stop_tol.is_some_and(|tol| g.iter().any(|(_, m)| m.norm() >= tol));
        if self.dim_x == 0 || stop(&germ) {
            return germ;
        }
        let mut layer: BTreeMap<MultiIndex, ComplexMatrix> = (0..n)
            .map(|k| (MultiIndex::unit(n, k), self.b[k].clone()))
            .collect();
        for _degree in 2..=max_total_degree {
            let mut out: BTreeMap<MultiIndex, ComplexMatrix> = BTreeMap::new();
            let mut next: BTreeMap<MultiIndex, ComplexMatrix> = BTreeMap::new();
            for (s, p) in &layer {
                for k in 0..n {
                    let t = s.plus(k);
                    let cp = &self.c[k] * p;
                    out.entry(t.clone())
                        .and_modify(|m| *m += &cp)
                        .or_insert(cp);
                    let ap = &self.a[k] * p;
                    next.entry(t).and_modify(|m| *m += &ap).or_insert(ap);
                }
            }
            for (t, m) in out {
                if m.norm() >= COEFF_DROP_TOL {
                    germ.insert(t, m).expect("validated shapes");
                }
            }
            if stop(&germ) {
                break;
            }
            layer = next;
        }
        germ
    }

    /// Algebraic conservativity test.
    pub fn is_conservative(&self, tol: f64) -> ConservativityReport {
        let g = self.blocks();
        let n_in = self.dim_x + self.dim_u;
        let n_out = self.dim_x + self.dim_y;

        let mut sum_iso = zeros(n_in, n_in);
        let mut sum_co = zeros(n_out, n_out);
        let mut worst_cross = 0.0;
        let mut worst_pair = None;
        let mut cross_iso = 0.0_f64;
        let mut cross_co = 0.0_f64;
        for j in 0..g.len() {
            sum_iso += g[j].adjoint() * &g[j];
            sum_co += &g[j] * g[j].adjoint();
            for k in 0..g.len() {
                if j == k {
                    continue;
                }
                let iso = op_norm(&(g[j].adjoint() * &g[k]));
                let co = op_norm(&(&g[j] * g[k].adjoint()));
                cross_iso = cross_iso.max(iso);
                cross_co = cross_co.max(co);
                if iso.max(co) > worst_cross {
                    worst_cross = iso.max(co);
                    worst_pair = Some((j, k));
                }
            }
        }
        let iso_res = op_norm(&(sum_iso - identity(n_in))).max(cross_iso);
        let co_res = op_norm(&(sum_co - identity(n_out))).max(cross_co);
        ConservativityReport {
            is_isometric_family: iso_res <= tol,
            is_coisometric_family: co_res <= tol,
            worst_residual: iso_res.max(co_res),
            failing_pair: if worst_cross > tol { worst_pair } else { None },
            tol,
        }
    }

    pub(crate) fn require_conservative(&self) -> Result<()> {
        let report = self.is_conservative(CONSERVATIVE_TOL);
        if !report.is_conservative() {
            return Err(Error::NotConservative {
                residual: report.worst_residual,
            });
        }
        Ok(())
    }

    /// Samples `‖ζG‖` on a quasi-random (Kronecker) sequence of torus points.
    pub fn is_dissipative_sampled(&self, n_samples: usize, tol: f64) -> Dissipativity {
        let mut max_norm: f64 = 0.0;
        for zeta in torus_sequence(self.n_params, n_samples) {
            let norm = op_norm(&self.pencil(&zeta).expect("length matches"));
            if norm > 1.0 + tol {
                return Dissipativity::Fail {
                    witness: zeta,
                    norm,
                    samples: n_samples,
                };
            }
            max_norm = max_norm.max(norm);
        }
        Dissipativity::Pass {
            samples: n_samples,
            max_norm,
        }
    }

    /// Smallest subspace containing every `B_k U` and `C_j* Y` that is
    /// invariant under all `A_k` and `A_k*`.
    pub fn closely_connected_subspace(&self) -> Subspace {
        self.closely_connected_subspace_tol(DEFAULT_RANK_TOL)
    }

    /// As [`closely_connected_subspace`](Self::closely_connected_subspace)
    /// with an explicit relative rank threshold.
    pub fn closely_connected_subspace_tol(&self, rank_tol: f64) -> Subspace {
        let dx = self.dim_x;
        let mut seeds: Vec<ComplexMatrix> = self.b.clone();
        seeds.extend(self.c.iter().map(|c| c.adjoint()));
        let refs: Vec<&ComplexMatrix> = seeds.iter().collect();
        let mut s = orthonormal_basis(&hstack(dx, &refs), rank_tol).expect("finite");
        let adjoints: Vec<ComplexMatrix> = self.a.iter().map(|a| a.adjoint()).collect();
        loop {
            let q = s.basis();
            let mut cols = vec![q.clone()];
            for (a, a_star) in self.a.iter().zip(&adjoints) {
                cols.push(a * q);
                cols.push(a_star * q);
            }
            let refs: Vec<&ComplexMatrix> = cols.iter().collect();
            let grown = orthonormal_basis(&hstack(dx, &refs), rank_tol).expect("finite");
            if grown.dim() == s.dim() {
                return s;
            }
            s = grown;
        }
    }

    pub fn is_closely_connected(&self) -> bool {
        self.closely_connected_subspace().dim() == self.dim_x
    }

    /// Compression of a conservative system to its closely connected part.
    pub fn restrict_to_cc(&self) -> Result<MultiSystem> {
        self.restrict_to_cc_with_basis().map(|(s, _)| s)
    }

    /// As [`restrict_to_cc`](Self::restrict_to_cc), also returning `X_cc`
    /// (whose basis gives the coordinates of the restricted state space).
    pub fn restrict_to_cc_with_basis(&self) -> Result<(MultiSystem, Subspace)> {
        self.require_conservative()?;
        let cc = self.closely_connected_subspace();
        Ok((self.compress(&cc), cc))
    }

    /// `(P A_k|S, P B_k, C_k|S, D_k)` in the coordinates of `s`'s basis.
    pub fn compress(&self, s: &Subspace) -> MultiSystem {
        let q = s.basis();
        let qh = q.adjoint();
        MultiSystem {
            n_params: self.n_params,
            dim_x: s.dim(),
            dim_u: self.dim_u,
            dim_y: self.dim_y,
            a: self.a.iter().map(|a| &qh * a * q).collect(),
            b: self.b.iter().map(|b| &qh * b).collect(),
            c: self.c.iter().map(|c| c * q).collect(),
            d: self.d.clone(),
        }
    }

    /// Maximal subspace reducing every `A_k` on which `ζA` is unitary for all
    /// `ζ` on the torus.
    ///
    /// Starting from the whole state space, each pass keeps the vectors `v ∈ M`
    /// with `(I − ΣA_k*A_k)v = 0`, `(I − ΣA_kA_k*)v = 0`, `A_j*A_k v = 0`,
    /// `A_jA_k* v = 0` (`j ≠ k`), and `A_k v, A_k* v ∈ M`, until the dimension
    /// stops dropping.
    pub fn unitary_part(&self) -> Subspace {
        self.unitary_part_tol(DEFAULT_RANK_TOL)
    }

    /// As [`unitary_part`](Self::unitary_part) with an explicit relative
    /// rank threshold.
    pub fn unitary_part_tol(&self, rank_tol: f64) -> Subspace {
        let dx = self.dim_x;
        let a = &self.a;
        let a_star: Vec<ComplexMatrix> = a.iter().map(|m| m.adjoint()).collect();
        let mut fixed: Vec<ComplexMatrix> = Vec::new();
        let mut iso = identity(dx);
        let mut co = identity(dx);
        for k in 0..a.len() {
            iso -= &a_star[k] * &a[k];
            co -= &a[k] * &a_star[k];
        }
        fixed.push(iso);
        fixed.push(co);
        for j in 0..a.len() {
            for k in 0..a.len() {
                if j != k {
                    fixed.push(&a_star[j] * &a[k]);
                    fixed.push(&a[j] * &a_star[k]);
                }
            }
        }

        let mut m = Subspace::whole(dx);
        loop {
            if m.is_zero() {
                return m;
            }
            let q = m.basis();
            let p_perp = identity(dx) - m.projector();
            let mut rows: Vec<ComplexMatrix> = fixed.iter().map(|f| f * q).collect();
            for k in 0..a.len() {
                rows.push(&p_perp * &a[k] * q);
                rows.push(&p_perp * &a_star[k] * q);
            }
            let refs: Vec<&ComplexMatrix> = rows.iter().collect();
            let stacked = vstack(m.dim(), &refs);
            let kernel = null_space(&stacked, rank_tol);
            if kernel.ncols() == m.dim() {
                return m;
            }
            m = orthonormal_basis(&(q * kernel), rank_tol).expect("finite");
        }
    }

    /// The system `(A*, C*, B*, D*; X, Y, U)`, whose transfer function is
    /// `z ↦ θ(z̄)*`.
    pub fn adjoint(&self) -> MultiSystem {
        let adj = |v: &Vec<ComplexMatrix>| v.iter().map(|m| m.adjoint()).collect::<Vec<_>>();
        MultiSystem {
            n_params: self.n_params,
            dim_x: self.dim_x,
            dim_u: self.dim_y,
            dim_y: self.dim_u,
            a: adj(&self.a),
            b: adj(&self.c),
            c: adj(&self.b),
            d: adj(&self.d),
        }
    }

    /// Scales every colligation block (the pencil `ζG` becomes `f·ζG`).
    pub fn scaled(&self, factor: f64) -> MultiSystem {
        let f = c64(factor, 0.0);
        let sc = |v: &Vec<ComplexMatrix>| v.iter().map(|m| m * f).collect::<Vec<_>>();
        MultiSystem {
            a: sc(&self.a),
            b: sc(&self.b),
            c: sc(&self.c),
            d: sc(&self.d),
            ..self.clone()
        }
    }

    /// Scales `C` and `D` so that the transfer function becomes `f·θ`.
    pub fn output_scaled(&self, factor: f64) -> MultiSystem {
        let f = c64(factor, 0.0);
        MultiSystem {
            c: self.c.iter().map(|m| m * f).collect(),
            d: self.d.iter().map(|m| m * f).collect(),
            ..self.clone()
        }
    }

    /// Re-expresses the state in the columns of the unitary `t`:
    /// `A ↦ t*At`, `B ↦ t*B`, `C ↦ Ct`.
    pub fn change_state_basis(&self, t: &ComplexMatrix) -> MultiSystem {
        let th = t.adjoint();
        MultiSystem {
            a: self.a.iter().map(|a| &th * a * t).collect(),
            b: self.b.iter().map(|b| &th * b).collect(),
            c: self.c.iter().map(|c| c * t).collect(),
            ..self.clone()
        }
    }

    /// Prepends a `dim`-dimensional state block on which every `A_k` acts as
    /// a random conservative pencil and which `B`, `C` do not touch. The
    /// result is conservative iff `self` is, and is never closely connected
    /// when `dim > 0`.
    pub fn with_decoupled_unitary_block(&self, dim: usize, seed: u64) -> MultiSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_unitary_pencil(self.n_params, dim, dim, &mut rng);
        let dx = dim + self.dim_x;
        MultiSystem {
            dim_x: dx,
            a: self
                .a
                .iter()
                .zip(&u)
                .map(|(a, uk)| block_diag(&[uk, a]))
                .collect(),
            b: self.b.iter().map(|b| vstack(self.dim_u, &[&zeros(dim, self.dim_u), b])).collect(),
            c: self.c.iter().map(|c| hstack(self.dim_y, &[&zeros(self.dim_y, dim), c])).collect(),
            ..self.clone()
        }
    }
}

/// Right null space (as columns) of `m`, by SVD with relative threshold
/// `rank_tol × (1 + σ_max)`.
fn null_space(m: &ComplexMatrix, rank_tol: f64) -> ComplexMatrix {
    let cols = m.ncols();
    if cols == 0 {
        return zeros(0, 0);
    }
    if m.nrows() == 0 {
        return identity(cols);
    }
    // pad to at least `cols` rows so V is square
    let padded = if m.nrows() < cols {
        vstack(cols, &[m, &zeros(cols - m.nrows(), cols)])
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let sigma_max = svd.singular_values.max();
    let threshold = rank_tol * (1.0 + sigma_max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] < threshold)
        .collect();
    let mut out = zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &v_t.row(i).adjoint());
    }
    out
}

/// `n` random blocks `P_k W` with `W` Haar-unitary on `C^cols` and
/// `{P_k}` an orthogonal resolution of the identity on `C^rows`
/// (`rows == cols`).
fn random_unitary_pencil(
    n: usize,
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<ComplexMatrix> {
    debug_assert_eq!(rows, cols);
    let w = haar_unitary(cols, rng);
    let v = haar_unitary(rows, rng);
    (0..n)
        .map(|k| {
            let mut vk = zeros(rows, rows);
            for col in (k..rows).step_by(n) {
                vk.set_column(col, &v.column(col));
            }
            &vk * vk.adjoint() * &w
        })
        .collect()
}

/// Random conservative system: `G_k = P_k W` with `W` Haar-unitary on
/// `X ⊕ U` and `{P_k}` a random orthogonal resolution of the identity on
/// `X ⊕ Y`. Requires `dim_u == dim_y`.
pub fn random_conservative(
    n_params: usize,
    dim_x: usize,
    dim_u: usize,
    dim_y: usize,
    seed: u64,
) -> Result<MultiSystem> {
    if dim_u != dim_y {
        return Err(Error::InvalidArgument(format!(
            "conservative generator needs dim_u == dim_y (got {dim_u} and {dim_y})"
        )));
    }
    if n_params == 0 {
        return Err(Error::InvalidArgument("n_params must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_unitary_pencil(n_params, dim_x + dim_y, dim_x + dim_u, &mut rng);
    MultiSystem::from_blocks(dim_x, dim_u, dim_y, &g)
}

/// Kronecker (additive recurrence) sequence on the torus `T^n`, using the
/// generalised golden ratio for dimension `n`.
pub fn torus_sequence(n: usize, count: usize) -> Vec<Vec<Complex64>> {
    // φ_n is the positive root of x^{n+1} = x + 1
    let mut phi = 2.0_f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (n as f64 + 1.0));
    }
    let alpha: Vec<f64> = (1..=n).map(|k| phi.powi(-(k as i32)).fract()).collect();
    (0..count)
        .map(|i| {
            alpha
                .iter()
                .map(|a| {
                    let frac = (0.5 + a * (i as f64 + 1.0)).fract();
                    Complex64::from_polar(1.0, std::f64::consts::TAU * frac)
                })
                .collect()
        })
        .collect()
}
