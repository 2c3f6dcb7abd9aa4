//! Finite Taylor germs `θ(z) = Σ_t θ̂_t z^t` with matrix coefficients, and
//! the word-indexed shift realization that turns a germ into a system.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{check_finite, zeros, ComplexMatrix};
use crate::system::MultiSystem;

/// Coefficients with Frobenius norm below this are treated as absent.
pub const COEFF_DROP_TOL: f64 = 1e-12;

/// A multi-index `t ∈ Z^N_+`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        MultiIndex(entries)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// The unit index `e_k` (zero-based `k`).
    pub fn unit(n: usize, k: usize) -> Self {
        let mut v = vec![0; n];
        v[k] = 1;
        MultiIndex(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total degree `|t|`.
    pub fn degree(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn plus(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        v[k] += 1;
        MultiIndex(v)
    }

    pub fn minus(&self, k: usize) -> Option<Self> {
        if self.0[k] == 0 {
            return None;
        }
        let mut v = self.0.clone();
        v[k] -= 1;
        Some(MultiIndex(v))
    }

    pub fn add(&self, other: &MultiIndex) -> Self {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `z^t`.
    pub fn monomial(&self, z: &[Complex64]) -> Complex64 {
        self.0
            .iter()
            .zip(z)
            .fold(Complex64::new(1.0, 0.0), |acc, (&e, &zk)| acc * zk.powu(e as u32))
    }

    /// `t! / |t|!`, the reciprocal of the number of words with abelianization `t`.
    pub fn word_share(&self) -> f64 {
        let mut ratio = 1.0;
        let mut total = 0usize;
        for &e in &self.0 {
            for i in 1..=e {
                total += 1;
                ratio *= i as f64 / total as f64;
            }
        }
        ratio
    }

    /// Abelianization of a word over `{0, …, n−1}`.
    pub fn from_word(n: usize, word: &[usize]) -> Self {
        let mut v = vec![0; n];
        for &k in word {
            v[k] += 1;
        }
        MultiIndex(v)
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// All multi-indices of length `n` with total degree `d`, in lexicographic order.
pub fn indices_of_degree(n: usize, d: usize) -> Vec<MultiIndex> {
    fn rec(n: usize, d: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if prefix.len() + 1 == n {
            prefix.push(d);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for e in (0..=d).rev() {
            prefix.push(e);
            rec(n, d - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, d, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

/// Finite map from multi-indices to `dim_y × dim_u` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyGerm {
    n_params: usize,
    dim_u: usize,
    dim_y: usize,
    coeffs: BTreeMap<MultiIndex, ComplexMatrix>,
}

impl PolyGerm {
    pub fn new(n_params: usize, dim_u: usize, dim_y: usize) -> Self {
        PolyGerm {
            n_params,
            dim_u,
            dim_y,
            coeffs: BTreeMap::new(),
        }
    }

    /// The linear germ `z ↦ Σ_k z_k M_k`.
    pub fn linear(mats: &[ComplexMatrix]) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::InvalidArgument("linear germ needs at least one matrix".into()))?;
        let mut g = PolyGerm::new(mats.len(), first.ncols(), first.nrows());
        for (k, m) in mats.iter().enumerate() {
            g.insert(MultiIndex::unit(mats.len(), k), m.clone())?;
        }
        Ok(g)
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn dim_u(&self) -> usize {
        self.dim_u
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    /// Stores `coeff` at `index`, replacing any previous value. Exact zeros
    /// are not stored.
    pub fn insert(&mut self, index: MultiIndex, coeff: ComplexMatrix) -> Result<()> {
        if index.len() != self.n_params {
            return Err(Error::ParamCount {
                expected: self.n_params,
                found: index.len(),
            });
        }
        if coeff.shape() != (self.dim_y, self.dim_u) {
            return Err(Error::Shape {
                what: format!("germ coefficient at {index:?}"),
                expected: (self.dim_y, self.dim_u),
                found: coeff.shape(),
            });
        }
        check_finite(&coeff)?;
        if coeff.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
            self.coeffs.remove(&index);
        } else {
            self.coeffs.insert(index, coeff);
        }
        Ok(())
    }

    /// Adds `coeff` to the coefficient at `index`.
    pub fn accumulate(&mut self, index: MultiIndex, coeff: &ComplexMatrix) -> Result<()> {
        let sum = match self.coeffs.get(&index) {
            Some(c) => c + coeff,
            None => coeff.clone(),
        };
        self.insert(index, sum)
    }

    pub fn get(&self, index: &MultiIndex) -> Option<&ComplexMatrix> {
        self.coeffs.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &ComplexMatrix)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn max_degree(&self) -> Option<usize> {
        self.coeffs.keys().map(MultiIndex::degree).max()
    }

    pub fn min_degree(&self) -> Option<usize> {
        self.coeffs.keys().map(MultiIndex::degree).min()
    }

    pub fn is_homogeneous(&self, degree: usize) -> bool {
        self.coeffs.keys().all(|t| t.degree() == degree)
    }

    pub fn homogeneous_part(&self, degree: usize) -> PolyGerm {
        PolyGerm {
            coeffs: self
                .coeffs
                .iter()
                .filter(|(t, _)| t.degree() == degree)
                .map(|(t, c)| (t.clone(), c.clone()))
                .collect(),
            ..PolyGerm::new(self.n_params, self.dim_u, self.dim_y)
        }
    }

    /// Removes coefficients whose Frobenius norm is below `tol`.
    pub fn pruned(mut self, tol: f64) -> PolyGerm {
        self.coeffs.retain(|_, c| c.norm() >= tol);
        self
    }

    pub fn scaled(&self, factor: Complex64) -> PolyGerm {
        PolyGerm {
            coeffs: self.coeffs.iter().map(|(t, c)| (t.clone(), c * factor)).collect(),
            ..self.clone()
        }
    }

    pub fn eval(&self, z: &[Complex64]) -> Result<ComplexMatrix> {
        if z.len() != self.n_params {
            return Err(Error::ParamCount {
                expected: self.n_params,
                found: z.len(),
            });
        }
        let mut out = zeros(self.dim_y, self.dim_u);
        for (t, c) in &self.coeffs {
            out += c * t.monomial(z);
        }
        Ok(out)
    }

    /// Product `self · rhs` of germs (`rhs` is applied first).
    pub fn mul(&self, rhs: &PolyGerm) -> Result<PolyGerm> {
        if self.n_params != rhs.n_params {
            return Err(Error::ParamCount {
                expected: self.n_params,
                found: rhs.n_params,
            });
        }
        if self.dim_u != rhs.dim_y {
            return Err(Error::Shape {
                what: "germ product".into(),
                expected: (self.dim_u, rhs.dim_u),
                found: (rhs.dim_y, rhs.dim_u),
            });
        }
        let mut out = PolyGerm::new(self.n_params, rhs.dim_u, self.dim_y);
        for (s, a) in &self.coeffs {
            for (t, b) in &rhs.coeffs {
                out.accumulate(s.add(t), &(a * b))?;
            }
        }
        Ok(out)
    }

    /// Largest coefficientwise Frobenius difference, over the union of supports.
    pub fn max_coeff_diff(&self, other: &PolyGerm) -> f64 {
        let zero = zeros(self.dim_y, self.dim_u);
        self.coeffs
            .keys()
            .chain(other.coeffs.keys())
            .map(|t| {
                let a = self.coeffs.get(t).unwrap_or(&zero);
                let b = other.coeffs.get(t).unwrap_or(&zero);
                (a - b).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Word-indexed shift realization of a germ with no constant term.
///
/// The state space holds one copy of `U` per word `w` over `{0, …, N−1}` of
/// length `1..d` (`d` the top degree), words ordered by length and then
/// lexicographically. `B_k` injects into slot `(k)`, `A_k` appends the
/// letter `k` (slot `w` to slot `wk`, dropping words of length `d`), and `C_k`
/// reads slot `w` with weight `θ̂_t · t!/|t|!` where `t` abelianizes `wk`.
/// Every word contributes an equal share of its abelian coefficient, so the
/// Taylor expansion of the result reproduces the germ.
pub fn realize_germ(g: &PolyGerm) -> Result<MultiSystem> {
    let n = g.n_params;
    if n == 0 {
        return Err(Error::InvalidArgument("germ has zero parameters".into()));
    }
    if let Some((t, _)) = g.iter().find(|(t, _)| t.degree() == 0) {
        return Err(Error::Precondition(format!(
            "germ has a constant term at {t:?}; realizable germs vanish at the origin"
        )));
    }
    let (du, dy) = (g.dim_u, g.dim_y);
    let top = g.max_degree().unwrap_or(1);

    // words of length 1..top-1
    let mut words: Vec<Vec<usize>> = Vec::new();
    let mut layer: Vec<Vec<usize>> = (0..n).map(|k| vec![k]).collect();
    for _ in 1..top {
        words.extend(layer.iter().cloned());
        layer = layer
            .iter()
            .flat_map(|w| {
                (0..n).map(move |k| {
                    let mut v = w.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    let slot: BTreeMap<&[usize], usize> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_slice(), i))
        .collect();
    let dx = words.len() * du;

    let mut a = vec![zeros(dx, dx); n];
    let mut b = vec![zeros(dx, du); n];
    let mut c = vec![zeros(dy, dx); n];
    let mut d = vec![zeros(dy, du); n];

    for k in 0..n {
        if let Some(coef) = g.get(&MultiIndex::unit(n, k)) {
            d[k] = coef.clone();
        }
        if let Some(&s) = slot.get([k].as_slice()) {
            b[k]
                .view_mut((s * du, 0), (du, du))
                .fill_with_identity();
        }
    }
    for (i, w) in words.iter().enumerate() {
        for k in 0..n {
            let mut wk = w.clone();
            wk.push(k);
            if let Some(&j) = slot.get(wk.as_slice()) {
                a[k].view_mut((j * du, i * du), (du, du)).fill_with_identity();
            }
            let t = MultiIndex::from_word(n, &wk);
            if let Some(coef) = g.get(&t) {
                c[k]
                    .view_mut((0, i * du), (dy, du))
                    .copy_from(&(coef * Complex64::new(t.word_share(), 0.0)));
            }
        }
    }
    MultiSystem::new(n, dx, du, dy, a, b, c, d)
}
