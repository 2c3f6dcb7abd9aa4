//! On-disk JSON formats, all tagged with `schema_version: "1"`.
//!
//! Complex entries are `[re, im]` pairs and matrices are arrays of rows. The
//! shape of every matrix is fixed by the dimensions in the file header, so
//! zero-sized blocks (e.g. `B_k` of a stateless system) round-trip as well.
//! Finite doubles survive a write/read cycle bit for bit.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{LinearFactorChain, TailFunction};
use crate::germ::{MultiIndex, PolyGerm};
use crate::linalg::{c64, check_finite, ComplexMatrix};
use crate::subspace::Subspace;
use crate::system::MultiSystem;

pub const SCHEMA_VERSION: &str = "1";

/// Orthonormality residual accepted when loading a subspace basis.
pub const BASIS_LOAD_TOL: f64 = 1e-10;

/// Rows of `[re, im]` pairs.
pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &ComplexMatrix) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &JsonMatrix, nrows: usize, ncols: usize, context: &str) -> Result<ComplexMatrix> {
    let bad = |message: String| Error::Format {
        context: context.to_string(),
        message,
    };
    if rows.len() != nrows {
        return Err(bad(format!("expected {nrows} rows, found {}", rows.len())));
    }
    let mut m = ComplexMatrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(bad(format!("row {i} has {} entries, expected {ncols}", row.len())));
        }
        for (j, [re, im]) in row.iter().enumerate() {
            m[(i, j)] = c64(*re, *im);
        }
    }
    check_finite(&m).map_err(|e| bad(e.to_string()))?;
    Ok(m)
}

fn check_schema(found: &str, context: &str) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::Format {
            context: context.to_string(),
            message: format!("unsupported schema_version `{found}` (expected `{SCHEMA_VERSION}`)"),
        });
    }
    Ok(())
}

fn matrices_from_json(
    list: &[JsonMatrix],
    n: usize,
    shape: (usize, usize),
    name: &'static str,
) -> Result<Vec<ComplexMatrix>> {
    if list.len() != n {
        return Err(Error::ListLength {
            list: name,
            expected: n,
            found: list.len(),
        });
    }
    list.iter()
        .enumerate()
        .map(|(k, m)| matrix_from_json(m, shape.0, shape.1, &format!("{name}[{k}]")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub schema_version: String,
    pub n_params: usize,
    pub dim_x: usize,
    pub dim_u: usize,
    pub dim_y: usize,
    pub a: Vec<JsonMatrix>,
    pub b: Vec<JsonMatrix>,
    pub c: Vec<JsonMatrix>,
    pub d: Vec<JsonMatrix>,
}

impl SystemFile {
    pub fn from_system(s: &MultiSystem) -> Self {
        let conv = |v: &[ComplexMatrix]| v.iter().map(matrix_to_json).collect();
        SystemFile {
            schema_version: SCHEMA_VERSION.into(),
            n_params: s.n_params,
            dim_x: s.dim_x,
            dim_u: s.dim_u,
            dim_y: s.dim_y,
            a: conv(&s.a),
            b: conv(&s.b),
            c: conv(&s.c),
            d: conv(&s.d),
        }
    }

    pub fn to_system(&self) -> Result<MultiSystem> {
        check_schema(&self.schema_version, "system")?;
        let (n, dx, du, dy) = (self.n_params, self.dim_x, self.dim_u, self.dim_y);
        MultiSystem::new(
            n,
            dx,
            du,
            dy,
            matrices_from_json(&self.a, n, (dx, dx), "a")?,
            matrices_from_json(&self.b, n, (dx, du), "b")?,
            matrices_from_json(&self.c, n, (dy, dx), "c")?,
            matrices_from_json(&self.d, n, (dy, du), "d")?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceFile {
    pub schema_version: String,
    pub ambient_dim: usize,
    pub dim: usize,
    /// `ambient_dim × dim` matrix with orthonormal columns.
    pub basis: JsonMatrix,
}

impl SubspaceFile {
    pub fn from_subspace(s: &Subspace) -> Self {
        SubspaceFile {
            schema_version: SCHEMA_VERSION.into(),
            ambient_dim: s.ambient_dim(),
            dim: s.dim(),
            basis: matrix_to_json(s.basis()),
        }
    }

    pub fn to_subspace(&self) -> Result<Subspace> {
        check_schema(&self.schema_version, "subspace")?;
        let basis = matrix_from_json(&self.basis, self.ambient_dim, self.dim, "basis")?;
        Subspace::from_orthonormal(basis, BASIS_LOAD_TOL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GermCoeff {
    pub index: Vec<usize>,
    pub value: JsonMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GermFile {
    pub schema_version: String,
    pub n_params: usize,
    pub dim_u: usize,
    pub dim_y: usize,
    pub coeffs: Vec<GermCoeff>,
}

impl GermFile {
    pub fn from_germ(g: &PolyGerm) -> Self {
        GermFile {
            schema_version: SCHEMA_VERSION.into(),
            n_params: g.n_params(),
            dim_u: g.dim_u(),
            dim_y: g.dim_y(),
            coeffs: g
                .iter()
                .map(|(t, c)| GermCoeff {
                    index: t.as_slice().to_vec(),
                    value: matrix_to_json(c),
                })
                .collect(),
        }
    }

    pub fn to_germ(&self) -> Result<PolyGerm> {
        check_schema(&self.schema_version, "germ")?;
        let mut g = PolyGerm::new(self.n_params, self.dim_u, self.dim_y);
        for c in &self.coeffs {
            let value = matrix_from_json(&c.value, self.dim_y, self.dim_u, &format!("coefficient {:?}", c.index))?;
            g.accumulate(MultiIndex::new(c.index.clone()), &value)?;
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    pub schema_version: String,
    pub n_params: usize,
    /// Dimensions of `Y⁽⁰⁾, …, Y⁽ᵐ⁾`.
    pub spaces: Vec<usize>,
    /// Factor `j` (in product order) maps `Y⁽ʲ⁺¹⁾` to `Y⁽ʲ⁾`.
    pub factors: Vec<Vec<JsonMatrix>>,
}

impl ChainFile {
    pub fn from_chain(c: &LinearFactorChain) -> Self {
        ChainFile {
            schema_version: SCHEMA_VERSION.into(),
            n_params: c.n_params(),
            spaces: c.spaces(),
            factors: c
                .factors()
                .iter()
                .map(|f| f.iter().map(matrix_to_json).collect())
                .collect(),
        }
    }

    pub fn to_chain(&self) -> Result<LinearFactorChain> {
        check_schema(&self.schema_version, "chain")?;
        if self.spaces.len() != self.factors.len() + 1 {
            return Err(Error::ListLength {
                list: "spaces",
                expected: self.factors.len() + 1,
                found: self.spaces.len(),
            });
        }
        let factors = self
            .factors
            .iter()
            .enumerate()
            .map(|(j, f)| {
                matrices_from_json(f, self.n_params, (self.spaces[j], self.spaces[j + 1]), "factor")
            })
            .collect::<Result<Vec<_>>>()?;
        LinearFactorChain::new(factors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFile {
    pub schema_version: String,
    /// Value at the origin, shaped like the vanishing part's transfer function.
    pub constant: JsonMatrix,
    pub vanishing_part: SystemFile,
}

impl TailFile {
    pub fn from_tail(t: &TailFunction) -> Self {
        TailFile {
            schema_version: SCHEMA_VERSION.into(),
            constant: matrix_to_json(&t.constant),
            vanishing_part: SystemFile::from_system(&t.vanishing_part),
        }
    }

    pub fn to_tail(&self) -> Result<TailFunction> {
        check_schema(&self.schema_version, "tail")?;
        let vanishing_part = self.vanishing_part.to_system()?;
        let constant = matrix_from_json(&self.constant, vanishing_part.dim_y, vanishing_part.dim_u, "constant")?;
        Ok(TailFunction {
            constant,
            vanishing_part,
        })
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        context: "serialization".into(),
        message: e.to_string(),
    })?;
    s.push('\n');
    Ok(s)
}

pub fn from_json_str<T: DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format {
        context: context.to_string(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    from_json_str(&text, &path.display().to_string())
}

fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io { .. } | Error::Format { .. } => e,
        other => Error::Format {
            context: path.display().to_string(),
            message: other.to_string(),
        },
    })
}

pub fn read_system(path: &Path) -> Result<MultiSystem> {
    let file: SystemFile = read_json(path)?;
    in_file(path, file.to_system())
}

pub fn write_system(path: &Path, s: &MultiSystem) -> Result<()> {
    write_json(path, &SystemFile::from_system(s))
}

pub fn read_subspace(path: &Path) -> Result<Subspace> {
    let file: SubspaceFile = read_json(path)?;
    in_file(path, file.to_subspace())
}

pub fn write_subspace(path: &Path, s: &Subspace) -> Result<()> {
    write_json(path, &SubspaceFile::from_subspace(s))
}

pub fn read_germ(path: &Path) -> Result<PolyGerm> {
    let file: GermFile = read_json(path)?;
    in_file(path, file.to_germ())
}

pub fn write_germ(path: &Path, g: &PolyGerm) -> Result<()> {
    write_json(path, &GermFile::from_germ(g))
}

pub fn read_chain(path: &Path) -> Result<LinearFactorChain> {
    let file: ChainFile = read_json(path)?;
    in_file(path, file.to_chain())
}

pub fn write_chain(path: &Path, c: &LinearFactorChain) -> Result<()> {
    write_json(path, &ChainFile::from_chain(c))
}

pub fn read_tail(path: &Path) -> Result<TailFunction> {
    let file: TailFile = read_json(path)?;
    in_file(path, file.to_tail())
}

pub fn write_tail(path: &Path, t: &TailFunction) -> Result<()> {
    write_json(path, &TailFile::from_tail(t))
}
