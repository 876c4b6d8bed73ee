//! Dense square matrices, kernel matrices and the linear algebra the other
//! modules need (determinants, inverses, condition numbers, spectra).

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Dense real n×n matrix stored row-major, with optional point labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl SquareMatrix {
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("matrix dimension must be >= 1".into()));
        }
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { i: k / n, j: k % n });
        }
        Ok(Self {
            n,
            data,
            labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(n, data)
    }

    /// Builds the matrix `f(i, j)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self::from_row_major(n, data)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 }).expect("n >= 1")
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        Self::from_fn(d.len(), |i, j| if i == j { d[i] } else { 0.0 })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i)).expect("same shape")
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_row_major(self.n, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// max |a_ij - a_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                m = m.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        m
    }

    /// Principal submatrix on the given indices (in the given order).
    pub fn submatrix(&self, idx: &[usize]) -> Result<Self> {
        Self::from_fn(idx.len(), |a, b| self.get(idx[a], idx[b]))
    }

    /// D⁻¹ A D for diagonal D.
    pub fn diagonal_similarity(&self, d: &[f64]) -> Result<Self> {
        if d.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: d.len(),
            });
        }
        Self::from_fn(self.n, |i, j| self.get(i, j) * d[j] / d[i])
    }

    /// Pᵀ A P for the permutation matrix sending index `perm[i]` to `i`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        self.submatrix(perm)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput("matrix is not square".into()));
        }
        Self::from_fn(m.nrows(), |i, j| m[(i, j)])
    }

    /// SHA-256 over the dimension and the little-endian entry bits, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        for x in &self.data {
            h.update(x.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson {
            n: self.n,
            entries: self.rows(),
            labels: self.labels.clone(),
        }
    }

    /// Reads `{"n": …, "entries": [[…]]}` JSON, or CSV for a `.csv` extension.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::parse_csv(&text),
            _ => Self::parse_json(&text),
        }
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        let m: MatrixJson = serde_json::from_str(text)?;
        m.try_into()
    }

    /// Numeric rows; blank lines and lines starting with `#` are skipped.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::InvalidInput(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

/// Wire format for matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    pub entries: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl TryFrom<MatrixJson> for SquareMatrix {
    type Error = Error;

    fn try_from(m: MatrixJson) -> Result<Self> {
        let mat = SquareMatrix::from_rows(&m.entries)?;
        if mat.n() != m.n {
            return Err(Error::DimensionMismatch {
                expected: m.n,
                got: mat.n(),
            });
        }
        match m.labels {
            Some(l) => mat.with_labels(l),
            None => Ok(mat),
        }
    }
}

/// Default tolerance for symmetry detection, relative to the largest entry.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A candidate kernel Γ(xᵢ, xⱼ). Possibly non-symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    matrix: SquareMatrix,
    symmetric: bool,
}

impl KernelMatrix {
    pub fn new(matrix: SquareMatrix) -> Self {
        Self::with_tolerance(matrix, SYMMETRY_TOL)
    }

    /// `tol` is relative to the largest absolute entry.
    pub fn with_tolerance(matrix: SquareMatrix, tol: f64) -> Self {
        let scale = matrix.max_abs().max(f64::MIN_POSITIVE);
        let symmetric = matrix.asymmetry() <= tol * scale;
        Self { matrix, symmetric }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::new(SquareMatrix::from_rows(rows)?))
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Ok(Self::new(SquareMatrix::from_fn(n, f)?))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> SquareMatrix {
        self.matrix
    }
}

impl From<SquareMatrix> for KernelMatrix {
    fn from(m: SquareMatrix) -> Self {
        KernelMatrix::new(m)
    }
}

impl AsRef<SquareMatrix> for KernelMatrix {
    fn as_ref(&self) -> &SquareMatrix {
        &self.matrix
    }
}

impl AsRef<SquareMatrix> for SquareMatrix {
    fn as_ref(&self) -> &SquareMatrix {
        self
    }
}

// ---------------------------------------------------------------------------
// linear algebra

pub fn determinant(a: &SquareMatrix) -> f64 {
    a.to_dmatrix().lu().determinant()
}

/// Inverse with its 1-norm condition number; `None` when LU reports singular.
pub fn inverse_with_condition(a: &SquareMatrix) -> Option<(SquareMatrix, f64)> {
    let m = a.to_dmatrix();
    let inv = m.clone().lu().try_inverse()?;
    if inv.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let cond = one_norm(&m) * one_norm(&inv);
    Some((SquareMatrix::from_dmatrix(&inv).ok()?, cond))
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// All eigenvalues of a general real matrix.
pub fn eigenvalues(a: &SquareMatrix) -> Vec<Complex64> {
    a.to_dmatrix()
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect()
}

pub fn spectral_radius(a: &SquareMatrix) -> f64 {
    eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues of the symmetric part (A + Aᵀ)/2, ascending.
pub fn symmetric_eigenvalues(a: &SquareMatrix) -> Vec<f64> {
    let m = a.to_dmatrix();
    let s = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn min_symmetric_eigenvalue(a: &SquareMatrix) -> f64 {
    symmetric_eigenvalues(a)[0]
}

/// Matrix product A·B.
pub fn matmul(a: &SquareMatrix, b: &SquareMatrix) -> Result<SquareMatrix> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: b.n(),
        });
    }
    SquareMatrix::from_dmatrix(&(a.to_dmatrix() * b.to_dmatrix()))
}
