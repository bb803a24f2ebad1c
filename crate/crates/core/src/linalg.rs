//! Dense real vectors and row-major matrices.
//!
//! Both types reject NaN/Inf at construction, so every value handed out by the
//! public API is finite. Arithmetic helpers are deliberately few: the
//! experiments only need dot products, norms, row access and a handful of
//! matrix-vector products.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(LabError::NonFinite(format!(
            "{what} entry {i} is {}",
            values[i]
        ))),
        None => Ok(()),
    }
}

/// A finite real vector with `dim >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(LabError::InvalidDimension("vector dimension must be >= 1".into()));
        }
        check_finite(&values, "vector")?;
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    /// Standard basis vector `e_index` in `dim` dimensions.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(LabError::InvalidDimension(format!(
                "basis index {index} out of range for dim {dim}"
            )));
        }
        let mut values = vec![0.0; dim];
        values[index] = 1.0;
        Self::new(values)
    }

    /// Caller guarantees non-empty, finite values.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        self.check_same_dim(other)?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    pub fn add(&self, other: &DenseVector) -> Result<Self> {
        self.check_same_dim(other)?;
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &DenseVector) -> Result<Self> {
        self.check_same_dim(other)?;
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    fn check_same_dim(&self, other: &DenseVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(LabError::DimensionMismatch(format!(
                "vector dims {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = LabError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.values
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// A finite real matrix stored row-major. Zero-row matrices are allowed so
/// that operations can report a proper empty-input error; columns must be >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(LabError::InvalidDimension("matrix needs at least one column".into()));
        }
        if rows * cols != values.len() {
            return Err(LabError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        check_finite(&values, "matrix")?;
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        Ok(m)
    }

    /// Stack equal-length vectors as rows.
    pub fn from_rows(rows: &[DenseVector]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| LabError::EmptyInput("no rows to stack".into()))?;
        let cols = first.dim();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.dim() != cols {
                return Err(LabError::DimensionMismatch(format!(
                    "row {i} has dim {} but row 0 has dim {cols}",
                    r.dim()
                )));
            }
            values.extend_from_slice(r.as_slice());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
        })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, values.len());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_vector(&self, r: usize) -> DenseVector {
        DenseVector::from_raw(self.row(r).to_vec())
    }

    pub fn column(&self, c: usize) -> DenseVector {
        DenseVector::from_raw((0..self.rows).map(|r| self.get(r, c)).collect())
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = vec![0.0; self.values.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        Self::from_raw(self.cols, self.rows, out)
    }

    /// `self · x` for a slice of length `cols`.
    pub fn mat_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(LabError::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok(self.row_iter().map(|row| dot(row, x)).collect())
    }

    /// `selfᵀ · y` for a slice of length `rows`.
    pub fn mat_t_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(LabError::DimensionMismatch(format!(
                "transpose of {}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                y.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (row, &yr) in self.row_iter().zip(y) {
            axpy(yr, row, &mut out);
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(LabError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for r in 0..self.rows {
            let dst = &mut out[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), dst);
                }
            }
        }
        DenseMatrix::new(self.rows, other.cols, out)
    }

    /// Apply `f` to every row, producing a matrix of the same shape.
    pub fn map_rows<F>(&self, mut f: F) -> Result<DenseMatrix>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let mut values = Vec::with_capacity(self.values.len());
        for row in self.row_iter() {
            let out = f(row);
            if out.len() != self.cols {
                return Err(LabError::DimensionMismatch("row map changed width".into()));
            }
            values.extend(out);
        }
        DenseMatrix::new(self.rows, self.cols, values)
    }

    /// Keep only the listed rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> DenseMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self::from_raw(indices.len(), self.cols, values)
    }

    /// Stack `self` on top of `other`.
    pub fn vstack(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(LabError::DimensionMismatch(format!(
                "cannot stack {} and {} columns",
                self.cols, other.cols
            )));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self::from_raw(self.rows + other.rows, self.cols, values))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha · x`
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
