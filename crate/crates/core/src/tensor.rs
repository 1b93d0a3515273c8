//! Small dense kernels over 64-bit floats.
//!
//! `Vector` and `Matrix` reject empty shapes and non-finite entries at
//! construction, so everything downstream can assume clean numbers.

use std::fmt;

use crate::error::TensorError;

/// Dense vector of finite `f64`, length at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self, TensorError> {
        if data.is_empty() {
            return Err(TensorError::Empty);
        }
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(TensorError::NonFinite { index });
        }
        Ok(Self { data })
    }

    /// Constant vector; `len` must be nonzero and `value` finite.
    pub fn filled(len: usize, value: f64) -> Result<Self, TensorError> {
        Self::new(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Elementwise map that re-checks finiteness.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, TensorError> {
        Self::new(self.data.iter().map(|&x| f(x)).collect())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = TensorError;

    fn try_from(data: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(data)
    }
}

impl TryFrom<&[f64]> for Vector {
    type Error = TensorError;

    fn try_from(data: &[f64]) -> Result<Self, Self::Error> {
        Self::new(data.to_vec())
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, x) in self.data.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "]")
    }
}

/// Row-major dense matrix of finite `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if rows == 0 || cols == 0 {
            return Err(TensorError::Empty);
        }
        if rows * cols != data.len() {
            return Err(TensorError::Shape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(TensorError::NonFinite { index });
        }
        Ok(Self { data, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self, TensorError> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    /// Builds from nested rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(TensorError::Shape {
                    rows: rows.len(),
                    cols,
                    len: data.len() + row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
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
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Row as an owned `Vector`.
    pub fn row_vector(&self, row: usize) -> Vector {
        Vector {
            data: self.row(row).to_vec(),
        }
    }

    pub fn column(&self, col: usize) -> Vector {
        Vector {
            data: (0..self.rows).map(|r| self.get(r, col)).collect(),
        }
    }

    /// Copy of this matrix with one entry replaced. Used by perturbation oracles.
    pub fn with_entry(&self, row: usize, col: usize, value: f64) -> Result<Self, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite {
                index: row * self.cols + col,
            });
        }
        let mut out = self.clone();
        out.data[row * self.cols + col] = value;
        Ok(out)
    }

    /// `selfᵀ · v`, i.e. `out[j] = Σ_i self[i][j]·v[i]`.
    pub fn transpose_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, TensorError> {
        if v.len() != self.rows {
            return Err(TensorError::Mismatch {
                expected: self.rows,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.row(i)) {
                *o += w * vi;
            }
        }
        Ok(out)
    }

    /// Elementwise map that re-checks finiteness.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, TensorError> {
        Self::new(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }
}

/// Outer product `u vᵀ`.
pub fn outer(u: &Vector, v: &Vector) -> Matrix {
    let mut data = Vec::with_capacity(u.len() * v.len());
    for &a in u.iter() {
        data.extend(v.iter().map(|&b| a * b));
    }
    Matrix {
        data,
        rows: u.len(),
        cols: v.len(),
    }
}

/// Variance with the `1/len` normalizer.
pub fn population_variance(v: &Vector) -> f64 {
    variance_of(v.as_slice())
}

pub(crate) fn variance_of(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Softmax with max subtraction.
pub fn softmax(v: &Vector) -> Vector {
    Vector {
        data: softmax_of(v.as_slice()),
    }
}

pub(crate) fn softmax_of(values: &[f64]) -> Vec<f64> {
    let max = max_of(values);
    let exps: Vec<f64> = values.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn logsumexp(values: &[f64]) -> f64 {
    let max = max_of(values);
    max + values.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}
