//! Dense row-major 2-D matrices with multiplication counting.
//!
//! The convention everywhere in this crate: feature grids are flattened
//! location-major with index `y * width + x`, so a matrix row is one spatial
//! location and a column is one channel. Matrices are immutable after
//! construction and safe to share read-only across threads.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Index;

use num_traits::Float;

use crate::counters::OpCounters;
use crate::error::{Error, Result};

/// Floating-point width selectable per run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn width_bytes(self) -> u64 {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    /// Tag byte used by the tensor file format (0 = f32, 1 = f64).
    pub fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dtype::F32 => write!(f, "f32"),
            Dtype::F64 => write!(f, "f64"),
        }
    }
}

/// Scalar element type: `f32` or `f64`.
pub trait Real: Float + fmt::Debug + fmt::Display + Send + Sync + 'static {
    const DTYPE: Dtype;

    fn from_f64(x: f64) -> Self;
    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn to_f64_lossy(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Dense matrix, row-major, `data.len() == rows * cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build from nested row slices; handy in tests and fixtures.
    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DataLength {
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        if i < self.rows && j < self.cols {
            Some(self.data[i * self.cols + j])
        } else {
            None
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * rhs`. Counts exactly `rows * cols * rhs.cols` multiplications
    /// and the `rows * rhs.cols` floats of the result as a transient
    /// allocation.
    pub fn matmul(&self, rhs: &Self, counters: &mut OpCounters) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (l, &a) in a_row.iter().enumerate() {
                let b_row = &rhs.data[l * n..(l + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        counters.record_mults((m * k * n) as u64);
        counters.record_transient_alloc((m * n) as u64);
        let result = Matrix { rows: m, cols: n, data: out };
        debug_assert!(result.all_finite(), "matmul produced non-finite values");
        Ok(result)
    }

    /// `self^T * rhs` without materializing the transpose. Counts
    /// `cols * rows * rhs.cols` multiplications.
    pub fn matmul_tn(&self, rhs: &Self, counters: &mut OpCounters) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul_tn",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let (m, k, n) = (self.cols, self.rows, rhs.cols);
        let mut out = vec![T::zero(); m * n];
        for l in 0..k {
            let a_row = &self.data[l * m..(l + 1) * m];
            let b_row = &rhs.data[l * n..(l + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                let out_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        counters.record_mults((m * k * n) as u64);
        counters.record_transient_alloc((m * n) as u64);
        let result = Matrix { rows: m, cols: n, data: out };
        debug_assert!(result.all_finite(), "matmul_tn produced non-finite values");
        Ok(result)
    }

    /// `self * rhs^T` without materializing the transpose. Counts
    /// `rows * cols * rhs.rows` multiplications.
    pub fn matmul_nt(&self, rhs: &Self, counters: &mut OpCounters) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, rhs.rows);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &rhs.data[j * k..(j + 1) * k];
                let mut acc = T::zero();
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc = acc + a * b;
                }
                out.push(acc);
            }
        }
        counters.record_mults((m * k * n) as u64);
        counters.record_transient_alloc((m * n) as u64);
        let result = Matrix { rows: m, cols: n, data: out };
        debug_assert!(result.all_finite(), "matmul_nt produced non-finite values");
        Ok(result)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.data[i * self.cols + j]);
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    /// `alpha * self + beta * rhs`, elementwise.
    pub fn scale_add(&self, alpha: T, rhs: &Self, beta: T) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::ShapeMismatch {
                op: "scale_add",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| alpha * a + beta * b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Consume and scale every entry by `factor`; no new allocation.
    pub fn scaled(mut self, factor: T) -> Self {
        for v in &mut self.data {
            *v = *v * factor;
        }
        self
    }

    /// Softmax over each row, stabilized by max-subtraction so large inputs
    /// cannot overflow. Every output row sums to 1 and entries lie in (0, 1].
    pub fn softmax_rows(&self) -> Self {
        let mut out = self.clone();
        out.softmax_rows_in_place();
        out
    }

    /// Softmax over each column; same stabilization, column sums are 1.
    pub fn softmax_cols(&self) -> Self {
        let mut out = self.clone();
        out.softmax_cols_in_place();
        out
    }

    pub(crate) fn softmax_rows_in_place(&mut self) {
        for i in 0..self.rows {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            softmax_slice(row);
        }
    }

    pub(crate) fn softmax_cols_in_place(&mut self) {
        for j in 0..self.cols {
            let mut max = T::neg_infinity();
            for i in 0..self.rows {
                let v = self.data[i * self.cols + j];
                if v > max {
                    max = v;
                }
            }
            let mut sum = T::zero();
            for i in 0..self.rows {
                let idx = i * self.cols + j;
                let e = (self.data[idx] - max).exp();
                self.data[idx] = e;
                sum = sum + e;
            }
            for i in 0..self.rows {
                let idx = i * self.cols + j;
                self.data[idx] = self.data[idx] / sum;
            }
        }
    }

    /// Largest absolute entry, as f64.
    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.to_f64_lossy().abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute elementwise difference, as f64. Panics on shape
    /// mismatch; intended for reports and tests on same-shaped outputs.
    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        assert_eq!(self.shape(), rhs.shape(), "max_abs_diff shapes differ");
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| (a.to_f64_lossy() - b.to_f64_lossy()).abs())
            .fold(0.0, f64::max)
    }
}

fn softmax_slice<T: Real>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = T::zero();
    for v in row.iter_mut() {
        let e = (*v - max).exp();
        *v = e;
        sum = sum + e;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

impl<T: Real> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        assert!(i < self.rows && j < self.cols, "matrix index out of bounds");
        &self.data[i * self.cols + j]
    }
}
