//! Dense row-major tensors of 64-bit reals.
//!
//! Everything numeric in this crate flows through [`Tensor`]. The tape and
//! network code treat tensors as rank-2 matrices; vectors are `1 x n` or
//! `n x 1`, scalars are `1 x 1`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from a shape and flat row-major data.
    ///
    /// Panics if `product(shape) != data.len()`; that invariant is
    /// unconditional.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let expect: usize = shape.iter().product();
        assert_eq!(
            expect,
            data.len(),
            "tensor shape {:?} wants {} elements, got {}",
            shape,
            expect,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::new(vec![rows, cols], vec![0.0; rows * cols])
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![1, 1], vec![v])
    }

    /// Identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "from_rows needs at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Tensor::new(vec![1, v.len()], v.to_vec())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.shape[1];
        self.data[r * cols + c] = v;
    }

    pub fn scalar_value(&self) -> f64 {
        assert!(self.is_scalar(), "scalar_value on shape {:?}", self.shape);
        self.data[0]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// Copy of row `r` as a `1 x cols` tensor.
    pub fn row_tensor(&self, r: usize) -> Tensor {
        Tensor::new(vec![1, self.cols()], self.row(r).to_vec())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn check_same_shape(&self, other: &Tensor, context: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context: context.to_string(),
                expected: format!("{:?}", self.shape),
                actual: format!("{:?}", other.shape),
            });
        }
        Ok(())
    }

    // ── arithmetic kernels used by the tape ─────────────────────────────

    pub fn add(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape, other.shape, "add shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Tensor::new(self.shape.clone(), data)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape, other.shape, "sub shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Tensor::new(self.shape.clone(), data)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape, other.shape, "mul shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Tensor::new(self.shape.clone(), data)
    }

    /// `a * x + b` elementwise.
    pub fn affine(&self, a: f64, b: f64) -> Tensor {
        let data = self.data.iter().map(|x| a * x + b).collect();
        Tensor::new(self.shape.clone(), data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let data = self.data.iter().map(|&x| f(x)).collect();
        Tensor::new(self.shape.clone(), data)
    }

    /// Matrix product, `(m x k) . (k x n)`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul inner dims {} vs {}", k, k2);
        let mut out = vec![0.0; m * n];
        // i-k-j order keeps the inner loop contiguous in both `other` and `out`.
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (kk, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[kk * n..(kk + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    pub fn transpose(&self) -> Tensor {
        let (m, n) = (self.rows(), self.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(vec![n, m], out)
    }

    /// Add a `1 x n` row vector to every row of an `m x n` matrix.
    pub fn add_row(&self, row: &Tensor) -> Tensor {
        assert_eq!(row.rows(), 1, "add_row wants a row vector");
        assert_eq!(self.cols(), row.cols(), "add_row width mismatch");
        let n = self.cols();
        let mut data = self.data.clone();
        for r in 0..self.rows() {
            for (d, b) in data[r * n..(r + 1) * n].iter_mut().zip(&row.data) {
                *d += b;
            }
        }
        Tensor::new(self.shape.clone(), data)
    }

    /// Column-wise sum: `m x n` -> `1 x n`.
    pub fn sum_rows(&self) -> Tensor {
        let n = self.cols();
        let mut out = vec![0.0; n];
        for r in 0..self.rows() {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        Tensor::new(vec![1, n], out)
    }

    /// Row-wise sum: `m x n` -> `m x 1`.
    pub fn sum_cols(&self) -> Tensor {
        let out = (0..self.rows())
            .map(|r| self.row(r).iter().sum())
            .collect();
        Tensor::new(vec![self.rows(), 1], out)
    }

    pub fn sum_all(&self) -> Tensor {
        Tensor::scalar(self.data.iter().sum())
    }

    /// Tile a `1 x n` row vector into `m x n`.
    pub fn broadcast_rows(&self, m: usize) -> Tensor {
        assert_eq!(self.rows(), 1, "broadcast_rows wants a row vector");
        let mut data = Vec::with_capacity(m * self.cols());
        for _ in 0..m {
            data.extend_from_slice(&self.data);
        }
        Tensor::new(vec![m, self.cols()], data)
    }

    /// Tile an `m x 1` column vector into `m x n`.
    pub fn broadcast_cols(&self, n: usize) -> Tensor {
        assert_eq!(self.cols(), 1, "broadcast_cols wants a column vector");
        let mut data = Vec::with_capacity(self.rows() * n);
        for r in 0..self.rows() {
            data.extend(std::iter::repeat_n(self.data[r], n));
        }
        Tensor::new(vec![self.rows(), n], data)
    }

    /// Fill an `m x n` tensor with a scalar value.
    pub fn broadcast_scalar(&self, m: usize, n: usize) -> Tensor {
        let v = self.scalar_value();
        Tensor::new(vec![m, n], vec![v; m * n])
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rows(), other.rows(), "concat_cols row mismatch");
        let (ca, cb) = (self.cols(), other.cols());
        let mut data = Vec::with_capacity(self.rows() * (ca + cb));
        for r in 0..self.rows() {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Tensor::new(vec![self.rows(), ca + cb], data)
    }

    /// Columns `[lo, hi)` of the matrix.
    pub fn slice_cols(&self, lo: usize, hi: usize) -> Tensor {
        assert!(lo <= hi && hi <= self.cols(), "slice_cols out of range");
        let mut data = Vec::with_capacity(self.rows() * (hi - lo));
        for r in 0..self.rows() {
            data.extend_from_slice(&self.row(r)[lo..hi]);
        }
        Tensor::new(vec![self.rows(), hi - lo], data)
    }
}

/// L2 distance between two flat views, used by sensitivity checks.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
