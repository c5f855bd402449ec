//! Dense linear algebra on row-major matrices, plus small index-tensors.
//!
//! Everything here is sized for the two regimes the crate meets: `n × n`
//! Toeplitz covariances with `n` up to a few thousand, and `k × k` parameter
//! matrices with `k` at most four or five.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, data: rows.concat() }
    }

    /// Symmetric Toeplitz matrix with `(s, t)` entry `first_col[|s - t|]`.
    pub fn toeplitz(first_col: &[T]) -> Self {
        let n = first_col.len();
        Self::from_fn(n, n, |r, c| first_col[r.abs_diff(c)])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                axpy(a, rhs.row(k), out_row);
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `Tr(self · rhs)` without forming the product.
    pub fn trace_of_product(&self, rhs: &Self) -> T {
        assert_eq!(self.cols, rhs.rows);
        assert_eq!(self.rows, rhs.cols);
        let mut acc = T::zero();
        for r in 0..self.rows {
            let row = self.row(r);
            for (c, &a) in row.iter().enumerate() {
                acc = acc + a * rhs[(c, r)];
            }
        }
        acc
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| (0..r).all(|c| (self[(r, c)] - self[(c, r)]).abs() <= tol))
    }

    /// Inverse of a small symmetric positive definite matrix.
    pub fn inverse_spd(&self) -> Result<Self> {
        let chol = Cholesky::factor(self).map_err(|_| Error::SingularMatrix)?;
        Ok(chol.solve_mat(&Self::identity(self.rows)))
    }

    /// Inverse of a small square matrix by Gauss-Jordan with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.rows;
        assert_eq!(n, self.cols);
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let scale = self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1));
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[(x, col)].abs().partial_cmp(&a[(y, col)].abs()).unwrap())
                .unwrap();
            if a[(pivot, col)].abs() <= tiny || !a[(pivot, col)].is_finite() {
                return Err(Error::SingularMatrix);
            }
            a.swap_rows(pivot, col);
            inv.swap_rows(pivot, col);
            let p = a[(col, col)];
            for c in 0..n {
                a[(col, c)] = a[(col, c)] / p;
                inv[(col, c)] = inv[(col, c)] / p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == T::zero() {
                    continue;
                }
                for c in 0..n {
                    a[(r, c)] = a[(r, c)] - f * a[(col, c)];
                    inv[(r, c)] = inv[(r, c)] - f * inv[(col, c)];
                }
            }
        }
        Ok(inv)
    }

    /// Solves `self · x = b` for a small square system.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        Ok(self.inverse()?.matvec(b))
    }

    pub fn determinant_spd(&self) -> Result<T> {
        let chol = Cholesky::factor(self).map_err(|_| Error::SingularMatrix)?;
        Ok(chol.log_det().exp())
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Lower-triangular Cholesky factor `Σ = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows();
        assert_eq!(n, a.cols(), "Cholesky needs a square matrix");
        let mut l = Matrix::zeros(n, n);
        for r in 0..n {
            for c in 0..=r {
                let s = dot(&l.row(r)[..c], &l.row(c)[..c]);
                if r == c {
                    let d = a[(r, r)] - s;
                    if d <= T::zero() || !d.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: r, value: d.to_f64_lossy() });
                    }
                    l[(r, r)] = d.sqrt();
                } else {
                    l[(r, c)] = (a[(r, c)] - s) / l[(c, c)];
                }
            }
        }
        Ok(Self { l })
    }

    pub fn factor_matrix(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim()).map(|i| two * self.l[(i, i)].ln()).sum()
    }

    /// `L y = b`.
    pub fn forward(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut y = b.to_vec();
        for r in 0..n {
            let s = dot(&self.l.row(r)[..r], &y[..r]);
            y[r] = (y[r] - s) / self.l[(r, r)];
        }
        y
    }

    /// `Lᵀ x = y`.
    pub fn backward(&self, y: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = y.to_vec();
        for r in (0..n).rev() {
            x[r] = x[r] / self.l[(r, r)];
            let xr = x[r];
            let row = self.l.row(r);
            for c in 0..r {
                x[c] = x[c] - row[c] * xr;
            }
        }
        x
    }

    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        self.backward(&self.forward(b))
    }

    /// `Σ⁻¹ B` for a matrix right-hand side, column blocks processed as rows
    /// of the right-hand side so the inner loops stay contiguous.
    pub fn solve_mat(&self, b: &Matrix<T>) -> Matrix<T> {
        let n = self.dim();
        assert_eq!(b.rows(), n);
        let m = b.cols();
        let mut y = b.clone();
        for r in 0..n {
            let lr = self.l.row(r).to_vec();
            let (done, rest) = y.data.split_at_mut(r * m);
            let yr = &mut rest[..m];
            for (c, &lrc) in lr[..r].iter().enumerate() {
                if lrc != T::zero() {
                    axpy(-lrc, &done[c * m..(c + 1) * m], yr);
                }
            }
            let d = T::one() / lr[r];
            yr.iter_mut().for_each(|v| *v = *v * d);
        }
        for r in (0..n).rev() {
            let d = T::one() / self.l[(r, r)];
            y.row_mut(r).iter_mut().for_each(|v| *v = *v * d);
            let (head, tail) = y.data.split_at_mut(r * m);
            let yr = &tail[..m];
            let lrow = self.l.row(r);
            for (c, &lrc) in lrow[..r].iter().enumerate() {
                if lrc != T::zero() {
                    axpy(-lrc, yr, &mut head[c * m..(c + 1) * m]);
                }
            }
        }
        y
    }

    /// `L z`: maps standard normals to a draw with covariance `Σ`.
    pub fn lower_mul(&self, z: &[T]) -> Vec<T> {
        (0..self.dim()).map(|r| dot(&self.l.row(r)[..=r], &z[..=r])).collect()
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        self.l.matmul(&self.l.transpose())
    }
}

/// `y = T x` for the symmetric Toeplitz matrix with first column `col`.
pub fn toeplitz_matvec<T: Real>(col: &[T], x: &[T]) -> Vec<T> {
    let n = x.len();
    debug_assert!(col.len() >= n);
    (0..n)
        .map(|s| {
            let mut acc = T::zero();
            for (t, &xt) in x.iter().enumerate() {
                acc = acc + col[s.abs_diff(t)] * xt;
            }
            acc
        })
        .collect()
}

/// `uᵀ T v` for the symmetric Toeplitz matrix with first column `col`,
/// computed from lagged cross-products in `O(n²)`.
pub fn toeplitz_bilinear<T: Real>(col: &[T], u: &[T], v: &[T]) -> T {
    let n = u.len();
    let mut acc = col[0] * dot(u, v);
    for h in 1..n {
        let c = col[h];
        if c == T::zero() {
            continue;
        }
        let cross = dot(&u[..n - h], &v[h..]) + dot(&u[h..], &v[..n - h]);
        acc = acc + c * cross;
    }
    acc
}

/// Dense symmetric storage for third-order index arrays of dimension `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    k: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(k: usize) -> Self {
        Self { k, data: vec![T::zero(); k * k * k] }
    }

    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut t = Self::zeros(k);
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    t[(i, j, l)] = f(i, j, l);
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

impl<T> Index<(usize, usize, usize)> for Tensor3<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j, l): (usize, usize, usize)) -> &T {
        &self.data[(i * self.k + j) * self.k + l]
    }
}

impl<T> IndexMut<(usize, usize, usize)> for Tensor3<T> {
    #[inline]
    fn index_mut(&mut self, (i, j, l): (usize, usize, usize)) -> &mut T {
        &mut self.data[(i * self.k + j) * self.k + l]
    }
}

/// Dense storage for fourth-order index arrays of dimension `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    k: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(k: usize) -> Self {
        Self { k, data: vec![T::zero(); k * k * k * k] }
    }

    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut t = Self::zeros(k);
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for d in 0..k {
                        t[(a, b, c, d)] = f(a, b, c, d);
                    }
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

impl<T> Index<(usize, usize, usize, usize)> for Tensor4<T> {
    type Output = T;
    #[inline]
    fn index(&self, (a, b, c, d): (usize, usize, usize, usize)) -> &T {
        &self.data[((a * self.k + b) * self.k + c) * self.k + d]
    }
}

impl<T> IndexMut<(usize, usize, usize, usize)> for Tensor4<T> {
    #[inline]
    fn index_mut(&mut self, (a, b, c, d): (usize, usize, usize, usize)) -> &mut T {
        &mut self.data[((a * self.k + b) * self.k + c) * self.k + d]
    }
}
