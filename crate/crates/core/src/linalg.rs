//! Small dense linear algebra: row-major matrices, Cholesky solves and
//! singular values by one-sided Jacobi rotations.

use serde::{Deserialize, Serialize};

use crate::error::{MraError, Result};
use crate::scalar::{abs, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MraError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MraError::Dimension("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// `vᵀ A v`.
    pub fn quadratic_form(&self, v: &[T]) -> T {
        self.mul_vec(v).iter().zip(v).map(|(&a, &b)| a * b).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(abs(x)))
    }

    /// Largest `|A[i,j] - A[j,i]|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max(abs(self[(i, j)] - self[(j, i)]));
            }
        }
        worst
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }

    pub fn add_diagonal(&mut self, diag: &[T]) {
        for (i, &d) in diag.iter().enumerate() {
            self[(i, i)] += d;
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `A = C Cᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    factor: DenseMatrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &DenseMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(MraError::Dimension("Cholesky needs a square matrix".into()));
        }
        let n = a.rows();
        let mut c = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= c[(j, k)] * c[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(MraError::NotPositiveDefinite(format!(
                    "non-positive pivot at column {j}"
                )));
            }
            let d = d.sqrt();
            c[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= c[(i, k)] * c[(j, k)];
                }
                c[(i, j)] = s / d;
            }
        }
        Ok(Self { factor: c })
    }

    pub fn factor(&self) -> &DenseMatrix<T> {
        &self.factor
    }

    /// Solves `C y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let c = &self.factor;
        let n = c.rows();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= c[(i, k)] * y[k];
            }
            y[i] = s / c[(i, i)];
        }
        y
    }

    /// Solves `Cᵀ x = y`.
    pub fn solve_upper(&self, y: &[T]) -> Vec<T> {
        let c = &self.factor;
        let n = c.rows();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= c[(k, i)] * x[k];
            }
            x[i] = s / c[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }
}

/// Singular values in descending order (one-sided Jacobi).
pub fn singular_values<T: Real>(a: &DenseMatrix<T>) -> Vec<T> {
    // Work on the columns of the taller orientation.
    let (m, n, mut cols) = if a.rows() >= a.cols() {
        let cols: Vec<Vec<T>> = (0..a.cols())
            .map(|j| (0..a.rows()).map(|i| a[(i, j)]).collect())
            .collect();
        (a.rows(), a.cols(), cols)
    } else {
        let cols: Vec<Vec<T>> = (0..a.rows()).map(|i| a.row(i).to_vec()).collect();
        (a.cols(), a.rows(), cols)
    };
    let _ = m;
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = T::zero();
                    let mut beta = T::zero();
                    let mut gamma = T::zero();
                    for (&x, &y) in cp.iter().zip(cq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == T::zero() || abs(gamma) <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let two = T::of(2.0);
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (abs(zeta) + (T::one() + zeta * zeta).sqrt());
                let t = if zeta == T::zero() { T::one() } else { t };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xv, yv) = (*x, *y);
                    *x = c * xv - s * yv;
                    *y = s * xv + c * yv;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = cols
        .iter()
        .map(|c| c.iter().map(|&x| x * x).sum::<T>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank<T: Real>(singular: &[T], rel_tol: T) -> usize {
    let max = singular.first().copied().unwrap_or_else(T::zero);
    if max == T::zero() {
        return 0;
    }
    singular.iter().filter(|&&s| s > rel_tol * max).count()
}
