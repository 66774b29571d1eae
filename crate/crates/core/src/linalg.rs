//! Small dense linear algebra over [`Scalar`].
//!
//! Row-major storage, LU with partial pivoting and one step of iterative
//! refinement for inexact types. Sizes in this crate stay below a few
//! thousand, so nothing here is blocked or parallel.

use std::ops::{Index, IndexMut};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is numerically singular (pivot column {column})")]
    Singular { column: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds from row vectors; all rows must share one length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::Dimension {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn diagonal(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
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

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Rows `ri` and columns `ci` of `self`, in the given order.
    pub fn select(&self, ri: &[usize], ci: &[usize]) -> Self {
        Self::from_fn(ri.len(), ci.len(), |i, j| self[(ri[i], ci[j])])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                let orow = other.row(k);
                let start = i * out.cols;
                for (o, &b) in out.data[start..start + other.cols].iter_mut().zip(orow) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// `v^T A`.
    pub fn vecmat(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "vecmat dimension mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi.is_zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + vi * a;
            }
        }
        out
    }

    /// `u^T A v`.
    pub fn bilinear(&self, u: &[T], v: &[T]) -> T {
        dot(u, &self.matvec(v))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|a| a * s)
    }

    /// `diag(d) * A`.
    pub fn scale_rows(&self, d: &[T]) -> Self {
        assert_eq!(d.len(), self.rows);
        Self::from_fn(self.rows, self.cols, |i, j| d[i] * self[(i, j)])
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| acc.max_of(x.abs()))
    }

    /// Largest entrywise `|a - b|`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max_of((a - b).abs()))
    }

    /// Entrywise discrepancy relative to the larger of the two max-norms.
    pub fn rel_diff(&self, other: &Self) -> T {
        let scale = self.max_abs().max_of(other.max_abs());
        if scale.is_zero() {
            return T::zero();
        }
        self.max_abs_diff(other) / scale
    }

    /// Largest `|A(i,j) - A(j,i)|` relative to `max|A|`.
    pub fn asymmetry(&self) -> T {
        assert!(self.is_square());
        self.rel_diff(&self.transpose())
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows)
            .map(|i| self.row(i).iter().fold(T::zero(), |a, &b| a + b))
            .collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().fold(T::zero(), |a, &b| a + b.abs()))
            .fold(T::zero(), |a, b| a.max_of(b))
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// LU factorization `P A = L U` with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    factors: DenseMatrix<T>,
    perm: Vec<usize>,
    original: DenseMatrix<T>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &DenseMatrix<T>) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::Dimension {
                expected: a.rows(),
                found: a.cols(),
            });
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        let threshold = if T::EXACT {
            T::zero()
        } else {
            scale * T::epsilon() * T::from_usize(n.max(1)).unwrap_or_else(T::one)
        };
        for k in 0..n {
            let (p, pmax) = (k..n).fold((k, T::zero()), |(bi, bv), i| {
                let v = lu[(i, k)].abs();
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
            if pmax <= threshold {
                return Err(LinalgError::Singular { column: k });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let l = lu[(i, k)] / pivot;
                lu[(i, k)] = l;
                if l.is_zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] = lu[(i, j)] - l * u;
                }
            }
        }
        Ok(Self {
            factors: lu,
            perm,
            original: a.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    fn solve_once(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let lu = &self.factors;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - lu[(i, j)] * x[j];
            }
            x[i] = s / lu[(i, i)];
        }
        x
    }

    /// Solves `A x = b`, refining once when arithmetic is inexact.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.dim());
        let mut x = self.solve_once(b);
        if !T::EXACT {
            let ax = self.original.matvec(&x);
            let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
            let dx = self.solve_once(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi = *xi + d;
            }
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DenseMatrix<T>) -> DenseMatrix<T> {
        assert_eq!(b.rows(), self.dim());
        let bt = b.transpose();
        let cols: Vec<Vec<T>> = (0..b.cols()).map(|j| self.solve(bt.row(j))).collect();
        DenseMatrix::from_fn(b.rows(), b.cols(), |i, j| cols[j][i])
    }

    pub fn inverse(&self) -> DenseMatrix<T> {
        self.solve_matrix(&DenseMatrix::identity(self.dim()))
    }
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
pub fn expm(a: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    assert!(a.is_square());
    let n = a.rows();
    let norm = a.norm_inf();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.scale(0.5_f64.powi(squarings as i32));
    let mut result = DenseMatrix::identity(n);
    let mut term = DenseMatrix::identity(n);
    for k in 1..=24 {
        term = term.matmul(&scaled).scale(1.0 / k as f64);
        result = result.add(&term);
        if term.max_abs() < 1e-18 * result.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    result
}

/// Returns `(exp(tQ), ∫_0^t exp(sQ) ds)` from one exponential of the
/// augmented block matrix `[[Q, I], [0, 0]]`.
pub fn expm_with_integral(q: &DenseMatrix<f64>, t: f64) -> (DenseMatrix<f64>, DenseMatrix<f64>) {
    let n = q.rows();
    let mut aug = DenseMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = t * q[(i, j)];
        }
        aug[(i, n + i)] = t;
    }
    let e = expm(&aug);
    let idx: Vec<usize> = (0..n).collect();
    let hi: Vec<usize> = (n..2 * n).collect();
    (e.select(&idx, &idx), e.select(&idx, &hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn r(a: i128, b: i128) -> Rational {
        Rational::new(a, b)
    }

    #[test]
    fn exact_solve_matches_hand_inverse() {
        let a = DenseMatrix::from_rows(&[vec![r(2, 1), r(1, 1)], vec![r(1, 1), r(3, 1)]]).unwrap();
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve(&[r(1, 1), r(0, 1)]);
        assert_eq!(x, vec![r(3, 5), r(-1, 5)]);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let x = Lu::factor(&a).unwrap().solve(&[2.0, 3.0]);
        assert_eq!(x, vec![3.0, 2.0]);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(Lu::factor(&a), Err(LinalgError::Singular { .. })));
        let e = DenseMatrix::from_rows(&[vec![r(1, 1), r(2, 1)], vec![r(2, 1), r(4, 1)]]).unwrap();
        assert!(matches!(Lu::factor(&e), Err(LinalgError::Singular { column: 1 })));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn expm_of_two_state_generator() {
        // Q = [[-a, a], [b, -b]]: P_t(0,0) = (b + a e^{-(a+b)t}) / (a+b).
        let (a, b, t) = (1.0, 2.0, 0.7);
        let q = DenseMatrix::from_rows(&[vec![-a, a], vec![b, -b]]).unwrap();
        let p = expm(&q.scale(t));
        let expect = (b + a * (-(a + b) * t).exp()) / (a + b);
        assert!((p[(0, 0)] - expect).abs() < 1e-14);
        let (pt, int) = expm_with_integral(&q, t);
        assert!((pt[(0, 0)] - expect).abs() < 1e-14);
        // ∫_0^t P_s(0,0) ds
        let s = a + b;
        let int_expect = (b * t + a * (1.0 - (-s * t).exp()) / s) / s;
        assert!((int[(0, 0)] - int_expect).abs() < 1e-14);
    }

    #[test]
    fn refinement_keeps_residual_small() {
        let n = 30;
        let a = DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                4.0 + i as f64
            } else {
                1.0 / (1.0 + (i as f64 - j as f64).abs())
            }
        });
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = Lu::factor(&a).unwrap().solve(&b);
        let ax = a.matvec(&x);
        let res = ax.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(res < 1e-14);
    }
}
