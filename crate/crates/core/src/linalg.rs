//! Small dense matrices with deterministic, order-pinned arithmetic.
//!
//! Everything here targets desk-scale dimensions; the Jacobi eigensolver is
//! used instead of a LAPACK binding so results are identical across platforms
//! and scalar types behave uniformly.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

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
            m.set(i, i, T::one());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows)
            .map(|r| crate::scalar::dot(self.row(r), x))
            .collect()
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut acc = T::zero();
                for k in 0..self.cols {
                    acc = acc + self.get(r, k) * other.get(k, c);
                }
                out.set(r, c, acc);
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| *v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| *a + *b)
                .collect(),
        }
    }

    /// A·Aᵀ, exploiting symmetry of the result.
    pub fn gram(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in i..self.rows {
                let v = crate::scalar::dot(self.row(i), self.row(j));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    pub fn trace(&self) -> T {
        let n = self.rows.min(self.cols);
        let mut acc = T::zero();
        for i in 0..n {
            acc = acc + self.get(i, i);
        }
        acc
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues and the orthogonal matrix whose columns are the
/// corresponding eigenvectors (A = V diag(λ) Vᵀ). Convergence is to machine
/// precision for the desk-scale matrices used here.
pub fn sym_eigen<T: Scalar>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    assert_eq!(a.rows(), a.cols(), "sym_eigen wants a square matrix");
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let eps = T::from_f64(1e-30);

    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off + m.get(i, j) * m.get(i, j);
            }
        }
        if off <= eps * (T::one() + m.trace() * m.trace()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (T::two() * apq);
                // stable tangent of the rotation angle
                let t = {
                    let sign = if theta < T::zero() { -T::one() } else { T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let eigenvalues = (0..n).map(|i| m.get(i, i)).collect();
    (eigenvalues, v)
}

/// Inverse of a symmetric PSD matrix with a relative eigenvalue cutoff:
/// eigenvalues at or below `cutoff_rel · λ_max` contribute nothing, which
/// degenerates to the Moore–Penrose pseudoinverse for singular inputs.
pub fn pinv_sym<T: Scalar>(a: &Matrix<T>, cutoff_rel: T) -> Matrix<T> {
    let n = a.rows();
    let (vals, vecs) = sym_eigen(a);
    let mut max_abs = T::zero();
    for v in &vals {
        if v.abs() > max_abs {
            max_abs = v.abs();
        }
    }
    let cutoff = cutoff_rel * max_abs;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = T::zero();
            for k in 0..n {
                if vals[k].abs() > cutoff {
                    acc = acc + vecs.get(i, k) * vecs.get(j, k) / vals[k];
                }
            }
            out.set(i, j, acc);
            out.set(j, i, acc);
        }
    }
    out
}

/// Ψ-regularized pseudoinverse Λᵀ (diag(ψ) + ΛΛᵀ)⁻¹ of a rendering transform.
///
/// For ψ → 0 this tends to the Moore–Penrose pseudoinverse of Λ; the
/// eigenvalue cutoff (relative, 1e-10) guards that limit.
pub fn regularized_pinv<T: Scalar>(lambda: &Matrix<T>, psi_diag: &[T]) -> Matrix<T> {
    assert_eq!(lambda.rows(), psi_diag.len(), "psi length");
    let mut a = lambda.gram();
    for (i, psi) in psi_diag.iter().enumerate() {
        a.set(i, i, a.get(i, i) + *psi);
    }
    let inv = pinv_sym(&a, T::from_f64(1e-10));
    lambda.transpose().matmul(&inv)
}
