//! Small dense linear algebra at desk scale (dimensions ≤ ~16): row-major
//! matrices, LU solves, a one-sided Jacobi SVD and minimum-norm least squares.

use crate::scalar::{cast, Scalar};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        assert!(data.iter().all(|v| v.is_finite()), "matrix entries must be finite");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self::new(r, c, rows.iter().flatten().copied().collect())
    }

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

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).fold(T::zero(), |s, (a, b)| s + *a * *b))
            .collect()
    }

    /// Transposed product `A^T x`.
    pub fn tvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows, "tvec dimension mismatch");
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (j, o) in out.iter_mut().enumerate() {
                *o = *o + self[(i, j)] * x[i];
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn scale(&self, c: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| *v * c).collect() }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves the square system `A x = b` by LU with partial pivoting.
/// Returns `None` when a pivot falls below the degeneracy threshold.
pub fn solve_lu<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Option<Vec<T>> {
    assert_eq!(a.rows(), a.cols(), "solve expects a square matrix");
    assert_eq!(b.len(), a.rows());
    let n = a.rows();
    if n == 0 {
        return Some(Vec::new());
    }
    let mut m = a.clone();
    let mut x: Vec<T> = b.to_vec();
    let scale = m.data.iter().fold(T::zero(), |s, v| s.max(v.abs())).max(T::one());
    let tiny = scale * cast::<T>(1e-12);
    for k in 0..n {
        let mut p = k;
        for i in (k + 1)..n {
            if m[(i, k)].abs() > m[(p, k)].abs() {
                p = i;
            }
        }
        if m[(p, k)].abs() <= tiny {
            return None;
        }
        if p != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            x.swap(k, p);
        }
        for i in (k + 1)..n {
            let f = m[(i, k)] / m[(k, k)];
            m[(i, k)] = T::zero();
            for j in (k + 1)..n {
                m[(i, j)] = m[(i, j)] - f * m[(k, j)];
            }
            x[i] = x[i] - f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s = s - m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Some(x)
}

/// Thin SVD `A = U diag(s) V^T` computed by one-sided Jacobi rotations.
/// Singular values are returned in no particular order.
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub singular: Vec<T>,
    pub v: Matrix<T>,
}

pub fn svd<T: Scalar>(a: &Matrix<T>) -> Svd<T> {
    if a.rows() < a.cols() {
        let t = svd(&a.transpose());
        return Svd { u: t.v, singular: t.singular, v: t.u };
    }
    let (m, n) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v = Matrix::identity(n);
    let eps = cast::<T>(1e-30);
    let tol = cast::<T>(1e-14);
    for _sweep in 0..60 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = T::zero();
                let mut aqq = T::zero();
                let mut apq = T::zero();
                for i in 0..m {
                    app = app + w[(i, p)] * w[(i, p)];
                    aqq = aqq + w[(i, q)] * w[(i, q)];
                    apq = apq + w[(i, p)] * w[(i, q)];
                }
                off = off.max(apq.abs() / (app * aqq).sqrt().max(eps));
                if apq.abs() <= (app * aqq).sqrt() * tol {
                    continue;
                }
                let theta = (aqq - app) / (cast::<T>(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (T::one() + theta * theta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if off <= tol {
            break;
        }
    }
    let mut singular = vec![T::zero(); n];
    let mut u = Matrix::zeros(m, n);
    for j in 0..n {
        let mut norm = T::zero();
        for i in 0..m {
            norm = norm + w[(i, j)] * w[(i, j)];
        }
        let norm = norm.sqrt();
        singular[j] = norm;
        if norm > T::zero() {
            for i in 0..m {
                u[(i, j)] = w[(i, j)] / norm;
            }
        }
    }
    Svd { u, singular, v }
}

/// Minimum-norm least-squares solution of `A x ≈ b` together with the
/// residual norm `‖A x − b‖`.
pub fn lstsq_minnorm<T: Scalar>(a: &Matrix<T>, b: &[T]) -> (Vec<T>, T) {
    assert_eq!(b.len(), a.rows());
    let f = svd(a);
    let smax = f.singular.iter().fold(T::zero(), |m, s| m.max(*s));
    let cutoff = smax * cast::<T>(1e-12);
    let utb = f.u.tvec(b);
    let mut coeff = vec![T::zero(); f.singular.len()];
    for (i, s) in f.singular.iter().enumerate() {
        if *s > cutoff {
            coeff[i] = utb[i] / *s;
        }
    }
    let x = f.v.matvec(&coeff);
    let ax = a.matvec(&x);
    let res = ax
        .iter()
        .zip(b)
        .fold(T::zero(), |s, (p, q)| s + (*p - *q) * (*p - *q))
        .sqrt();
    (x, res)
}

/// Square solve with an SVD fallback for (near-)singular systems; the
/// fallback returns the minimum-norm least-squares solution and its residual.
pub fn solve_or_minnorm<T: Scalar>(a: &Matrix<T>, b: &[T]) -> (Vec<T>, T) {
    if a.rows() == a.cols() {
        if let Some(x) = solve_lu_checked(a, b) {
            return x;
        }
    }
    lstsq_minnorm(a, b)
}

fn solve_lu_checked<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Option<(Vec<T>, T)> {
    let x = solve_lu(a, b)?;
    let ax = a.matvec(&x);
    let res = ax
        .iter()
        .zip(b)
        .fold(T::zero(), |s, (p, q)| s + (*p - *q) * (*p - *q))
        .sqrt();
    if x.iter().all(|v| v.is_finite()) {
        Some((x, res))
    } else {
        None
    }
}

pub fn norm<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lu_solves_small_system() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let x = solve_lu(&a, &[3.0, 5.0]).unwrap();
        assert_relative_eq!(x[0], 0.8, max_relative = 1e-12);
        assert_relative_eq!(x[1], 1.4, max_relative = 1e-12);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(solve_lu(&a, &[1.0, 2.0]).is_none());
    }

    #[test]
    fn svd_reconstructs() {
        let a = Matrix::from_rows(&[vec![3.0, 1.0], vec![0.0, 2.0], vec![1.0, -1.0]]);
        let f = svd(&a);
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..2 {
                    s += f.u[(i, k)] * f.singular[k] * f.v[(j, k)];
                }
                assert_relative_eq!(s, a[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn svd_singular_values_of_diag() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        let mut s = svd(&a).singular;
        s.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_relative_eq!(s[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn minnorm_underdetermined() {
        // x + y = 2 has minimum-norm solution (1, 1).
        let a = Matrix::from_rows(&[vec![1.0, 1.0]]);
        let (x, res) = lstsq_minnorm(&a, &[2.0]);
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-10);
        assert!(res < 1e-12);
    }

    #[test]
    fn minnorm_inconsistent_reports_residual() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let (_, res) = lstsq_minnorm(&a, &[0.0, 2.0]);
        assert_relative_eq!(res, 2.0f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn generic_over_f32() {
        let a = Matrix::<f32>::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        let x = solve_lu(&a, &[2.0, 2.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 0.5).abs() < 1e-5);
    }
}
