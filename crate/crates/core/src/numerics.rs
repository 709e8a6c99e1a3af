//! Dense linear algebra for the small square systems that show up in
//! whitening and orthogonalization (r up to ~150).

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
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

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major `data`, rejecting empty shapes and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix shape {rows}x{cols} must be non-empty"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.concat())
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.cols)
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

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = i * other.cols;
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let brow = other.row(k);
                for (o, &b) in out.data[orow..orow + other.cols].iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    pub fn mat_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mat_vec shape mismatch");
        self.iter_rows().map(|row| dot(row, v)).collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::c(v.to_f64_lossy())).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        let half = T::c(0.5);
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                s[(i, j)] = (self[(i, j)] + self[(j, i)]) * half;
            }
        }
        s
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

impl<T: Scalar> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> Mul for &Matrix<T> {
    type Output = Matrix<T>;

    fn mul(self, rhs: Self) -> Matrix<T> {
        self.matmul(rhs)
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for row in self.data.chunks(self.cols.max(1)) {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigResult<T> {
    /// Descending.
    pub eigenvalues: Vec<T>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: Matrix<T>,
}

impl<T: Scalar> SymEigResult<T> {
    /// `E · diag(f(d)) · Eᵀ`.
    pub fn compose(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let n = self.eigenvalues.len();
        let e = &self.eigenvectors;
        let mut out = Matrix::zeros(n, n);
        for k in 0..n {
            let dk = f(self.eigenvalues[k]);
            for i in 0..n {
                let eik = e[(i, k)] * dk;
                if eik == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + eik * e[(j, k)];
                }
            }
        }
        out
    }
}

const MAX_JACOBI_SWEEPS: usize = 100;
/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Cyclic Jacobi eigensolver. The input is symmetrized first.
pub fn sym_eig<T: Scalar>(m: &Matrix<T>) -> Result<SymEigResult<T>> {
    if !m.is_square() {
        return Err(Error::InvalidInput(format!(
            "sym_eig needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput("sym_eig: non-finite entries".into()));
    }
    let n = m.rows();
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius();
    let tol = T::iter_tol() * scale;

    let off = |a: &Matrix<T>| {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s = s + a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = scale == T::zero() || off(&a) <= tol;
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_JACOBI_SWEEPS {
            return Err(Error::NumericalFailure(format!(
                "Jacobi eigensolver did not converge in {MAX_JACOBI_SWEEPS} sweeps"
            )));
        }
        sweep += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (T::c(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        converged = off(&a) <= tol;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(j, j)]
            .partial_cmp(&a[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        // Deterministic sign: largest-magnitude entry of each vector positive.
        let mut big = 0;
        for i in 0..n {
            if v[(i, src)].abs() > v[(big, src)].abs() {
                big = i;
            }
        }
        let sign = if v[(big, src)] < T::zero() {
            -T::one()
        } else {
            T::one()
        };
        for i in 0..n {
            eigenvectors[(i, dst)] = v[(i, src)] * sign;
        }
    }
    Ok(SymEigResult {
        eigenvalues,
        eigenvectors,
    })
}

fn check_floor<T: Scalar>(eig: &SymEigResult<T>) -> Result<()> {
    let largest = eig.eigenvalues[0];
    let smallest = *eig.eigenvalues.last().expect("non-empty");
    let floor = T::c(EIGEN_FLOOR) * largest.max(T::zero());
    if largest <= T::zero() || smallest <= floor {
        return Err(Error::DegenerateCovariance {
            eigenvalue: smallest.to_f64_lossy(),
            floor: floor.to_f64_lossy(),
        });
    }
    Ok(())
}

/// `M^{-1/2}` for symmetric positive definite `M`.
pub fn spd_inv_sqrt<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let eig = sym_eig(m)?;
    check_floor(&eig)?;
    Ok(eig.compose(|d| T::one() / d.sqrt()))
}

/// `M^{1/2}` for symmetric positive definite `M`.
pub fn spd_sqrt<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let eig = sym_eig(m)?;
    check_floor(&eig)?;
    Ok(eig.compose(|d| d.sqrt()))
}

/// LU factorization with partial pivoting, packed in place.
struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
    sign: T,
    min_pivot: T,
}

fn lu<T: Scalar>(m: &Matrix<T>) -> Lu<T> {
    let n = m.rows();
    let mut lu = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = T::one();
    let mut min_pivot = T::infinity();
    for k in 0..n {
        let mut p = k;
        for i in (k + 1)..n {
            if lu[(i, k)].abs() > lu[(p, k)].abs() {
                p = i;
            }
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let pivot = lu[(k, k)];
        min_pivot = min_pivot.min(pivot.abs());
        if pivot == T::zero() {
            continue;
        }
        for i in (k + 1)..n {
            let f = lu[(i, k)] / pivot;
            lu[(i, k)] = f;
            if f == T::zero() {
                continue;
            }
            for j in (k + 1)..n {
                lu[(i, j)] = lu[(i, j)] - f * lu[(k, j)];
            }
        }
    }
    Lu {
        lu,
        perm,
        sign,
        min_pivot,
    }
}

/// Inverse by LU with partial pivoting.
pub fn invert<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    if !m.is_square() {
        return Err(Error::InvalidInput("invert needs a square matrix".into()));
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput("invert: non-finite entries".into()));
    }
    let n = m.rows();
    let f = lu(m);
    let scale = m.max_abs();
    if scale == T::zero() || f.min_pivot <= T::c(1e-12) * scale {
        return Err(Error::SingularMatrix {
            pivot: f.min_pivot.to_f64_lossy(),
        });
    }
    let mut inv = Matrix::zeros(n, n);
    let mut col = vec![T::zero(); n];
    for c in 0..n {
        for (i, x) in col.iter_mut().enumerate() {
            *x = if f.perm[i] == c { T::one() } else { T::zero() };
        }
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s = s - f.lu[(i, k)] * col[k];
            }
            col[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in (i + 1)..n {
                s = s - f.lu[(i, k)] * col[k];
            }
            col[i] = s / f.lu[(i, i)];
        }
        for i in 0..n {
            inv[(i, c)] = col[i];
        }
    }
    Ok(inv)
}

/// Exact formula for r ≤ 2, LU otherwise.
pub fn determinant<T: Scalar>(m: &Matrix<T>) -> T {
    assert!(m.is_square(), "determinant needs a square matrix");
    match m.rows() {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => {
            let f = lu(m);
            (0..m.rows()).fold(f.sign, |d, i| d * f.lu[(i, i)])
        }
    }
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use proptest::prelude::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix<f64> {
        Matrix::from_vec(2, 2, vec![a, b, c, d]).unwrap()
    }

    fn orthonormality_err(e: &Matrix<f64>) -> f64 {
        e.transpose()
            .matmul(e)
            .max_abs_diff(&Matrix::identity(e.rows()))
    }

    #[test]
    fn eig_diagonal() {
        let r = sym_eig(&m2(2.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!(r.eigenvalues, vec![2.0, 1.0]);
        assert_eq!(r.eigenvectors, Matrix::identity(2));
    }

    #[test]
    fn eig_swap_matrix() {
        let r = sym_eig(&m2(0.0, 1.0, 1.0, 0.0)).unwrap();
        assert!((r.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((r.eigenvalues[1] + 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let e = &r.eigenvectors;
        assert!((e[(0, 0)] - s).abs() < 1e-14 && (e[(1, 0)] - s).abs() < 1e-14);
        // second column is ±(1,-1)/√2
        assert!((e[(0, 1)].abs() - s).abs() < 1e-14);
        assert!((e[(0, 1)] + e[(1, 1)]).abs() < 1e-14);
    }

    #[test]
    fn eig_reconstructs_random_spd() {
        for seed in 0..20 {
            let n = 2 + (seed as usize % 7);
            let m = random_spd(n, seed);
            let r = sym_eig(&m).unwrap();
            assert!(orthonormality_err(&r.eigenvectors) <= 1e-10);
            let back = r.compose(|d| d);
            assert!(back.max_abs_diff(&m) <= 1e-8 * m.max_abs());
            assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn eig_rejects_non_finite() {
        let m = Matrix {
            rows: 2,
            cols: 2,
            data: vec![1.0, f64::NAN, 0.0, 1.0],
        };
        assert!(matches!(sym_eig(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn inv_sqrt_examples() {
        let n = spd_inv_sqrt(&Matrix::<f64>::identity(3)).unwrap();
        assert!(n.max_abs_diff(&Matrix::identity(3)) < 1e-15);
        let n = spd_inv_sqrt(&m2(4.0, 0.0, 0.0, 9.0)).unwrap();
        assert!(n.max_abs_diff(&m2(0.5, 0.0, 0.0, 1.0 / 3.0)) < 1e-15);
    }

    #[test]
    fn inv_sqrt_random_spd() {
        for seed in 0..20 {
            let m = random_spd(2 + seed as usize % 6, 100 + seed);
            let n = spd_inv_sqrt(&m).unwrap();
            let nmn = n.matmul(&m).matmul(&n);
            assert!(nmn.max_abs_diff(&Matrix::identity(m.rows())) <= 1e-8);
            assert!(n.max_abs_diff(&n.transpose()) <= 1e-12);
        }
    }

    #[test]
    fn inv_sqrt_rejects_rank_deficient() {
        let err = spd_inv_sqrt(&m2(1.0, 1.0, 1.0, 1.0)).unwrap_err();
        match err {
            Error::DegenerateCovariance { eigenvalue, .. } => assert!(eigenvalue.abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invert_examples() {
        assert_eq!(
            invert(&Matrix::<f64>::identity(3)).unwrap(),
            Matrix::identity(3)
        );
        let inv = invert(&m2(2.0, 0.0, 0.0, 4.0)).unwrap();
        assert!(inv.max_abs_diff(&m2(0.5, 0.0, 0.0, 0.25)) < 1e-15);
        assert!(matches!(
            invert(&m2(1.0, 2.0, 2.0, 4.0)),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn invert_random() {
        for seed in 0..20 {
            let n = 2 + seed as usize % 8;
            let mut m = random_matrix(n, 200 + seed);
            for i in 0..n {
                m[(i, i)] += 3.0;
            }
            let inv = invert(&m).unwrap();
            assert!(m.matmul(&inv).max_abs_diff(&Matrix::identity(n)) <= 1e-8);
        }
    }

    #[test]
    fn determinant_examples() {
        assert_eq!(determinant(&Matrix::<f64>::identity(4)), 1.0);
        assert_eq!(determinant(&m2(1.0, 2.0, 3.0, 4.0)), -2.0);
        let m = Matrix::<f64>::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        assert!((determinant(&m) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn determinant_product_rule() {
        for seed in 0..20 {
            let n = 1 + seed as usize % 6;
            let a = random_matrix(n, 300 + seed);
            let b = random_matrix(n, 400 + seed);
            let lhs = determinant(&a.matmul(&b));
            let rhs = determinant(&a) * determinant(&b);
            assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1e-3));
        }
    }

    #[test]
    fn f32_eig_works() {
        let m: Matrix<f32> = random_spd(4, 7).cast();
        let r = sym_eig(&m).unwrap();
        let back = r.compose(|d| d);
        assert!(back.max_abs_diff(&m) < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_eigvecs_orthonormal(seed in 0u64..10_000, n in 1usize..10) {
            let m = random_matrix(n, seed).symmetrized();
            let r = sym_eig(&m).unwrap();
            prop_assert!(orthonormality_err(&r.eigenvectors) <= 1e-10);
        }

        #[test]
        fn prop_inv_sqrt_whitens(seed in 0u64..10_000, n in 1usize..10) {
            let m = random_spd(n, seed);
            let s = spd_inv_sqrt(&m).unwrap();
            prop_assert!(s.matmul(&m).matmul(&s).max_abs_diff(&Matrix::identity(n)) <= 1e-8);
        }

        #[test]
        fn prop_det_of_inverse(seed in 0u64..10_000, n in 1usize..8) {
            let mut m = random_matrix(n, seed);
            for i in 0..n { m[(i, i)] += 2.0; }
            let d = determinant(&m);
            let di = determinant(&invert(&m).unwrap());
            prop_assert!((di - 1.0 / d).abs() <= 1e-8 * (1.0 / d).abs());
        }
    }
}
