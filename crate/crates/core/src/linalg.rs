//! Dense row-major matrices and the handful of decompositions the Tucker
//! engine needs: a symmetric eigensolver (Householder tridiagonalisation
//! followed by implicit QL), leading singular subspaces, a one-sided Jacobi
//! SVD for small square matrices, and Gram-Schmidt orthonormalisation.
//!
//! Everything here is serial and deterministic so that repeated runs produce
//! bit-identical factors.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
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
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[T]) {
        debug_assert_eq!(values.len(), self.rows);
        for (r, &v) in values.iter().enumerate() {
            self[(r, c)] = v;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materialising the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "({}x{})ᵀ times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · selfᵀ`, symmetric.
    pub fn gram_rows(&self) -> Self {
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            let ri = self.row(i);
            for j in i..n {
                let s: T = ri.iter().zip(self.row(j)).map(|(&a, &b)| a * b).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    /// `selfᵀ · self`, symmetric.
    pub fn gram_cols(&self) -> Self {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let a = row[i];
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for j in i..n {
                    out_row[j] += a * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                out.data[i * n + j] = out.data[j * n + i];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn scale_column(&mut self, c: usize, factor: T) {
        for r in 0..self.rows {
            self[(r, c)] *= factor;
        }
    }

    /// Keeps the first `n` columns.
    pub fn leading_columns(&self, n: usize) -> Self {
        Self::from_fn(self.rows, n.min(self.cols), |r, c| self[(r, c)])
    }

    /// Rows selected (with repetition allowed) by `indices`.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// ‖selfᵀ·self − I‖_F, the departure from orthonormal columns.
    pub fn orthonormality_error(&self) -> T {
        let g = self.gram_cols();
        let mut acc = T::zero();
        for i in 0..g.rows {
            for j in 0..g.cols {
                let target = if i == j { T::one() } else { T::zero() };
                let d = g[(i, j)] - target;
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
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

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    /// Eigenvalues sorted in descending order.
    pub values: Vec<T>,
    /// Eigenvectors stored as columns, in the same order as `values`.
    pub vectors: Matrix<T>,
}

/// Symmetric eigensolver (Householder reduction to tridiagonal form, then
/// implicit QL with Wilkinson-style shifts). Only the lower triangle is read.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> Result<SymmetricEigen<T>> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "eigen-decomposition of a non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }
    if a.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }

    let mut v = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            v[i][j] = a[(i, j)];
            v[j][i] = a[(i, j)];
        }
    }
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(&mut v, &mut d, &mut e);
    tridiagonal_ql(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[r][order[c]]);
    Ok(SymmetricEigen { values, vectors })
}

#[allow(clippy::needless_range_loop)]
fn tridiagonalize<T: Scalar>(v: &mut [Vec<T>], d: &mut [T], e: &mut [T]) {
    let n = d.len();
    let zero = T::zero();
    d.copy_from_slice(&v[n - 1][..n]);

    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = zero;
                v[j][i] = zero;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in (j + 1)..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = zero;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = zero;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[n - 1][i] = v[i][i];
        v[i][i] = T::one();
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = zero;
    }
    v[n - 1][n - 1] = T::one();
    e[0] = zero;
}

fn tridiagonal_ql<T: Scalar>(v: &mut [Vec<T>], d: &mut [T], e: &mut [T]) -> Result<()> {
    let n = d.len();
    let zero = T::zero();
    let one = T::one();
    let two = T::lit(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;

    let mut f = zero;
    let mut tst1 = zero;
    let eps = T::epsilon();
    let max_iter = 60 * n.max(1);

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] is zero, so m < n here.
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::NoConvergence(max_iter));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = zero;
    }
    Ok(())
}

/// Modified Gram-Schmidt with re-orthogonalisation. Columns whose residual
/// collapses are replaced by canonical basis vectors orthogonalised against
/// the ones already accepted, so the result always has orthonormal columns.
pub fn orthonormalize_columns<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let rows = m.rows();
    let cols = m.cols();
    assert!(cols <= rows, "cannot orthonormalize {cols} columns in R^{rows}");
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(cols);
    let mut fallback = 0usize;

    let project_out = |v: &mut [T], basis: &[Vec<T>]| {
        for _ in 0..2 {
            for q in basis {
                let dot: T = v.iter().zip(q).map(|(&a, &b)| a * b).sum();
                for (x, &qi) in v.iter_mut().zip(q) {
                    *x -= dot * qi;
                }
            }
        }
    };
    let norm = |v: &[T]| v.iter().map(|&x| x * x).sum::<T>().sqrt();

    for c in 0..cols {
        let mut v = m.column(c);
        let original = norm(&v);
        project_out(&mut v, &basis);
        let mut n = norm(&v);
        let threshold = T::lit(1e3) * T::epsilon() * original.max(T::one());
        while n <= threshold {
            assert!(fallback < rows, "no basis vector left to complete the frame");
            v = vec![T::zero(); rows];
            v[fallback] = T::one();
            fallback += 1;
            project_out(&mut v, &basis);
            n = norm(&v);
            if n <= T::lit(1e-6) {
                n = T::zero();
            }
        }
        for x in v.iter_mut() {
            *x /= n;
        }
        basis.push(v);
    }
    Matrix::from_fn(rows, cols, |r, c| basis[c][r])
}

/// Orthonormal basis for the leading `rank`-dimensional left singular
/// subspace of `a`, columns ordered by decreasing singular value.
///
/// Works through whichever Gram matrix is smaller: `a·aᵀ` when `a` is wide,
/// otherwise `aᵀ·a` followed by `a·v/σ` and a final re-orthonormalisation.
pub fn leading_left_singular_vectors<T: Scalar>(a: &Matrix<T>, rank: usize) -> Result<Matrix<T>> {
    let (n, m) = (a.rows(), a.cols());
    if rank > n {
        return Err(Error::InvalidInput(format!("rank {rank} exceeds row dimension {n}")));
    }
    if rank == 0 {
        return Ok(Matrix::zeros(n, 0));
    }
    if n <= m {
        let eig = symmetric_eigen(&a.gram_rows())?;
        return Ok(eig.vectors.leading_columns(rank));
    }

    let eig = symmetric_eigen(&a.gram_cols())?;
    let take = rank.min(m);
    let top = eig.values.first().copied().unwrap_or(T::zero()).max(T::zero());
    let mut u = Matrix::zeros(n, rank);
    for j in 0..take {
        let lambda = eig.values[j];
        if lambda <= top * T::epsilon() * T::lit(64.0) || lambda <= T::zero() {
            // Numerically null direction: leave zero, completed below.
            continue;
        }
        let sigma = lambda.sqrt();
        let vj = eig.vectors.column(j);
        for r in 0..n {
            let s: T = a.row(r).iter().zip(&vj).map(|(&x, &y)| x * y).sum();
            u[(r, j)] = s / sigma;
        }
    }
    Ok(orthonormalize_columns(&u))
}

/// Thin SVD `a = U·diag(s)·Vᵀ` of a small matrix with `rows ≥ cols`,
/// computed by one-sided Jacobi rotations. Singular values are returned in
/// descending order; `U` always has orthonormal columns.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub singular_values: Vec<T>,
    pub v: Matrix<T>,
}

pub fn jacobi_svd<T: Scalar>(a: &Matrix<T>) -> Result<Svd<T>> {
    let (rows, cols) = (a.rows(), a.cols());
    if rows < cols {
        let t = jacobi_svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    let mut w = a.clone();
    let mut v = Matrix::identity(cols);
    let eps = T::epsilon();
    let max_sweeps = 60;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = T::zero();
                for r in 0..rows {
                    let (x, y) = (w[(r, p)], w[(r, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let (x, y) = (w[(r, p)], w[(r, q)]);
                    w[(r, p)] = c * x - s * y;
                    w[(r, q)] = s * x + c * y;
                }
                for r in 0..cols {
                    let (x, y) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * x - s * y;
                    v[(r, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(max_sweeps));
    }

    let mut sv: Vec<(T, usize)> = (0..cols)
        .map(|c| {
            let n = (0..rows).map(|r| w[(r, c)] * w[(r, c)]).sum::<T>().sqrt();
            (n, c)
        })
        .collect();
    sv.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite singular values"));
    let top = sv.first().map_or(T::zero(), |x| x.0);
    let mut u = Matrix::zeros(rows, cols);
    let mut v_sorted = Matrix::zeros(cols, cols);
    for (k, &(s, c)) in sv.iter().enumerate() {
        for r in 0..cols {
            v_sorted[(r, k)] = v[(r, c)];
        }
        if s > top * eps * T::lit(64.0) && s > T::zero() {
            for r in 0..rows {
                u[(r, k)] = w[(r, c)] / s;
            }
        }
    }
    Ok(Svd {
        u: orthonormalize_columns(&u),
        singular_values: sv.into_iter().map(|x| x.0).collect(),
        v: v_sorted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Matrix<f64> {
        Matrix::from_rows(&[
            vec![4.0, 1.0, -2.0, 2.0],
            vec![1.0, 2.0, 0.0, 1.0],
            vec![-2.0, 0.0, 3.0, -2.0],
            vec![2.0, 1.0, -2.0, -1.0],
        ])
        .unwrap()
    }

    #[test]
    fn eigen_reconstructs_symmetric_matrix() {
        let a = sample();
        let eig = symmetric_eigen(&a).unwrap();
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        assert!(eig.vectors.orthonormality_error() < 1e-12);
        for j in 0..4 {
            let v = eig.vectors.column(j);
            for i in 0..4 {
                let av: f64 = (0..4).map(|k| a[(i, k)] * v[k]).sum();
                assert!((av - eig.values[j] * v[i]).abs() < 1e-10);
            }
        }
        let trace: f64 = (0..4).map(|i| a[(i, i)]).sum();
        assert!((eig.values.iter().sum::<f64>() - trace).abs() < 1e-12);
    }

    #[test]
    fn eigen_of_diagonal_and_trivial_sizes() {
        let d = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let eig = symmetric_eigen(&d).unwrap();
        assert_eq!(eig.values, vec![3.0, 1.0]);
        let one = Matrix::from_rows(&[vec![5.0f32]]).unwrap();
        assert_eq!(symmetric_eigen(&one).unwrap().values, vec![5.0]);
        assert!(symmetric_eigen(&Matrix::<f64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn leading_subspace_of_tall_and_wide_agree() {
        let a = Matrix::from_fn(6, 3, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0 + (r == c) as u8 as f64);
        let wide = a.transpose();
        let u_tall = leading_left_singular_vectors(&a, 2).unwrap();
        let u_wide = leading_left_singular_vectors(&wide.transpose(), 2).unwrap();
        assert!(u_tall.orthonormality_error() < 1e-12);
        // Same subspace: projector difference vanishes.
        let p1 = u_tall.matmul(&u_tall.transpose()).unwrap();
        let p2 = u_wide.matmul(&u_wide.transpose()).unwrap();
        let diff = Matrix::from_fn(6, 6, |r, c| p1[(r, c)] - p2[(r, c)]);
        assert!(diff.frobenius_norm() < 1e-10);
    }

    #[test]
    fn rank_deficient_input_still_yields_orthonormal_frame() {
        let a = Matrix::from_fn(5, 2, |r, _| r as f64);
        let u = leading_left_singular_vectors(&a, 2).unwrap();
        assert!(u.orthonormality_error() < 1e-12);
        let zero = Matrix::<f64>::zeros(4, 4);
        let u = leading_left_singular_vectors(&zero, 3).unwrap();
        assert!(u.orthonormality_error() < 1e-12);
    }

    #[test]
    fn jacobi_svd_reconstructs() {
        let a = sample();
        let svd = jacobi_svd(&a).unwrap();
        let us = Matrix::from_fn(4, 4, |r, c| svd.u[(r, c)] * svd.singular_values[c]);
        let back = us.matmul(&svd.v.transpose()).unwrap();
        let diff = Matrix::from_fn(4, 4, |r, c| back[(r, c)] - a[(r, c)]);
        assert!(diff.frobenius_norm() < 1e-10);
        assert!(svd.v.orthonormality_error() < 1e-12);
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn jacobi_svd_singular_matrix() {
        let a = Matrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let svd = jacobi_svd(&a).unwrap();
        assert!(svd.singular_values[1].abs() < 1e-12);
        assert!(svd.u.orthonormality_error() < 1e-12);
    }

    #[test]
    fn t_matmul_matches_explicit_transpose() {
        let a = sample();
        let b = Matrix::from_fn(4, 2, |r, c| (r + 2 * c) as f64);
        assert_eq!(a.t_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        assert_eq!(a.gram_cols(), a.transpose().matmul(&a).unwrap());
    }
}
