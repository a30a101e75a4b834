//! Dense third-order tensors with mode unfolding and mode products.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Row-major 3-way array; element `(i, j, k)` lives at `(i·n₁ + j)·n₂ + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for tensor of shape {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: T) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    /// Contiguous fibre along the last mode.
    pub fn fibre(&self, i: usize, j: usize) -> &[T] {
        let o = self.offset(i, j, 0);
        &self.data[o..o + self.dims[2]]
    }

    pub fn fibre_mut(&mut self, i: usize, j: usize) -> &mut [T] {
        let o = self.offset(i, j, 0);
        let n = self.dims[2];
        &mut self.data[o..o + n]
    }

    pub fn frobenius_norm_sq(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Mode-`mode` unfolding: rows indexed by that mode, columns by the other
    /// two modes in increasing order.
    pub fn unfold(&self, mode: usize) -> Matrix<T> {
        let [a, b, c] = self.dims;
        match mode {
            0 => Matrix::from_row_major(a, b * c, self.data.clone()).expect("shape"),
            1 => Matrix::from_fn(b, a * c, |j, col| self.get(col / c, j, col % c)),
            2 => Matrix::from_fn(c, a * b, |k, col| self.get(col / b, col % b, k)),
            _ => panic!("mode {mode} out of range for a 3-way tensor"),
        }
    }

    /// Contracts mode `mode` against `w` (shape `dims[mode] × out`):
    /// `Y[.., o, ..] = Σᵢ X[.., i, ..] · w[i, o]`.
    ///
    /// With `w = U` this is the projection `X ×ₘ Uᵀ`; with `w = Uᵀ` it is
    /// the expansion `X ×ₘ U`.
    pub fn contract(&self, mode: usize, w: &Matrix<T>) -> Result<Self> {
        let [a, b, c] = self.dims;
        if w.rows() != self.dims[mode] {
            return Err(Error::DimensionMismatch(format!(
                "mode-{mode} contraction of shape {:?} with a {}x{} matrix",
                self.dims,
                w.rows(),
                w.cols()
            )));
        }
        let out = w.cols();
        match mode {
            0 => {
                let mut y = Self::zeros([out, b, c]);
                let slab = b * c;
                for i in 0..a {
                    let src = &self.data[i * slab..(i + 1) * slab];
                    for o in 0..out {
                        let coef = w[(i, o)];
                        if coef == T::zero() {
                            continue;
                        }
                        let dst = &mut y.data[o * slab..(o + 1) * slab];
                        axpy(coef, src, dst);
                    }
                }
                Ok(y)
            }
            1 => {
                let mut y = Self::zeros([a, out, c]);
                for i in 0..a {
                    for j in 0..b {
                        let src_off = (i * b + j) * c;
                        for o in 0..out {
                            let coef = w[(j, o)];
                            if coef == T::zero() {
                                continue;
                            }
                            let dst_off = (i * out + o) * c;
                            let (src, dst) = (&self.data[src_off..src_off + c], &mut y.data[dst_off..dst_off + c]);
                            axpy(coef, src, dst);
                        }
                    }
                }
                Ok(y)
            }
            2 => {
                let mut y = Self::zeros([a, b, out]);
                for i in 0..a {
                    for j in 0..b {
                        let src = self.fibre(i, j);
                        let dst_off = (i * b + j) * out;
                        for (k, &x) in src.iter().enumerate() {
                            if x == T::zero() {
                                continue;
                            }
                            let w_row = w.row(k);
                            for (d, &wv) in y.data[dst_off..dst_off + out].iter_mut().zip(w_row) {
                                *d += x * wv;
                            }
                        }
                    }
                }
                Ok(y)
            }
            _ => Err(Error::InvalidInput(format!("mode {mode} out of range"))),
        }
    }

    /// Tensor built from the given slices along mode 0 (with repetition).
    pub fn select_mode0(&self, indices: &[usize]) -> Self {
        let slab = self.dims[1] * self.dims[2];
        let mut data = Vec::with_capacity(indices.len() * slab);
        for &i in indices {
            data.extend_from_slice(&self.data[i * slab..(i + 1) * slab]);
        }
        Self {
            dims: [indices.len(), self.dims[1], self.dims[2]],
            data,
        }
    }

    /// Subtracts the mean taken along `mode` from every entry.
    pub fn center_mode(&mut self, mode: usize) {
        let [a, b, c] = self.dims;
        let n = T::from_usize_lossy(self.dims[mode]);
        match mode {
            0 => {
                let mut mean = vec![T::zero(); b * c];
                for i in 0..a {
                    axpy(T::one(), &self.data[i * b * c..(i + 1) * b * c], &mut mean);
                }
                mean.iter_mut().for_each(|m| *m /= n);
                for i in 0..a {
                    axpy(-T::one(), &mean, &mut self.data[i * b * c..(i + 1) * b * c]);
                }
            }
            1 => {
                for i in 0..a {
                    let mut mean = vec![T::zero(); c];
                    for j in 0..b {
                        axpy(T::one(), self.fibre(i, j), &mut mean);
                    }
                    mean.iter_mut().for_each(|m| *m /= n);
                    for j in 0..b {
                        axpy(-T::one(), &mean, self.fibre_mut(i, j));
                    }
                }
            }
            _ => {
                for i in 0..a {
                    for j in 0..b {
                        let f = self.fibre_mut(i, j);
                        let m = f.iter().copied().sum::<T>() / n;
                        f.iter_mut().for_each(|x| *x -= m);
                    }
                }
            }
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} minus {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&x, &y)| x - y).collect(),
        })
    }
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
