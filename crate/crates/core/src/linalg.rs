//! Small dense square matrices.
//!
//! Dimensions here are tiny (the state dimension `d`, or `2d` for coupled
//! pairs), so everything is row-major `Vec` storage with cyclic Jacobi for
//! symmetric eigenproblems.

use std::ops::{Index, IndexMut};

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, T::one())
    }

    pub fn scaled_identity(n: usize, s: T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = s;
        }
        m
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds from row-major storage. Panics if `data.len() != n * n`.
    pub fn from_row_major(n: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * n, "row-major storage must hold n*n entries");
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m[(j, i)] = self[(i, j)];
            }
        }
        m
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    m[(i, j)] = m[(i, j)] + a * other[(k, j)];
                }
            }
        }
        m
    }

    /// `A Aᵀ`
    pub fn gram(&self) -> Self {
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                for k in 0..n {
                    s = s + self[(i, k)] * self[(j, k)];
                }
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        m
    }

    pub fn matvec_into(&self, v: &[T], out: &mut [T]) {
        matvec_into(self.n, &self.data, v, out);
    }

    pub fn quadratic_form(&self, v: &[T]) -> T {
        let mut s = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                s = s + v[i] * self[(i, j)] * v[j];
            }
        }
        s
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&a| a * s).collect() }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&a| a * a).sum::<T>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    /// Places `blocks` as the `[[a, b], [c, d]]` blocks of a `2n × 2n` matrix.
    pub fn from_blocks(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        let n = a.n;
        let mut m = Self::zeros(2 * n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = a[(i, j)];
                m[(i, j + n)] = b[(i, j)];
                m[(i + n, j)] = c[(i, j)];
                m[(i + n, j + n)] = d[(i, j)];
            }
        }
        m
    }
}

impl<T> Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for SquareMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// `out = M v` for a row-major `n × n` matrix stored in `m`.
#[inline]
pub(crate) fn matvec_into<T: Real>(n: usize, m: &[T], v: &[T], out: &mut [T]) {
    for i in 0..n {
        let row = &m[i * n..(i + 1) * n];
        out[i] = row.iter().zip(v).map(|(&a, &b)| a * b).sum();
    }
}

/// `vᵀ (M Mᵀ) v = |Mᵀ v|²` for a row-major `n × n` matrix.
#[inline]
pub(crate) fn gram_quadratic_form<T: Real>(n: usize, m: &[T], v: &[T]) -> T {
    let mut s = T::zero();
    for j in 0..n {
        let mut c = T::zero();
        for i in 0..n {
            c = c + v[i] * m[i * n + j];
        }
        s = s + c * c;
    }
    s
}

/// Eigendecomposition of a symmetric matrix: `A = V diag(values) Vᵀ`, with the
/// eigenvectors stored as the columns of `vectors`. Eigenvalues ascend.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: SquareMatrix<T>,
}

const MAX_SWEEPS: usize = 100;

impl<T: Real> SymmetricEigen<T> {
    /// Cyclic Jacobi. Only the lower triangle of `a` is trusted to be
    /// symmetric up to rounding; the input is symmetrized first.
    pub fn new(a: &SquareMatrix<T>) -> Self {
        let n = a.dim();
        let half = T::lit(0.5);
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = half * (a[(i, j)] + a[(j, i)]);
            }
        }
        let mut v = SquareMatrix::identity(n);
        let scale = m.frobenius_norm();
        let tiny = T::epsilon() * T::epsilon() * scale * scale;

        for _ in 0..MAX_SWEEPS {
            let mut off = T::zero();
            for i in 0..n {
                for j in 0..i {
                    off = off + m[(i, j)] * m[(i, j)];
                }
            }
            if off <= tiny || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkq = m[(k, q)];
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mqk = m[(q, k)];
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| m[(i, i)]).collect();
        let mut vectors = SquareMatrix::zeros(n);
        for (col, &src) in order.iter().enumerate() {
            for k in 0..n {
                vectors[(k, col)] = v[(k, src)];
            }
        }
        Self { values, vectors }
    }

    pub fn min_value(&self) -> T {
        self.values.first().copied().unwrap_or_else(T::zero)
    }

    /// `V f(Λ) Vᵀ`
    pub fn map_values(&self, f: impl Fn(T) -> T) -> SquareMatrix<T> {
        let n = self.values.len();
        let fv: Vec<T> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                for k in 0..n {
                    s = s + self.vectors[(i, k)] * fv[k] * self.vectors[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

/// Symmetric positive semidefinite square root. Eigenvalues in
/// `[-tol, 0)` are clamped to zero; anything more negative is rejected and
/// the offending eigenvalue returned.
pub fn psd_sqrt<T: Real>(a: &SquareMatrix<T>, tol: T) -> Result<SquareMatrix<T>, T> {
    let eig = SymmetricEigen::new(a);
    let min = eig.min_value();
    if min < -tol {
        return Err(min);
    }
    Ok(eig.map_values(|l| l.max(T::zero()).sqrt()))
}

/// Smallest singular value, via the smallest eigenvalue of `AᵀA`.
pub fn min_singular_value<T: Real>(a: &SquareMatrix<T>) -> T {
    SymmetricEigen::new(&a.transpose().gram()).min_value().max(T::zero()).sqrt()
}
