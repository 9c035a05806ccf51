//! Dense complex linear algebra for the detectors.
//!
//! Only what the detection statistics need: Hermitian matrices, a complex
//! Cholesky factorization and the solves and quadratic forms built on it.
//! Nothing here ever forms an explicit inverse.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A nonempty vector of finite complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector<T> {
    entries: Vec<Complex<T>>,
}

impl<T: Real> ComplexVector<T> {
    pub fn new(entries: Vec<Complex<T>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyInput("complex vector"));
        }
        if let Some(i) = entries.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite entry at index {i}")));
        }
        Ok(Self { entries })
    }

    /// Builds from `(re, im)` pairs.
    pub fn from_parts(parts: &[(T, T)]) -> Result<Self> {
        Self::new(parts.iter().map(|&(re, im)| Complex::new(re, im)).collect())
    }

    pub fn from_real(values: &[T]) -> Result<Self> {
        Self::new(values.iter().map(|&re| Complex::new(re, T::zero())).collect())
    }

    /// Skips validation. Callers guarantee a nonempty, finite buffer.
    pub(crate) fn from_vec_unchecked(entries: Vec<Complex<T>>) -> Self {
        debug_assert!(!entries.is_empty());
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.entries
    }

    pub fn into_inner(self) -> Vec<Complex<T>> {
        self.entries
    }

    pub fn norm_sqr(&self) -> T {
        norm_sqr(&self.entries)
    }

    /// `self^H other`.
    pub fn dot(&self, other: &Self) -> Result<Complex<T>> {
        check_dim(self.len(), other.len())?;
        Ok(inner(&self.entries, &other.entries))
    }

    /// `‖self - other‖²` in the complex Euclidean norm.
    pub fn distance_sqr(&self, other: &Self) -> Result<T> {
        check_dim(self.len(), other.len())?;
        Ok(distance_sqr(&self.entries, &other.entries))
    }

    pub fn scaled(&self, factor: Complex<T>) -> Self {
        Self::from_vec_unchecked(self.entries.iter().map(|&z| z * factor).collect())
    }
}

impl<T> std::ops::Index<usize> for ComplexVector<T> {
    type Output = Complex<T>;

    fn index(&self, i: usize) -> &Complex<T> {
        &self.entries[i]
    }
}

/// `m × K` block of complex column vectors stored column-major, as used
/// for secondary (reference) data.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexMatrix<T> {
    pub fn from_columns(rows: usize, columns: &[Vec<Complex<T>>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for col in columns {
            check_dim(rows, col.len())?;
            data.extend_from_slice(col);
        }
        Self::from_col_major(rows, columns.len(), data)
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidData("non-finite entry in matrix".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn empty(rows: usize) -> Self {
        Self {
            rows,
            cols: 0,
            data: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, k: usize) -> &[Complex<T>] {
        &self.data[k * self.rows..(k + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[Complex<T>]> + '_ {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.rows.max(1)).take(self.cols)
    }

    pub fn as_col_major(&self) -> &[Complex<T>] {
        &self.data
    }
}

/// Square Hermitian matrix, stored densely row-major.
///
/// Every constructor writes the lower triangle and mirrors it, so `A = A^H`
/// holds exactly and the diagonal is real.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix<T> {
    dim: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> HermitianMatrix<T> {
    /// Builds from a function evaluated on the lower triangle `i >= j`.
    pub fn from_lower_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("matrix dimension must be positive".into()));
        }
        let mut data = vec![Complex::new(T::zero(), T::zero()); dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(Error::InvalidData(format!("non-finite entry ({i}, {j})")));
                }
                if i == j {
                    data[i * dim + i] = Complex::new(v.re, T::zero());
                } else {
                    data[i * dim + j] = v;
                    data[j * dim + i] = v.conj();
                }
            }
        }
        Ok(Self { dim, data })
    }

    /// Accepts a dense row-major matrix after checking it is Hermitian to
    /// within `1e-12` of its largest entry (or a few ulps for `f32`).
    pub fn from_dense(dim: usize, dense: &[Complex<T>]) -> Result<Self> {
        check_dim(dim * dim, dense.len())?;
        let scale = dense.iter().map(|z| z.norm()).fold(T::zero(), T::max);
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) * scale.max(T::min_positive_value());
        for i in 0..dim {
            for j in 0..=i {
                let gap = (dense[i * dim + j] - dense[j * dim + i].conj()).norm();
                if gap > tol {
                    return Err(Error::InvalidData(format!(
                        "matrix is not Hermitian at ({i}, {j}): gap {}",
                        gap
                    )));
                }
            }
        }
        Self::from_lower_fn(dim, |i, j| dense[i * dim + j])
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::scaled_identity(dim, T::one())
    }

    pub fn scaled_identity(dim: usize, value: T) -> Result<Self> {
        Self::from_lower_fn(dim, |i, j| {
            Complex::new(if i == j { value } else { T::zero() }, T::zero())
        })
    }

    pub fn diagonal(values: &[T]) -> Result<Self> {
        Self::from_lower_fn(values.len(), |i, j| {
            Complex::new(if i == j { values[i] } else { T::zero() }, T::zero())
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_row_major(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        norm_sqr(&self.data).sqrt()
    }

    /// `‖self - other‖_F`.
    pub fn frobenius_distance(&self, other: &Self) -> Result<T> {
        check_dim(self.dim, other.dim)?;
        Ok(distance_sqr(&self.data, &other.data).sqrt())
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * factor).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        })
    }

    /// `self + value·I`.
    pub fn add_identity(&self, value: T) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i].re = out.data[i * self.dim + i].re + value;
        }
        out
    }

    /// `self · v`.
    pub fn mul_vec(&self, v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        check_dim(self.dim, v.len())?;
        Ok((0..self.dim).map(|i| dot_unconj(self.row(i), v)).collect())
    }

    pub fn cholesky(&self) -> Result<Cholesky<T>> {
        Cholesky::factor(self)
    }
}

/// Kac-Murdock-Szegő Toeplitz matrix with entries `rho^|i-j|`.
pub fn toeplitz<T: Real>(rho: T, m: usize) -> Result<HermitianMatrix<T>> {
    if !(rho.abs() < T::one()) {
        return Err(Error::InvalidParameter(format!("toeplitz parameter |rho| = {} must be < 1", rho.abs())));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("toeplitz dimension must be positive".into()));
    }
    HermitianMatrix::from_lower_fn(m, |i, j| Complex::new(rho.powi((i - j) as i32), T::zero()))
}

/// Lower-triangular factor `L` with `L L^H = A` and a real positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    dim: usize,
    lower: Vec<Complex<T>>,
}

impl<T: Real> Cholesky<T> {
    pub fn factor(a: &HermitianMatrix<T>) -> Result<Self> {
        let mut lower = a.data.clone();
        cholesky_in_place(&mut lower, a.dim)?;
        Ok(Self { dim: a.dim, lower })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `(i, j)` of `L`; zero above the diagonal.
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        if j > i {
            Complex::new(T::zero(), T::zero())
        } else {
            self.lower[i * self.dim + j]
        }
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        check_dim(self.dim, b.len())?;
        let mut y = b.to_vec();
        forward_in_place(&self.lower, self.dim, &mut y);
        Ok(y)
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        let mut x = self.forward(b)?;
        backward_in_place(&self.lower, self.dim, &mut x);
        Ok(x)
    }

    /// `u^H A^{-1} v` through two forward solves.
    pub fn sesquilinear(&self, u: &[Complex<T>], v: &[Complex<T>]) -> Result<Complex<T>> {
        let wu = self.forward(u)?;
        let wv = self.forward(v)?;
        Ok(inner(&wu, &wv))
    }

    /// `u^H A^{-1} u = ‖L^{-1} u‖²`, real and nonnegative by construction.
    pub fn quadratic_form(&self, u: &[Complex<T>]) -> Result<T> {
        Ok(norm_sqr(&self.forward(u)?))
    }

    /// Reconstructs `L L^H`.
    pub fn reconstruct(&self) -> HermitianMatrix<T> {
        let n = self.dim;
        HermitianMatrix::from_lower_fn(n, |i, j| {
            (0..=j).fold(Complex::new(T::zero(), T::zero()), |acc, k| {
                acc + self.lower[i * n + k] * self.lower[j * n + k].conj()
            })
        })
        .expect("finite factor reconstructs to a finite matrix")
    }
}

/// `x` solving `A x = b` for Hermitian positive definite `A`.
pub fn hermitian_solve<T: Real>(a: &HermitianMatrix<T>, b: &ComplexVector<T>) -> Result<ComplexVector<T>> {
    check_dim(a.dim(), b.len())?;
    let x = a.cholesky()?.solve(b.as_slice())?;
    Ok(ComplexVector::from_vec_unchecked(x))
}

/// `u^H A^{-1} v`.
pub fn sesquilinear_form<T: Real>(
    a: &HermitianMatrix<T>,
    u: &ComplexVector<T>,
    v: &ComplexVector<T>,
) -> Result<Complex<T>> {
    check_dim(a.dim(), u.len())?;
    check_dim(a.dim(), v.len())?;
    a.cholesky()?.sesquilinear(u.as_slice(), v.as_slice())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// `u^H v`.
#[inline]
pub(crate) fn inner<T: Real>(u: &[Complex<T>], v: &[Complex<T>]) -> Complex<T> {
    u.iter()
        .zip(v)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b)
}

#[inline]
fn dot_unconj<T: Real>(u: &[Complex<T>], v: &[Complex<T>]) -> Complex<T> {
    u.iter()
        .zip(v)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a * b)
}

#[inline]
pub(crate) fn norm_sqr<T: Real>(u: &[Complex<T>]) -> T {
    u.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

#[inline]
pub(crate) fn distance_sqr<T: Real>(u: &[Complex<T>], v: &[Complex<T>]) -> T {
    u.iter()
        .zip(v)
        .fold(T::zero(), |acc, (a, b)| acc + (a - b).norm_sqr())
}

/// Overwrites the lower triangle of a row-major Hermitian buffer with its
/// Cholesky factor and zeroes the strict upper triangle.
pub(crate) fn cholesky_in_place<T: Real>(a: &mut [Complex<T>], n: usize) -> Result<()> {
    let zero = Complex::new(T::zero(), T::zero());
    // pivots below this are rounding noise of a singular matrix
    let max_diag = (0..n).map(|i| a[i * n + i].re).fold(T::zero(), T::max);
    let floor = max_diag * T::epsilon() * T::from_usize(n).expect("dimension fits");
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d = d - a[j * n + k].norm_sqr();
        }
        if !(d > floor) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: d.to_f64_lossy(),
            });
        }
        let ljj = d.sqrt();
        a[j * n + j] = Complex::new(ljj, T::zero());
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - a[i * n + k] * a[j * n + k].conj();
            }
            a[i * n + j] = s / ljj;
        }
        for i in 0..j {
            a[i * n + j] = zero;
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn forward_in_place<T: Real>(l: &[Complex<T>], n: usize, y: &mut [Complex<T>]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let mut s = y[i];
        for (lik, yk) in row.iter().zip(&y[..i]) {
            s = s - lik * yk;
        }
        y[i] = s / l[i * n + i].re;
    }
}

#[inline]
fn backward_in_place<T: Real>(l: &[Complex<T>], n: usize, x: &mut [Complex<T>]) {
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s = s - l[k * n + i].conj() * x[k];
        }
        x[i] = s / l[i * n + i].re;
    }
}
