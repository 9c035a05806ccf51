//! Kernel SVDD with a Gaussian RBF kernel on complex cells.
//!
//! The kernel uses the complex Euclidean distance, which equals the
//! Euclidean distance of the real `2m`-dimensional embedding. The score of
//! a cell is its squared feature-space distance to the sphere center:
//!
//! ```text
//! f(z) = k(z, z) − 2 Σ_i α_i k(z_i, z) + Σ_ij α_i α_j k(z_i, z_j)
//! ```

pub mod io;
pub mod solver;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{check_dim, distance_sqr, ComplexVector};
use crate::scalar::Real;

pub use solver::{solve_dual, DualSolution, Gram, SolverOptions};

/// Multipliers at or below this are dropped from the model.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

/// `exp(−γ ‖x − y‖²)`.
pub fn rbf_kernel<T: Real>(x: &ComplexVector<T>, y: &ComplexVector<T>, gamma: T) -> Result<T> {
    check_dim(x.len(), y.len())?;
    if !(gamma > T::zero()) {
        return Err(Error::InvalidParameter(format!("kernel width gamma = {gamma} must be positive")));
    }
    Ok((-gamma * distance_sqr(x.as_slice(), y.as_slice())).exp())
}

/// `γ = 1/s²` with `s² = (1/N) Σ ‖x_i − x̄‖²`, the total mean squared
/// deviation of the training cells from their mean.
pub fn kernel_width<T: Real>(train: &[ComplexVector<T>]) -> Result<T> {
    if train.len() < 2 {
        return Err(Error::InvalidParameter("kernel width needs at least two training points".into()));
    }
    let m = train[0].len();
    for x in train {
        check_dim(m, x.len())?;
    }
    let n = T::from_usize(train.len()).expect("N fits");
    let mut mean = vec![num_complex::Complex::new(T::zero(), T::zero()); m];
    for x in train {
        for (acc, &v) in mean.iter_mut().zip(x.as_slice()) {
            *acc = *acc + v;
        }
    }
    for v in mean.iter_mut() {
        *v = *v / n;
    }
    let spread: T = train.iter().map(|x| distance_sqr(x.as_slice(), &mean)).sum::<T>() / n;
    if !(spread > T::zero()) {
        return Err(Error::Degenerate("training points are all identical".into()));
    }
    Ok(T::one() / spread)
}

/// RBF Gram matrix of `points`, built row-parallel.
pub fn gram_matrix<T: Real>(points: &[ComplexVector<T>], gamma: T) -> Result<Gram<T>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyInput("training set"));
    }
    let m = points[0].len();
    for x in points {
        check_dim(m, x.len())?;
    }
    let mut data = vec![T::zero(); n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = points[i].as_slice();
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = if i == j {
                T::one()
            } else {
                (-gamma * distance_sqr(xi, points[j].as_slice())).exp()
            };
        }
    });
    Gram::from_row_major(n, data)
}

/// Fitted SVDD description.
#[derive(Debug, Clone, PartialEq)]
pub struct SvddModel<T> {
    support_points: Vec<ComplexVector<T>>,
    alphas: Vec<T>,
    gamma: T,
    nu: T,
    n_train: usize,
    const_term: T,
}

impl<T: Real> SvddModel<T> {
    /// Assembles a model and recomputes `Σ_ij α_i α_j k(z_i, z_j)`.
    pub fn from_parts(
        support_points: Vec<ComplexVector<T>>,
        alphas: Vec<T>,
        gamma: T,
        nu: T,
        n_train: usize,
    ) -> Result<Self> {
        if support_points.is_empty() {
            return Err(Error::EmptyInput("support points"));
        }
        check_dim(support_points.len(), alphas.len())?;
        let m = support_points[0].len();
        for x in &support_points {
            check_dim(m, x.len())?;
        }
        if !(gamma > T::zero()) {
            return Err(Error::InvalidParameter("gamma must be positive".into()));
        }
        let upper = solver::box_bound(nu, n_train)?;
        let slack = T::lit(1e-9);
        if alphas.iter().any(|&a| !(a >= T::zero()) || a > upper + slack) {
            return Err(Error::InvalidData("multiplier outside [0, 1/(νN)]".into()));
        }
        let sum: T = alphas.iter().copied().sum();
        if (sum - T::one()).abs() > slack {
            return Err(Error::InvalidData(format!("multipliers sum to {sum}, not 1")));
        }
        let mut model = Self {
            support_points,
            alphas,
            gamma,
            nu,
            n_train,
            const_term: T::zero(),
        };
        model.const_term = model.center_norm_sqr();
        Ok(model)
    }

    fn center_norm_sqr(&self) -> T {
        let mut total = T::zero();
        for (i, (xi, &ai)) in self.support_points.iter().zip(&self.alphas).enumerate() {
            total = total + ai * ai;
            for (xj, &aj) in self.support_points.iter().zip(&self.alphas).skip(i + 1) {
                let k = (-self.gamma * distance_sqr(xi.as_slice(), xj.as_slice())).exp();
                total = total + T::lit(2.0) * ai * aj * k;
            }
        }
        total
    }

    /// Fits on target-free training cells with the data-driven kernel width.
    pub fn fit(train: &[ComplexVector<T>], nu: T, opts: &SolverOptions) -> Result<SvddFit<T>> {
        let gamma = kernel_width(train)?;
        Self::fit_with_gamma(train, gamma, nu, opts)
    }

    pub fn fit_with_gamma(train: &[ComplexVector<T>], gamma: T, nu: T, opts: &SolverOptions) -> Result<SvddFit<T>> {
        solver::box_bound(nu, train.len())?;
        let gram = gram_matrix(train, gamma)?;
        let solution = solve_dual(&gram, nu, opts)?;
        let threshold = T::lit(SUPPORT_THRESHOLD);
        let (points, alphas): (Vec<_>, Vec<_>) = train
            .iter()
            .zip(&solution.alphas)
            .filter(|(_, &a)| a > threshold)
            .map(|(x, &a)| (x.clone(), a))
            .unzip();
        let model = Self::from_parts(points, alphas, gamma, nu, train.len())?;
        Ok(SvddFit { model, solution })
    }

    pub fn dim(&self) -> usize {
        self.support_points[0].len()
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn const_term(&self) -> T {
        self.const_term
    }

    pub fn alphas(&self) -> &[T] {
        &self.alphas
    }

    pub fn support_points(&self) -> &[ComplexVector<T>] {
        &self.support_points
    }

    /// `1/(νN)`.
    pub fn upper_bound(&self) -> T {
        T::one() / (self.nu * T::from_usize(self.n_train).expect("N fits"))
    }

    /// Squared feature-space distance of `z` to the center.
    pub fn score(&self, z: &ComplexVector<T>) -> Result<T> {
        check_dim(self.dim(), z.len())?;
        Ok(self.score_slice(z.as_slice()))
    }

    pub(crate) fn score_slice(&self, z: &[num_complex::Complex<T>]) -> T {
        let cross = self
            .support_points
            .iter()
            .zip(&self.alphas)
            .fold(T::zero(), |acc, (x, &a)| {
                acc + a * (-self.gamma * distance_sqr(x.as_slice(), z)).exp()
            });
        // k(z, z) = 1 for the RBF kernel
        T::one() - T::lit(2.0) * cross + self.const_term
    }

    /// Indices into the support set whose multipliers lie strictly inside
    /// the box.
    pub fn unbounded_support(&self) -> Vec<usize> {
        let upper = self.upper_bound();
        let eps = T::lit(SUPPORT_THRESHOLD);
        (0..self.alphas.len())
            .filter(|&i| self.alphas[i] > eps && self.alphas[i] < upper - eps)
            .collect()
    }

    /// Primal radius `R²`: mean score of the unbounded support vectors.
    /// Diagnostic only; detection thresholds come from calibration.
    pub fn radius_sqr(&self) -> Result<T> {
        let idx = self.unbounded_support();
        if idx.is_empty() {
            return Err(Error::DiagnosticUnavailable(
                "no unbounded support vector; radius is not pinned down".into(),
            ));
        }
        let total: T = idx.iter().map(|&i| self.score_slice(self.support_points[i].as_slice())).sum();
        Ok(total / T::from_usize(idx.len()).expect("count fits"))
    }
}

/// A fitted model plus the full dual solution it came from.
#[derive(Debug, Clone)]
pub struct SvddFit<T> {
    pub model: SvddModel<T>,
    pub solution: DualSolution<T>,
}

pub fn svdd_score<T: Real>(z: &ComplexVector<T>, model: &SvddModel<T>) -> Result<T> {
    model.score(z)
}

/// `R²` for diagnostics.
pub fn svdd_radius<T: Real>(model: &SvddModel<T>) -> Result<T> {
    model.radius_sqr()
}
