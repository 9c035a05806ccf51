//! Matched-filter statistics and the covariance estimators plugged into them.
//!
//! With the true covariance the statistics are the MF and NMF; with an
//! SCM estimate the MF becomes the AMF, and with a Tyler estimate the NMF
//! becomes the ANMF. Every inverse is applied through a Cholesky factor.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{
    check_dim, cholesky_in_place, forward_in_place, inner, norm_sqr, Cholesky, ComplexMatrix, ComplexVector,
    HermitianMatrix,
};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorTag {
    TrueSigma,
    Scm,
    Tyler,
}

/// A positive definite covariance together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate<T> {
    matrix: HermitianMatrix<T>,
    factor: Cholesky<T>,
    tag: EstimatorTag,
    k_used: usize,
}

impl<T: Real> CovarianceEstimate<T> {
    pub fn new(matrix: HermitianMatrix<T>, tag: EstimatorTag, k_used: usize) -> Result<Self> {
        let factor = matrix.cholesky()?;
        Ok(Self {
            matrix,
            factor,
            tag,
            k_used,
        })
    }

    /// A known covariance, e.g. `T(ρ) + σ_n² I` for the reference MF.
    pub fn known(matrix: HermitianMatrix<T>) -> Result<Self> {
        Self::new(matrix, EstimatorTag::TrueSigma, 0)
    }

    pub fn matrix(&self) -> &HermitianMatrix<T> {
        &self.matrix
    }

    pub fn factor(&self) -> &Cholesky<T> {
        &self.factor
    }

    pub fn tag(&self) -> EstimatorTag {
        self.tag
    }

    pub fn k_used(&self) -> usize {
        self.k_used
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// Steering vector pre-whitened by a covariance factor, for scoring many
/// cells against the same `(Σ, p)` pair.
#[derive(Debug, Clone)]
pub struct WhitenedSteering<T> {
    factor: Cholesky<T>,
    whitened_p: Vec<Complex<T>>,
    p_form: T,
}

impl<T: Real> WhitenedSteering<T> {
    pub fn new(factor: Cholesky<T>, p: &[Complex<T>]) -> Result<Self> {
        let whitened_p = factor.forward(p)?;
        let p_form = norm_sqr(&whitened_p);
        if !(p_form > T::zero()) {
            return Err(Error::UndefinedStatistic("steering vector is zero".into()));
        }
        Ok(Self {
            factor,
            whitened_p,
            p_form,
        })
    }

    /// `|p^H Σ^{-1} z|² / (p^H Σ^{-1} p)`.
    pub fn mf(&self, z: &[Complex<T>]) -> Result<T> {
        let wz = self.factor.forward(z)?;
        Ok(inner(&self.whitened_p, &wz).norm_sqr() / self.p_form)
    }

    /// `|p^H Σ^{-1} z|² / ((p^H Σ^{-1} p)(z^H Σ^{-1} z))`.
    pub fn nmf(&self, z: &[Complex<T>]) -> Result<T> {
        let wz = self.factor.forward(z)?;
        let z_form = norm_sqr(&wz);
        if !(z_form > T::zero()) {
            return Err(Error::UndefinedStatistic("normalized matched filter of a zero cell".into()));
        }
        let v = inner(&self.whitened_p, &wz).norm_sqr() / (self.p_form * z_form);
        // Cauchy-Schwarz bounds the ratio by one; rounding may not
        Ok(v.min(T::one()))
    }
}

/// Matched filter statistic. With an SCM estimate this is the AMF.
pub fn mf_statistic<T: Real>(z: &ComplexVector<T>, sigma: &CovarianceEstimate<T>, p: &ComplexVector<T>) -> Result<T> {
    check_dim(sigma.dim(), z.len())?;
    WhitenedSteering::new(sigma.factor.clone(), p.as_slice())?.mf(z.as_slice())
}

/// Normalized matched filter statistic in `[0, 1]`. With a Tyler estimate
/// this is the ANMF.
pub fn nmf_statistic<T: Real>(z: &ComplexVector<T>, sigma: &CovarianceEstimate<T>, p: &ComplexVector<T>) -> Result<T> {
    check_dim(sigma.dim(), z.len())?;
    WhitenedSteering::new(sigma.factor.clone(), p.as_slice())?.nmf(z.as_slice())
}

/// Sample covariance matrix `(1/K) Σ z_k z_k^H`. Requires `K >= m`.
pub fn scm<T: Real>(secondary: &ComplexMatrix<T>) -> Result<CovarianceEstimate<T>> {
    scm_loaded(secondary, T::zero())
}

/// The raw average `(1/K) Σ z_k z_k^H`, Hermitian PSD but possibly singular.
pub fn sample_covariance<T: Real>(secondary: &ComplexMatrix<T>) -> Result<HermitianMatrix<T>> {
    let (m, k) = (secondary.rows(), secondary.cols());
    if k == 0 || m == 0 {
        return Err(Error::EmptyInput("secondary data"));
    }
    let mut acc = vec![Complex::new(T::zero(), T::zero()); m * m];
    for z in secondary.columns() {
        accumulate_outer(&mut acc, m, z, T::one());
    }
    let inv_k = T::one() / T::from_usize(k).expect("K fits");
    HermitianMatrix::from_lower_fn(m, |i, j| acc[i * m + j] * inv_k)
}

/// SCM plus diagonal loading `ε I`. With `ε > 0` any `K >= 1` is accepted.
pub fn scm_loaded<T: Real>(secondary: &ComplexMatrix<T>, loading: T) -> Result<CovarianceEstimate<T>> {
    let (m, k) = (secondary.rows(), secondary.cols());
    if k == 0 || m == 0 {
        return Err(Error::EmptyInput("secondary data"));
    }
    if !(loading >= T::zero()) {
        return Err(Error::InvalidParameter("diagonal loading must be nonnegative".into()));
    }
    if k < m && loading == T::zero() {
        return Err(Error::InvalidParameter(format!(
            "SCM from K = {k} < m = {m} vectors is singular; configure diagonal loading"
        )));
    }
    let matrix = sample_covariance(secondary)?.add_identity(loading);
    CovarianceEstimate::new(matrix, EstimatorTag::Scm, k)
}

/// Deliberate faults for checking that the oracle suite catches a broken
/// Tyler update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TylerMutation {
    /// Adds a constant to every quadratic form `z^H M^{-1} z`, which breaks
    /// invariance to per-column scaling.
    DenominatorOffset(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TylerOptions {
    /// Relative Frobenius change between iterates that stops the iteration.
    pub tol: f64,
    pub max_iter: usize,
    pub mutation: Option<TylerMutation>,
}

impl Default for TylerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            mutation: None,
        }
    }
}

/// Outcome of the fixed-point iteration, converged or not.
#[derive(Debug, Clone)]
pub struct TylerRun<T> {
    pub matrix: HermitianMatrix<T>,
    pub iterations: usize,
    /// Relative Frobenius change of each iterate.
    pub residuals: Vec<T>,
    pub converged: bool,
    pub k_used: usize,
}

impl<T: Real> TylerRun<T> {
    pub fn residual(&self) -> T {
        self.residuals.last().copied().unwrap_or_else(T::infinity)
    }

    pub fn into_estimate(self) -> Result<CovarianceEstimate<T>> {
        if !self.converged {
            return Err(Error::Convergence {
                what: "Tyler fixed point",
                iterations: self.iterations,
                residual: self.residual().to_f64_lossy(),
            });
        }
        CovarianceEstimate::new(self.matrix, EstimatorTag::Tyler, self.k_used)
    }
}

/// Tyler's fixed-point scatter estimate, trace-normalized to `m`.
pub fn tyler<T: Real>(secondary: &ComplexMatrix<T>, tol: f64, max_iter: usize) -> Result<CovarianceEstimate<T>> {
    tyler_run(
        secondary,
        &TylerOptions {
            tol,
            max_iter,
            mutation: None,
        },
    )?
    .into_estimate()
}

/// Iterates `M ← (m/K) Σ_k z_k z_k^H / (z_k^H M^{-1} z_k)` from `M = I`,
/// renormalizing the trace to `m` after every step, until the relative
/// Frobenius change drops below `tol` or `max_iter` steps have run.
pub fn tyler_run<T: Real>(secondary: &ComplexMatrix<T>, opts: &TylerOptions) -> Result<TylerRun<T>> {
    let (m, k) = (secondary.rows(), secondary.cols());
    if m == 0 || k == 0 {
        return Err(Error::EmptyInput("secondary data"));
    }
    if k <= m {
        return Err(Error::InvalidParameter(format!(
            "Tyler estimator needs K > m (K = {k}, m = {m})"
        )));
    }
    if let Some(i) = secondary.columns().position(|z| norm_sqr(z) == T::zero()) {
        return Err(Error::InvalidData(format!("secondary column {i} is zero")));
    }
    let tol = T::lit(opts.tol);
    let offset = match opts.mutation {
        Some(TylerMutation::DenominatorOffset(d)) => T::lit(d),
        None => T::zero(),
    };
    let m_t = T::from_usize(m).expect("m fits");
    let scale = m_t / T::from_usize(k).expect("K fits");
    let zero = Complex::new(T::zero(), T::zero());

    let mut current = vec![zero; m * m];
    for i in 0..m {
        current[i * m + i] = Complex::new(T::one(), T::zero());
    }
    let mut factor = vec![zero; m * m];
    let mut next = vec![zero; m * m];
    let mut w = vec![zero; m];
    let mut residuals = Vec::new();
    let mut converged = false;

    for _ in 0..opts.max_iter {
        factor.copy_from_slice(&current);
        cholesky_in_place(&mut factor, m)?;
        next.iter_mut().for_each(|v| *v = zero);
        for z in secondary.columns() {
            w.copy_from_slice(z);
            forward_in_place(&factor, m, &mut w);
            let q = norm_sqr(&w) + offset;
            accumulate_outer(&mut next, m, z, scale / q);
        }
        let trace: T = (0..m).map(|i| next[i * m + i].re).sum();
        let renorm = m_t / trace;
        let mut diff = T::zero();
        let mut base = T::zero();
        for i in 0..m {
            for j in 0..=i {
                let v = next[i * m + j] * renorm;
                next[i * m + j] = v;
                let weight = if i == j { T::one() } else { T::lit(2.0) };
                diff = diff + weight * (v - current[i * m + j]).norm_sqr();
                base = base + weight * current[i * m + j].norm_sqr();
            }
        }
        // mirror the lower triangle
        for i in 0..m {
            for j in 0..i {
                next[j * m + i] = next[i * m + j].conj();
            }
            next[i * m + i].im = T::zero();
        }
        std::mem::swap(&mut current, &mut next);
        let residual = (diff / base).sqrt();
        if !residual.is_finite() {
            return Err(Error::Convergence {
                what: "Tyler fixed point",
                iterations: residuals.len() + 1,
                residual: f64::NAN,
            });
        }
        residuals.push(residual);
        if residual < tol {
            converged = true;
            break;
        }
    }
    Ok(TylerRun {
        matrix: HermitianMatrix::from_lower_fn(m, |i, j| current[i * m + j])?,
        iterations: residuals.len(),
        residuals,
        converged,
        k_used: k,
    })
}

/// Adds `weight · z z^H` to the lower triangle of a row-major buffer.
#[inline]
fn accumulate_outer<T: Real>(acc: &mut [Complex<T>], m: usize, z: &[Complex<T>], weight: T) {
    for i in 0..m {
        let zi = z[i] * weight;
        let row = &mut acc[i * m..i * m + i + 1];
        for (a, zj) in row.iter_mut().zip(z) {
            *a = *a + zi * zj.conj();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::toeplitz;
    use crate::rng::Stream;
    use crate::sim::{draw_complex_gaussian, draw_texture, steering_vector};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};

    fn identity_estimate(m: usize, scale: f64) -> CovarianceEstimate<f64> {
        CovarianceEstimate::known(HermitianMatrix::scaled_identity(m, scale).unwrap()).unwrap()
    }

    fn columns(draws: &[crate::CVector]) -> ComplexMatrix<f64> {
        let cols: Vec<Vec<Complex64>> = draws.iter().map(|d| d.as_slice().to_vec()).collect();
        ComplexMatrix::from_columns(draws[0].len(), &cols).unwrap()
    }

    fn orthogonal_pair() -> (crate::CVector, crate::CVector) {
        (steering_vector(1, 16).unwrap(), steering_vector(3, 16).unwrap())
    }

    #[test]
    fn mf_closed_forms() {
        let p = steering_vector(0, 16).unwrap();
        assert!((mf_statistic(&p, &identity_estimate(16, 1.0), &p).unwrap() - 16.0).abs() < 1e-12);
        assert!((mf_statistic(&p, &identity_estimate(16, 2.0), &p).unwrap() - 8.0).abs() < 1e-12);
        let (p, z) = orthogonal_pair();
        assert!(mf_statistic(&z, &identity_estimate(16, 1.0), &p).unwrap() < 1e-24);
    }

    #[test]
    fn nmf_closed_forms() {
        let p = steering_vector(5, 16).unwrap();
        let sigma = CovarianceEstimate::known(toeplitz(0.5, 16).unwrap()).unwrap();
        let z = p.scaled(Complex64::new(-0.3, 2.0));
        assert!((nmf_statistic(&z, &sigma, &p).unwrap() - 1.0).abs() < 1e-12);
        let (p, z) = orthogonal_pair();
        assert!(nmf_statistic(&z, &identity_estimate(16, 1.0), &p).unwrap() < 1e-24);
        let zero = ComplexVector::new(vec![Complex64::new(0.0, 0.0); 16]).unwrap();
        assert!(matches!(
            nmf_statistic(&zero, &identity_estimate(16, 1.0), &p),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    #[test]
    fn statistics_invariances() {
        let mut rng = Stream::seed_from_u64(3);
        let t = toeplitz(0.5, 8).unwrap();
        let p = steering_vector(2, 8).unwrap();
        let sigma = CovarianceEstimate::known(t.clone()).unwrap();
        let sigma_scaled = CovarianceEstimate::known(t.scaled(7.5)).unwrap();
        for z in draw_complex_gaussian(&t, 50, &mut rng).unwrap() {
            let theta = rng.gen_range(0.0..6.28);
            let rotated = z.scaled(Complex64::from_polar(1.0, theta));
            let a = mf_statistic(&z, &sigma, &p).unwrap();
            let b = mf_statistic(&rotated, &sigma, &p).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.max(1.0));

            let c = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let n0 = nmf_statistic(&z, &sigma, &p).unwrap();
            let n1 = nmf_statistic(&z.scaled(c), &sigma_scaled, &p).unwrap();
            assert!((n0 - n1).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&n0));
        }
    }

    #[test]
    fn dimension_errors_propagate() {
        let p = steering_vector(0, 4).unwrap();
        let z = steering_vector(0, 3).unwrap();
        assert!(matches!(
            mf_statistic(&z, &identity_estimate(4, 1.0), &p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn scm_cases() {
        let z = vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.0)];
        let block = ComplexMatrix::from_columns(2, &[z.clone(), z.clone(), z.clone()]).unwrap();
        let raw = sample_covariance(&block).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((raw.get(i, j) - z[i] * z[j].conj()).norm() < 1e-14);
            }
        }
        // rank one, so the plug-in estimate is rejected downstream
        assert!(matches!(scm(&block), Err(Error::NotPositiveDefinite { .. })));
        let loaded = scm_loaded(&block, 1.0).unwrap();
        assert!((loaded.matrix().get(0, 0).re - (z[0].norm_sqr() + 1.0)).abs() < 1e-14);
        assert!(matches!(scm(&ComplexMatrix::<f64>::empty(2)), Err(Error::EmptyInput(_))));
        let short = ComplexMatrix::from_columns(2, &[z.clone()]).unwrap();
        assert!(matches!(scm(&short), Err(Error::InvalidParameter(_))));
        assert_eq!(scm_loaded(&short, 0.1).unwrap().k_used(), 1);
    }

    #[test]
    fn scm_is_consistent() {
        let t = toeplitz(0.5, 4).unwrap();
        let draws = draw_complex_gaussian(&t, 10_000, &mut Stream::seed_from_u64(8)).unwrap();
        let est = scm(&columns(&draws)).unwrap();
        let err = est.matrix().frobenius_distance(&t).unwrap() / t.frobenius_norm();
        assert!(err < 0.05, "relative error {err}");
        assert_eq!(est.tag(), EstimatorTag::Scm);
    }

    #[test]
    fn tyler_dimension_one_is_unity() {
        let block = ComplexMatrix::from_columns(
            1,
            &[vec![Complex64::new(3.0, 1.0)], vec![Complex64::new(-0.2, 0.0)], vec![Complex64::new(0.0, 9.0)]],
        )
        .unwrap();
        let est = tyler(&block, 1e-8, 100).unwrap();
        assert!((est.matrix().get(0, 0).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tyler_preconditions() {
        let t = toeplitz(0.5, 4).unwrap();
        let draws = draw_complex_gaussian(&t, 4, &mut Stream::seed_from_u64(1)).unwrap();
        assert!(matches!(tyler(&columns(&draws), 1e-8, 100), Err(Error::InvalidParameter(_))));
        let mut cols: Vec<Vec<Complex64>> =
            draw_complex_gaussian(&t, 8, &mut Stream::seed_from_u64(1)).unwrap().iter().map(|d| d.as_slice().to_vec()).collect();
        cols[3] = vec![Complex64::new(0.0, 0.0); 4];
        let block = ComplexMatrix::from_columns(4, &cols).unwrap();
        assert!(matches!(tyler(&block, 1e-8, 100), Err(Error::InvalidData(_))));
    }

    #[test]
    fn tyler_reports_non_convergence() {
        let t = toeplitz(0.9, 8).unwrap();
        let draws = draw_complex_gaussian(&t, 9, &mut Stream::seed_from_u64(2)).unwrap();
        match tyler(&columns(&draws), 1e-14, 2) {
            Err(Error::Convergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-14);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn tyler_scale_invariance_and_trace() {
        let mut rng = Stream::seed_from_u64(17);
        let t = toeplitz(0.5, 6).unwrap();
        let draws = draw_complex_gaussian(&t, 20, &mut rng).unwrap();
        let scaled: Vec<crate::CVector> = draws
            .iter()
            .map(|d| d.scaled(Complex64::new(rng.gen_range(0.01..100.0), 0.0)))
            .collect();
        let a = tyler(&columns(&draws), 1e-8, 100).unwrap();
        let b = tyler(&columns(&scaled), 1e-8, 100).unwrap();
        let rel = a.matrix().frobenius_distance(b.matrix()).unwrap() / a.matrix().frobenius_norm();
        assert!(rel < 1e-9, "relative change {rel}");
        assert!((a.matrix().trace() - 6.0).abs() < 1e-9 * 6.0);
        assert_eq!(a.tag(), EstimatorTag::Tyler);
    }

    #[test]
    fn tyler_mutation_breaks_scale_invariance() {
        let mut rng = Stream::seed_from_u64(17);
        let t = toeplitz(0.5, 6).unwrap();
        let draws = draw_complex_gaussian(&t, 20, &mut rng).unwrap();
        let scaled: Vec<crate::CVector> = draws.iter().enumerate().map(|(i, d)| d.scaled(Complex64::new(1.0 + i as f64, 0.0))).collect();
        let opts = TylerOptions {
            mutation: Some(TylerMutation::DenominatorOffset(1.0)),
            ..TylerOptions::default()
        };
        let a = tyler_run(&columns(&draws), &opts).unwrap();
        let b = tyler_run(&columns(&scaled), &opts).unwrap();
        let rel = a.matrix.frobenius_distance(&b.matrix).unwrap() / a.matrix.frobenius_norm();
        assert!(rel > 1e-3);
    }

    #[test]
    fn tyler_is_consistent_under_compound_clutter() {
        let mut rng = Stream::seed_from_u64(99);
        let t = toeplitz(0.5, 4).unwrap();
        let speckle = draw_complex_gaussian(&t, 1000, &mut rng).unwrap();
        let draws: Vec<crate::CVector> = speckle
            .iter()
            .map(|g| g.scaled(Complex64::new(draw_texture(1.0, &mut rng).unwrap().sqrt(), 0.0)))
            .collect();
        let est = tyler(&columns(&draws), 1e-8, 100).unwrap();
        // T(ρ) already has trace m
        let err = est.matrix().frobenius_distance(&t).unwrap() / t.frobenius_norm();
        assert!(err < 0.1, "relative error {err}");
    }

    #[test]
    fn tyler_residuals_decrease_at_the_end() {
        let t = toeplitz(0.5, 16).unwrap();
        let draws = draw_complex_gaussian(&t.add_identity(1.0), 32, &mut Stream::seed_from_u64(5)).unwrap();
        let run = tyler_run(&columns(&draws), &TylerOptions::default()).unwrap();
        assert!(run.converged);
        let tail = &run.residuals[run.residuals.len().saturating_sub(10)..];
        assert!(tail.windows(2).all(|w| w[1] < w[0]), "{tail:?}");
    }

    #[test]
    fn single_precision_statistics() {
        let p = ComplexVector::from_real(&[1.0f32; 8]).unwrap();
        let sigma = CovarianceEstimate::known(HermitianMatrix::scaled_identity(8, 2.0f32).unwrap()).unwrap();
        assert!((mf_statistic(&p, &sigma, &p).unwrap() - 4.0).abs() < 1e-5);
        assert!((nmf_statistic(&p, &sigma, &p).unwrap() - 1.0).abs() < 1e-5);
    }
}
