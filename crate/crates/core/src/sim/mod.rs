//! Synthetic radar scenes: Toeplitz clutter, optional Gamma texture,
//! white thermal noise and steering-vector targets.
//!
//! A cell is `z = α p + √τ c + n` with `c ~ CN(0, T(ρ))`,
//! `n ~ CN(0, σ_n² I)` and `α = √(SNR/m) e^{jφ}`. Secondary vectors are
//! drawn the same way without the target term.

pub mod io;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{toeplitz, Cholesky, ComplexMatrix, ComplexVector, HermitianMatrix};
use crate::rng::{Domain, Stream, StreamFactory};
use crate::{CMatrix, CVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClutterFamily {
    Gaussian,
    CompoundGaussian,
}

impl ClutterFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ClutterFamily::Gaussian => "gaussian",
            ClutterFamily::CompoundGaussian => "compound_gaussian",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            ClutterFamily::Gaussian => 0,
            ClutterFamily::CompoundGaussian => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(ClutterFamily::Gaussian),
            1 => Ok(ClutterFamily::CompoundGaussian),
            other => Err(Error::Format(format!("unknown clutter family code {other}"))),
        }
    }
}

impl std::fmt::Display for ClutterFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for ClutterFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(ClutterFamily::Gaussian),
            "compound_gaussian" => Ok(ClutterFamily::CompoundGaussian),
            other => Err(Error::InvalidParameter(format!("unknown clutter family {other:?}"))),
        }
    }
}

/// Full description of one simulated clutter environment and its datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub clutter_family: ClutterFamily,
    /// Cell dimension.
    pub m: usize,
    /// Secondary vectors per calibration/test sample (classical detectors).
    pub k_secondary: usize,
    pub rho: f64,
    /// Gamma shape µ of the texture; scale is 1/µ so the mean is 1.
    pub texture_shape: f64,
    /// Draw a fresh texture for every vector instead of one per sample.
    pub texture_per_vector: bool,
    /// Thermal noise variance σ_n² per complex component.
    pub noise_power: f64,
    pub pfa: f64,
    pub snr_grid_db: Vec<f64>,
    pub doppler_bins: Vec<usize>,
    pub n_train: usize,
    pub n_cal: usize,
    /// Size of the fresh target-free set used to verify the false-alarm rate.
    pub n_verify: usize,
    pub n_test: usize,
    pub master_seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            clutter_family: ClutterFamily::Gaussian,
            m: 16,
            k_secondary: 32,
            rho: 0.5,
            texture_shape: 1.0,
            texture_per_vector: false,
            noise_power: 1.0,
            pfa: 0.01,
            snr_grid_db: (0..=20).map(f64::from).collect(),
            doppler_bins: (0..16).collect(),
            n_train: 5000,
            n_cal: 5000,
            n_verify: 5000,
            n_test: 5000,
            master_seed: 2025,
        }
    }
}

impl Scenario {
    pub fn with_family(mut self, family: ClutterFamily) -> Self {
        self.clutter_family = family;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.m < 2 {
            return bad(format!("m = {} must be at least 2", self.m));
        }
        if self.k_secondary < 1 {
            return bad("k_secondary must be at least 1".into());
        }
        if !(self.rho.abs() < 1.0) {
            return bad(format!("rho = {} must satisfy |rho| < 1", self.rho));
        }
        if !(self.texture_shape > 0.0) || !self.texture_shape.is_finite() {
            return bad(format!("texture_shape = {} must be positive", self.texture_shape));
        }
        if !(self.noise_power >= 0.0) || !self.noise_power.is_finite() {
            return bad(format!("noise_power = {} must be nonnegative", self.noise_power));
        }
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return bad(format!("pfa = {} must lie in (0, 1)", self.pfa));
        }
        for (name, n) in [
            ("n_train", self.n_train),
            ("n_cal", self.n_cal),
            ("n_verify", self.n_verify),
            ("n_test", self.n_test),
        ] {
            if n < 1 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if let Some(&d) = self.doppler_bins.iter().find(|&&d| d >= self.m) {
            return bad(format!("doppler bin {d} outside [0, {})", self.m));
        }
        if let Some(s) = self.snr_grid_db.iter().find(|s| !s.is_finite()) {
            return bad(format!("snr value {s} is not finite"));
        }
        Ok(())
    }

    /// `T(ρ) + σ_n² I`, the covariance of a target-free cell (texture mean 1).
    pub fn total_covariance(&self) -> Result<HermitianMatrix<f64>> {
        Ok(toeplitz(self.rho, self.m)?.add_identity(self.noise_power))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    H0,
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub snr_db: f64,
    pub doppler: usize,
}

/// One observation: the cell under test plus its target-free secondary block.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub cell: CVector,
    pub secondary: CMatrix,
    pub target: Option<Target>,
    /// Target phase φ. Drawn for every sample so streams stay aligned.
    pub phase: f64,
}

impl Sample {
    pub fn label(&self) -> Label {
        if self.target.is_some() {
            Label::H1
        } else {
            Label::H0
        }
    }

    /// Copy of a target-free sample with `α p` added to its cell.
    pub fn with_target(&self, steering: &CVector, snr_db: f64, doppler: usize) -> Result<Sample> {
        if self.target.is_some() {
            return Err(Error::InvalidData("sample already contains a target".into()));
        }
        crate::linalg::check_dim(self.cell.len(), steering.len())?;
        let alpha = target_amplitude(snr_db, self.cell.len(), self.phase);
        let cell = self
            .cell
            .as_slice()
            .iter()
            .zip(steering.as_slice())
            .map(|(&base, &p)| alpha * p + base)
            .collect();
        Ok(Sample {
            cell: ComplexVector::from_vec_unchecked(cell),
            secondary: self.secondary.clone(),
            target: Some(Target { snr_db, doppler }),
            phase: self.phase,
        })
    }
}

/// `p_k = exp(j 2π d k / m)`.
pub fn steering_vector(d: usize, m: usize) -> Result<CVector> {
    if m == 0 || d >= m {
        return Err(Error::InvalidParameter(format!("doppler bin {d} outside [0, {m})")));
    }
    let entries = (0..m)
        .map(|k| {
            // reduce the phase index first so large products stay exact
            let turns = ((d * k) % m) as f64 / m as f64;
            Complex64::from_polar(1.0, 2.0 * PI * turns)
        })
        .collect();
    Ok(ComplexVector::from_vec_unchecked(entries))
}

/// `α = √(10^{snr_db/10} / m) e^{jφ}`, so that `‖α p‖² = SNR`.
pub fn target_amplitude(snr_db: f64, m: usize, phase: f64) -> Complex64 {
    let snr = 10f64.powf(snr_db / 10.0);
    Complex64::from_polar((snr / m as f64).sqrt(), phase)
}

/// Standard circular complex normal: real and imaginary parts i.i.d. N(0, 1/2).
#[inline]
fn circular_normal(rng: &mut Stream) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn colored(l: &Cholesky<f64>, rng: &mut Stream) -> Vec<Complex64> {
    let m = l.dim();
    let w: Vec<Complex64> = (0..m).map(|_| circular_normal(rng)).collect();
    (0..m)
        .map(|i| (0..=i).fold(Complex64::new(0.0, 0.0), |acc, k| acc + l.get(i, k) * w[k]))
        .collect()
}

/// `count` draws from `CN(0, Σ)` as `L w` with `L L^H = Σ`.
pub fn draw_complex_gaussian(sigma: &HermitianMatrix<f64>, count: usize, rng: &mut Stream) -> Result<Vec<CVector>> {
    let l = sigma.cholesky()?;
    Ok((0..count)
        .map(|_| ComplexVector::from_vec_unchecked(colored(&l, rng)))
        .collect())
}

/// Texture `τ ~ Gamma(shape µ, scale 1/µ)`: mean 1, variance 1/µ.
pub fn draw_texture(mu: f64, rng: &mut Stream) -> Result<f64> {
    let gamma = Gamma::new(mu, 1.0 / mu)
        .map_err(|e| Error::InvalidParameter(format!("texture shape {mu}: {e}")))?;
    Ok(gamma.sample(rng))
}

/// Precomputed state for drawing samples of one scenario.
#[derive(Debug, Clone)]
pub struct SceneGenerator {
    scenario: Scenario,
    clutter_factor: Cholesky<f64>,
    noise_std: f64,
    streams: StreamFactory,
}

impl SceneGenerator {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        Ok(Self {
            clutter_factor: toeplitz(scenario.rho, scenario.m)?.cholesky()?,
            noise_std: scenario.noise_power.sqrt(),
            streams: StreamFactory::new(scenario.master_seed),
            scenario: scenario.clone(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn texture(&self, rng: &mut Stream) -> f64 {
        match self.scenario.clutter_family {
            ClutterFamily::Gaussian => 1.0,
            ClutterFamily::CompoundGaussian => {
                draw_texture(self.scenario.texture_shape, rng).expect("shape validated")
            }
        }
    }

    /// `√τ c + n` for one vector.
    fn clutter_plus_noise(&self, sqrt_tau: f64, rng: &mut Stream) -> Vec<Complex64> {
        let c = colored(&self.clutter_factor, rng);
        c.into_iter()
            .map(|ck| {
                let n = circular_normal(rng) * self.noise_std;
                ck * sqrt_tau + n
            })
            .collect()
    }

    /// Draws one target-free sample with `k` secondary vectors.
    ///
    /// Draw order: texture, cell, phase, then each secondary vector (with
    /// its own texture first when textures are per vector). The order is
    /// part of the reproducibility contract.
    pub fn draw_base(&self, k: usize, rng: &mut Stream) -> Sample {
        let tau = self.texture(rng);
        let cell = self.clutter_plus_noise(tau.sqrt(), rng);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let mut data = Vec::with_capacity(self.scenario.m * k);
        for _ in 0..k {
            let tau_k = if self.scenario.texture_per_vector {
                self.texture(rng)
            } else {
                tau
            };
            data.extend(self.clutter_plus_noise(tau_k.sqrt(), rng));
        }
        Sample {
            cell: ComplexVector::from_vec_unchecked(cell),
            secondary: ComplexMatrix::from_col_major(self.scenario.m, k, data)
                .expect("generated data is finite"),
            target: None,
            phase,
        }
    }

    /// One sample; with a target the cell becomes `α p + √τ c + n`.
    pub fn synthesize(&self, target: Option<Target>, k: usize, rng: &mut Stream) -> Result<Sample> {
        let base = self.draw_base(k, rng);
        match target {
            None => Ok(base),
            Some(t) => base.with_target(&steering_vector(t.doppler, self.scenario.m)?, t.snr_db, t.doppler),
        }
    }

    fn draw_split(&self, domain: Domain, n: usize, k: usize) -> Vec<Sample> {
        let tag = u64::from(self.scenario.clutter_family.code());
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.draw_base(k, &mut self.streams.stream(domain, tag, i)))
            .collect()
    }

    pub fn make_splits(&self) -> Result<Splits> {
        let s = &self.scenario;
        let steering = s
            .doppler_bins
            .iter()
            .map(|&d| steering_vector(d, s.m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Splits {
            train: self.draw_split(Domain::Train, s.n_train, 0),
            calibration: self.draw_split(Domain::Calibration, s.n_cal, s.k_secondary),
            verification: self.draw_split(Domain::Verification, s.n_verify, s.k_secondary),
            test: TestSplit {
                snr_grid_db: s.snr_grid_db.clone(),
                doppler_bins: s.doppler_bins.clone(),
                steering,
                base: self.draw_split(Domain::Test, s.n_test, s.k_secondary),
            },
        })
    }
}

/// One sample drawn from `stream`; `snr_db` and `d` are required together
/// with `with_target`.
pub fn synthesize_sample(
    scn: &Scenario,
    with_target: bool,
    snr_db: Option<f64>,
    d: Option<usize>,
    rng: &mut Stream,
) -> Result<Sample> {
    let target = match (with_target, snr_db, d) {
        (false, _, _) => None,
        (true, Some(snr_db), Some(doppler)) => Some(Target { snr_db, doppler }),
        (true, _, _) => {
            return Err(Error::InvalidParameter(
                "a target sample needs both snr_db and a doppler bin".into(),
            ))
        }
    };
    SceneGenerator::new(scn)?.synthesize(target, scn.k_secondary, rng)
}

/// The datasets of one scenario.
///
/// `train` samples carry only a cell (`K = 1`); calibration, verification
/// and test samples carry a `k_secondary` secondary block as well.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<Sample>,
    pub calibration: Vec<Sample>,
    pub verification: Vec<Sample>,
    pub test: TestSplit,
}

/// Target-present test data for a `(doppler, snr)` grid.
///
/// Stores `n_test` target-free draws. The cell for grid point `(d, snr)`
/// and index `i` is draw `i` plus `α(snr, φ_i) p_d`, so every grid point
/// reuses the same clutter, noise and phase realizations.
#[derive(Debug, Clone)]
pub struct TestSplit {
    pub snr_grid_db: Vec<f64>,
    pub doppler_bins: Vec<usize>,
    steering: Vec<CVector>,
    base: Vec<Sample>,
}

impl TestSplit {
    pub fn new(snr_grid_db: Vec<f64>, doppler_bins: Vec<usize>, base: Vec<Sample>) -> Result<Self> {
        let m = base.first().map(|s| s.cell.len()).ok_or(Error::EmptyInput("test split"))?;
        if base.iter().any(|s| s.target.is_some() || s.cell.len() != m) {
            return Err(Error::InvalidData("test base samples must be target-free with equal m".into()));
        }
        let steering = doppler_bins
            .iter()
            .map(|&d| steering_vector(d, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            snr_grid_db,
            doppler_bins,
            steering,
            base,
        })
    }

    pub fn n_test(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &[Sample] {
        &self.base
    }

    /// Steering vector of bin position `bin_idx`.
    pub fn steering(&self, bin_idx: usize) -> &CVector {
        &self.steering[bin_idx]
    }

    /// Target-present cells for bin position `bin_idx` and SNR, without the
    /// secondary blocks.
    pub fn cells_at(&self, bin_idx: usize, snr_db: f64) -> Vec<CVector> {
        let p = self.steering[bin_idx].as_slice();
        self.base
            .iter()
            .map(|b| {
                let alpha = target_amplitude(snr_db, p.len(), b.phase);
                let cell = b.cell.as_slice().iter().zip(p).map(|(&z, &pk)| alpha * pk + z).collect();
                ComplexVector::from_vec_unchecked(cell)
            })
            .collect()
    }

    /// Target-present samples for bin position `bin_idx` and SNR.
    pub fn samples_at(&self, bin_idx: usize, snr_db: f64) -> Result<Vec<Sample>> {
        let p = &self.steering[bin_idx];
        let d = self.doppler_bins[bin_idx];
        self.base.iter().map(|b| b.with_target(p, snr_db, d)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> Stream {
        Stream::seed_from_u64(seed)
    }

    fn small(family: ClutterFamily) -> Scenario {
        Scenario {
            clutter_family: family,
            m: 4,
            k_secondary: 3,
            n_train: 7,
            n_cal: 5,
            n_verify: 5,
            n_test: 6,
            snr_grid_db: vec![0.0, 10.0],
            doppler_bins: vec![0, 2],
            ..Scenario::default()
        }
    }

    #[test]
    fn steering_vector_cases() {
        let p0 = steering_vector(0, 16).unwrap();
        assert!(p0.as_slice().iter().all(|&z| z == Complex64::new(1.0, 0.0)));
        let p8 = steering_vector(8, 16).unwrap();
        for (k, z) in p8.as_slice().iter().enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!((z.re - sign).abs() < 1e-15 && z.im.abs() < 1e-15);
        }
        for d in 0..16 {
            let n = steering_vector(d, 16).unwrap().norm_sqr();
            assert!((n - 16.0).abs() < 1e-12);
        }
        assert!(steering_vector(16, 16).is_err());
    }

    #[test]
    fn circular_gaussian_moments() {
        let id = HermitianMatrix::identity(2).unwrap();
        let draws = draw_complex_gaussian(&id, 100_000, &mut rng(3)).unwrap();
        let n = draws.len() as f64;
        for comp in 0..2 {
            let var: f64 = draws.iter().map(|z| z[comp].norm_sqr()).sum::<f64>() / n;
            assert!((var - 1.0).abs() < 0.02, "variance {var}");
            // non-conjugate second moment E[z z^T] vanishes for circular draws
            let pseudo: Complex64 = draws.iter().map(|z| z[comp] * z[comp]).sum::<Complex64>() / n;
            assert!(pseudo.norm() < 0.02, "pseudo-covariance {pseudo}");
        }
        let cross: Complex64 = draws.iter().map(|z| z[0] * z[1]).sum::<Complex64>() / n;
        assert!(cross.norm() < 0.02);
    }

    #[test]
    fn gaussian_draws_are_deterministic() {
        let t = toeplitz(0.5, 4).unwrap();
        let a = draw_complex_gaussian(&t, 10, &mut rng(9)).unwrap();
        let b = draw_complex_gaussian(&t, 10, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn texture_moments() {
        let mut r = rng(5);
        let draws: Vec<f64> = (0..100_000).map(|_| draw_texture(1.0, &mut r).unwrap()).collect();
        assert!(draws.iter().all(|&t| t > 0.0));
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
        assert!(draw_texture(0.0, &mut r).is_err());
        assert!(draw_texture(-1.0, &mut r).is_err());
        let mut r = rng(6);
        assert!((0..1000).all(|_| draw_texture(0.3, &mut r).unwrap() > 0.0));
    }

    #[test]
    fn cell_covariance_matches_model() {
        let scn = Scenario {
            m: 4,
            doppler_bins: vec![0],
            ..Scenario::default()
        };
        let gen = SceneGenerator::new(&scn).unwrap();
        let target = scn.total_covariance().unwrap();
        let mut r = rng(21);
        let n = 100_000;
        let mut acc = vec![Complex64::new(0.0, 0.0); 16];
        for _ in 0..n {
            let s = gen.draw_base(0, &mut r);
            for i in 0..4 {
                for j in 0..4 {
                    acc[i * 4 + j] += s.cell[i] * s.cell[j].conj();
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                let est = acc[i * 4 + j] / n as f64;
                assert!((est - target.get(i, j)).norm() < 0.03, "({i},{j}) {est}");
            }
        }
    }

    #[test]
    fn target_energy_matches_snr() {
        for snr_db in [-10.0, 0.0, 7.5, 20.0] {
            let alpha = target_amplitude(snr_db, 16, 1.234);
            let expected = 10f64.powf(snr_db / 10.0) / 16.0;
            assert!((alpha.norm_sqr() - expected).abs() <= 1e-14 * expected.max(1.0));
        }
        let scn = Scenario::default();
        let base = SceneGenerator::new(&scn).unwrap().draw_base(2, &mut rng(1));
        let p = steering_vector(3, 16).unwrap();
        let s = base.with_target(&p, 10.0, 3).unwrap();
        let added: f64 = s
            .cell
            .as_slice()
            .iter()
            .zip(base.cell.as_slice())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        assert!((added - 10.0).abs() < 1e-10);
        assert_eq!(s.secondary, base.secondary);
        assert_eq!(s.label(), Label::H1);
    }

    #[test]
    fn noise_free_cells_follow_clutter() {
        let scn = Scenario {
            m: 3,
            noise_power: 0.0,
            doppler_bins: vec![0],
            ..Scenario::default()
        };
        let gen = SceneGenerator::new(&scn).unwrap();
        let mut a = rng(4);
        let mut b = rng(4);
        let s = gen.draw_base(0, &mut a);
        let expected = colored(&toeplitz(0.5, 3).unwrap().cholesky().unwrap(), &mut b);
        assert_eq!(s.cell.as_slice(), expected.as_slice());
    }

    #[test]
    fn synthesize_requires_target_parameters() {
        let scn = small(ClutterFamily::Gaussian);
        assert!(synthesize_sample(&scn, true, Some(3.0), None, &mut rng(0)).is_err());
        assert!(synthesize_sample(&scn, true, None, Some(1), &mut rng(0)).is_err());
        let s = synthesize_sample(&scn, true, Some(3.0), Some(1), &mut rng(0)).unwrap();
        assert_eq!(s.target, Some(Target { snr_db: 3.0, doppler: 1 }));
        assert_eq!(s.secondary.cols(), 3);
        let bad = Scenario { rho: 1.0, ..scn };
        assert!(synthesize_sample(&bad, false, None, None, &mut rng(0)).is_err());
    }

    #[test]
    fn shared_texture_scales_all_vectors() {
        // Regenerating with the recorded τ reproduces the compound draw exactly.
        let scn = Scenario {
            noise_power: 0.0,
            ..small(ClutterFamily::CompoundGaussian)
        };
        let gen = SceneGenerator::new(&scn).unwrap();
        let s = gen.draw_base(3, &mut rng(12));
        let mut r = rng(12);
        let tau = draw_texture(1.0, &mut r).unwrap();
        let speckle = SceneGenerator::new(&Scenario {
            clutter_family: ClutterFamily::Gaussian,
            ..scn.clone()
        })
        .unwrap();
        let cell = speckle.clutter_plus_noise(tau.sqrt(), &mut r);
        assert_eq!(s.cell.as_slice(), cell.as_slice());
        let _phase: f64 = r.gen_range(0.0..2.0 * PI);
        for k in 0..3 {
            let col = speckle.clutter_plus_noise(tau.sqrt(), &mut r);
            assert_eq!(s.secondary.column(k), col.as_slice());
        }
    }

    #[test]
    fn splits_shapes_and_determinism() {
        let scn = small(ClutterFamily::CompoundGaussian);
        let gen = SceneGenerator::new(&scn).unwrap();
        let a = gen.make_splits().unwrap();
        assert_eq!(a.train.len(), 7);
        assert!(a.train.iter().all(|s| s.secondary.cols() == 0 && s.target.is_none()));
        assert!(a.calibration.iter().all(|s| s.secondary.cols() == 3));
        assert_eq!(a.test.n_test(), 6);
        let cells = a.test.samples_at(1, 10.0).unwrap();
        assert!(cells.iter().all(|s| s.target == Some(Target { snr_db: 10.0, doppler: 2 })));
        let bare = a.test.cells_at(1, 10.0);
        assert!(cells.iter().zip(&bare).all(|(s, c)| &s.cell == c));

        let b = SceneGenerator::new(&scn).unwrap().make_splits().unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.calibration, b.calibration);
        assert_eq!(a.test.base(), b.test.base());
    }

    #[test]
    fn split_streams_are_independent_of_sizes() {
        let scn = small(ClutterFamily::Gaussian);
        let a = SceneGenerator::new(&scn).unwrap().make_splits().unwrap();
        let bigger = Scenario { n_train: 50, ..scn };
        let b = SceneGenerator::new(&bigger).unwrap().make_splits().unwrap();
        assert_eq!(a.calibration, b.calibration);
        assert_eq!(a.test.base(), b.test.base());
        assert_eq!(a.train[..], b.train[..7]);
        // the two families draw from different streams
        let c = SceneGenerator::new(&small(ClutterFamily::CompoundGaussian))
            .unwrap()
            .make_splits()
            .unwrap();
        assert_ne!(a.calibration[0].cell, c.calibration[0].cell);
    }

    #[test]
    fn reference_protocol_sizes() {
        let scn = Scenario::default();
        assert_eq!((scn.m, scn.k_secondary, scn.n_train), (16, 32, 5000));
        assert_eq!(scn.pfa, 0.01);
        assert_eq!(scn.rho, 0.5);
        assert_eq!(scn.texture_shape, 1.0);
        scn.validate().unwrap();
        let bad = Scenario {
            doppler_bins: vec![16],
            ..Scenario::default()
        };
        assert!(bad.validate().is_err());
        let bad = Scenario {
            pfa: 0.0,
            ..Scenario::default()
        };
        assert!(bad.validate().is_err());
    }
}
