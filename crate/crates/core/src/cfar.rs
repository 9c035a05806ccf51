//! CFAR calibration and Monte Carlo detection-probability estimation.
//!
//! Every detector gets one threshold per scenario: the `⌈(1 − pfa) N⌉`-th
//! smallest of `N` target-free calibration scores. Detection is declared
//! when a score is strictly greater than the threshold.

use std::borrow::Cow;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{scm_loaded, tyler_run, TylerOptions};
use crate::deep::DsvddModel;
use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sqr, Cholesky};
use crate::sim::{target_amplitude, ClutterFamily, Sample, Scenario, TestSplit};
use crate::svdd::SvddModel;
use crate::CVector;

/// Two-sided 95% normal quantile used by the Wilson interval.
pub const WILSON_Z: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// MF with the true total covariance.
    MfTrue,
    /// MF with the SCM of the sample's secondary block.
    AmfScm,
    /// NMF with the Tyler estimate of the sample's secondary block.
    AnmfTyler,
    Svdd,
    Dsvdd,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::MfTrue,
        DetectorKind::AmfScm,
        DetectorKind::AnmfTyler,
        DetectorKind::Svdd,
        DetectorKind::Dsvdd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::MfTrue => "mf_true",
            DetectorKind::AmfScm => "amf_scm",
            DetectorKind::AnmfTyler => "anmf_tyler",
            DetectorKind::Svdd => "svdd",
            DetectorKind::Dsvdd => "dsvdd",
        }
    }

    pub fn is_classical(self) -> bool {
        matches!(self, DetectorKind::MfTrue | DetectorKind::AmfScm | DetectorKind::AnmfTyler)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown detector '{s}'")))
    }
}

/// The `⌈(1 − pfa) N⌉`-th order statistic (1-based) of `scores`.
pub fn calibrate_threshold(scores: &[f64], pfa: f64) -> Result<f64> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::InvalidParameter(format!("pfa = {pfa} must lie in (0, 1)")));
    }
    let n = scores.len();
    if (n as f64) * pfa < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "{n} calibration scores cannot resolve pfa = {pfa}; need at least {}",
            (1.0 / pfa).ceil()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite calibration score {bad}")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    // the product is rounded first so that e.g. 0.99·100 selects index 99
    let rank = ((1.0 - pfa) * n as f64 * (1.0 - 4.0 * f64::EPSILON)).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// Fraction of `scores` strictly above `threshold`; zero for an empty set.
pub fn exceedance_rate(scores: &[f64], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s > threshold).count() as f64 / scores.len() as f64
}

/// Empirical false-alarm rate of a threshold on fresh target-free scores.
pub fn verify_pfa(h0_scores: &[f64], threshold: f64) -> f64 {
    exceedance_rate(h0_scores, threshold)
}

/// Wilson score interval for `k` successes in `n` trials at [`WILSON_Z`].
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdEstimate {
    pub pd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_trials: usize,
}

/// Detection rate of target-present scores against `threshold`.
pub fn estimate_pd(h1_scores: &[f64], threshold: f64) -> Result<PdEstimate> {
    if h1_scores.is_empty() {
        return Err(Error::EmptyInput("test cells"));
    }
    if threshold.is_nan() {
        return Err(Error::InvalidParameter("threshold is NaN".into()));
    }
    let n = h1_scores.len();
    let k = h1_scores.iter().filter(|&&s| s > threshold).count();
    let (ci_low, ci_high) = wilson_interval(k, n);
    Ok(PdEstimate {
        pd: k as f64 / n as f64,
        ci_low,
        ci_high,
        n_trials: n,
    })
}

/// `ln(1/pfa)`: the MF threshold when the statistic is Exp(1) under H0.
pub fn mf_analytic_threshold(pfa: f64) -> f64 {
    (1.0 / pfa).ln()
}

/// `1 − pfa^{1/(m−1)}`: the NMF threshold when the statistic is
/// Beta(1, m − 1) under H0.
pub fn nmf_analytic_threshold(pfa: f64, m: usize) -> f64 {
    1.0 - pfa.powf(1.0 / (m as f64 - 1.0))
}

/// Fitted models for the learned detectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct Models<'a> {
    pub svdd: Option<&'a SvddModel<f64>>,
    pub dsvdd: Option<&'a DsvddModel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessOptions {
    pub tyler: TylerOptions,
    /// Diagonal loading added to every SCM; zero reproduces the plain SCM.
    pub scm_loading: f64,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            tyler: TylerOptions::default(),
            scm_loading: 0.0,
        }
    }
}

/// Target-free calibration and verification samples plus the test grid.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationData<'a> {
    pub calibration: &'a [Sample],
    pub verification: &'a [Sample],
    pub test: &'a TestSplit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRow {
    pub detector: DetectorKind,
    pub clutter_family: ClutterFamily,
    pub doppler_bin: usize,
    pub snr_db: f64,
    pub pd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_trials: usize,
    pub threshold: f64,
    pub empirical_pfa: f64,
}

/// Per-detector outcome of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSummary {
    pub detector: DetectorKind,
    pub threshold: f64,
    pub empirical_pfa: f64,
    pub n_calibration: usize,
    pub n_verification: usize,
    /// Tyler runs that hit the iteration cap; their last iterate was used.
    pub tyler_unconverged: usize,
    /// Set when the detector failed; its rows then hold NaN values.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub clutter_family: ClutterFamily,
    pub rows: Vec<DetectionRow>,
    pub summaries: Vec<DetectorSummary>,
}

pub const REPORT_COLUMNS: [&str; 10] = [
    "detector",
    "clutter_family",
    "doppler_bin",
    "snr_db",
    "pd",
    "ci_low",
    "ci_high",
    "n_trials",
    "threshold",
    "empirical_pfa",
];

impl DetectionReport {
    pub fn file_name(&self) -> String {
        format!("report_{}.csv", self.clutter_family.as_str())
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{}", REPORT_COLUMNS.join(","))?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.detector,
                r.clutter_family,
                r.doppler_bin,
                r.snr_db,
                r.pd,
                r.ci_low,
                r.ci_high,
                r.n_trials,
                r.threshold,
                r.empirical_pfa
            )?;
        }
        Ok(())
    }

    pub fn detectors(&self) -> Vec<DetectorKind> {
        self.summaries.iter().map(|s| s.detector).collect()
    }

    pub fn summary(&self, detector: DetectorKind) -> Option<&DetectorSummary> {
        self.summaries.iter().find(|s| s.detector == detector)
    }

    pub fn pd_at(&self, detector: DetectorKind, doppler_bin: usize, snr_db: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.detector == detector && r.doppler_bin == doppler_bin && r.snr_db == snr_db)
            .map(|r| r.pd)
    }

    /// Pd averaged over every Doppler bin in the report at one SNR.
    pub fn mean_pd(&self, detector: DetectorKind, snr_db: f64) -> Option<f64> {
        let pds: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.detector == detector && r.snr_db == snr_db)
            .map(|r| r.pd)
            .collect();
        (!pds.is_empty()).then(|| pds.iter().sum::<f64>() / pds.len() as f64)
    }

    pub fn all_failed(&self) -> bool {
        !self.summaries.is_empty() && self.summaries.iter().all(|s| s.failure.is_some())
    }
}

/// Classical statistic evaluated on whitened vectors.
fn whitened_stat(kind: DetectorKind, wp: &[Complex64], p_form: f64, wz: &[Complex64]) -> Result<f64> {
    let num = inner(wp, wz).norm_sqr();
    match kind {
        DetectorKind::AnmfTyler => {
            let z_form = norm_sqr(wz);
            if !(z_form > 0.0) {
                return Err(Error::UndefinedStatistic("normalized matched filter of a zero cell".into()));
            }
            Ok((num / (p_form * z_form)).min(1.0))
        }
        _ => Ok(num / p_form),
    }
}

struct Classical<'a> {
    kind: DetectorKind,
    true_factor: &'a Cholesky<f64>,
    opts: &'a HarnessOptions,
}

impl Classical<'_> {
    /// Covariance factor for one sample and whether a Tyler run fell short.
    fn factor<'s>(&'s self, sample: &Sample) -> Result<(Cow<'s, Cholesky<f64>>, bool)> {
        match self.kind {
            DetectorKind::MfTrue => Ok((Cow::Borrowed(self.true_factor), false)),
            DetectorKind::AmfScm => {
                let est = scm_loaded(&sample.secondary, self.opts.scm_loading)?;
                Ok((Cow::Owned(est.factor().clone()), false))
            }
            DetectorKind::AnmfTyler => {
                let run = tyler_run(&sample.secondary, &self.opts.tyler)?;
                Ok((Cow::Owned(run.matrix.cholesky()?), !run.converged))
            }
            _ => unreachable!("learned detector routed to the classical scorer"),
        }
    }

    /// Scores of target-free samples; sample `i` is tested against the
    /// steering vector of bin position `i mod n_bins`.
    fn score_h0(&self, samples: &[Sample], steering: &[&CVector]) -> Result<(Vec<f64>, usize)> {
        let out: Vec<(f64, bool)> = samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let (l, short) = self.factor(s)?;
                let wp = l.forward(steering[i % steering.len()].as_slice())?;
                let wz = l.forward(s.cell.as_slice())?;
                Ok((whitened_stat(self.kind, &wp, norm_sqr(&wp), &wz)?, short))
            })
            .collect::<Result<_>>()?;
        Ok((out.iter().map(|o| o.0).collect(), out.iter().filter(|o| o.1).count()))
    }

    /// Scores for every grid point, indexed `[bin][snr][sample]`. One
    /// factorization per test draw serves the whole grid because the cell
    /// is linear in the target: `L⁻¹(z₀ + α p) = L⁻¹z₀ + α L⁻¹p`.
    fn score_grid(&self, test: &TestSplit) -> Result<(Vec<Vec<Vec<f64>>>, usize)> {
        let (n_bins, n_snr) = (test.doppler_bins.len(), test.snr_grid_db.len());
        let m = test.steering(0).len();
        let per_sample: Vec<(Vec<f64>, bool)> = test
            .base()
            .par_iter()
            .map(|s| {
                let (l, short) = self.factor(s)?;
                let w0 = l.forward(s.cell.as_slice())?;
                let mut scores = Vec::with_capacity(n_bins * n_snr);
                let mut wz = vec![Complex64::new(0.0, 0.0); m];
                for b in 0..n_bins {
                    let wp = l.forward(test.steering(b).as_slice())?;
                    let p_form = norm_sqr(&wp);
                    for &snr in &test.snr_grid_db {
                        let alpha = target_amplitude(snr, m, s.phase);
                        for ((o, &a), &b) in wz.iter_mut().zip(&w0).zip(&wp) {
                            *o = a + alpha * b;
                        }
                        scores.push(whitened_stat(self.kind, &wp, p_form, &wz)?);
                    }
                }
                Ok((scores, short))
            })
            .collect::<Result<_>>()?;
        let grid = (0..n_bins)
            .map(|b| {
                (0..n_snr)
                    .map(|k| per_sample.iter().map(|(s, _)| s[b * n_snr + k]).collect())
                    .collect()
            })
            .collect();
        Ok((grid, per_sample.iter().filter(|o| o.1).count()))
    }
}

enum Learned<'a> {
    Svdd(&'a SvddModel<f64>),
    Dsvdd(&'a DsvddModel),
}

impl Learned<'_> {
    fn score_cells(&self, cells: &[CVector]) -> Result<Vec<f64>> {
        match self {
            Learned::Svdd(model) => cells.par_iter().map(|z| model.score(z)).collect(),
            Learned::Dsvdd(model) => model.score_batch(cells),
        }
    }

    fn score_samples(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        let cells: Vec<CVector> = samples.iter().map(|s| s.cell.clone()).collect();
        self.score_cells(&cells)
    }

    fn score_grid(&self, test: &TestSplit) -> Result<Vec<Vec<Vec<f64>>>> {
        (0..test.doppler_bins.len())
            .map(|b| {
                test.snr_grid_db
                    .iter()
                    .map(|&snr| self.score_cells(&test.cells_at(b, snr)))
                    .collect()
            })
            .collect()
    }
}

struct DetectorScores {
    calibration: Vec<f64>,
    verification: Vec<f64>,
    grid: Vec<Vec<Vec<f64>>>,
    tyler_unconverged: usize,
}

fn score_detector(
    kind: DetectorKind,
    scn: &Scenario,
    data: &EvaluationData<'_>,
    models: &Models<'_>,
    true_factor: &Cholesky<f64>,
    opts: &HarnessOptions,
) -> Result<DetectorScores> {
    if data.calibration.is_empty() || data.verification.is_empty() || data.test.n_test() == 0 {
        return Err(Error::EmptyInput("evaluation split"));
    }
    if kind.is_classical() {
        let scorer = Classical {
            kind,
            true_factor,
            opts,
        };
        let steering: Vec<&CVector> = (0..data.test.doppler_bins.len()).map(|b| data.test.steering(b)).collect();
        let (calibration, a) = scorer.score_h0(data.calibration, &steering)?;
        let (verification, b) = scorer.score_h0(data.verification, &steering)?;
        let (grid, c) = scorer.score_grid(data.test)?;
        return Ok(DetectorScores {
            calibration,
            verification,
            grid,
            tyler_unconverged: a + b + c,
        });
    }
    let learned = match kind {
        DetectorKind::Svdd => Learned::Svdd(models.svdd.ok_or_else(|| {
            Error::InvalidParameter("svdd requested but no SVDD model was fitted".into())
        })?),
        _ => Learned::Dsvdd(models.dsvdd.ok_or_else(|| {
            Error::InvalidParameter("dsvdd requested but no Deep SVDD model was trained".into())
        })?),
    };
    let m = scn.m;
    if let Learned::Svdd(model) = &learned {
        crate::linalg::check_dim(m, model.dim())?;
    }
    Ok(DetectorScores {
        calibration: learned.score_samples(data.calibration)?,
        verification: learned.score_samples(data.verification)?,
        grid: learned.score_grid(data.test)?,
        tyler_unconverged: 0,
    })
}

/// Calibrates, verifies and measures Pd for each detector on shared data.
///
/// A detector that fails is reported with NaN rows and its error in the
/// summary; the remaining detectors still run.
pub fn run_experiment(
    scn: &Scenario,
    data: &EvaluationData<'_>,
    detectors: &[DetectorKind],
    models: &Models<'_>,
    opts: &HarnessOptions,
) -> Result<DetectionReport> {
    scn.validate()?;
    let true_factor = scn.total_covariance()?.cholesky()?;
    let test = data.test;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &kind in detectors {
        let outcome = score_detector(kind, scn, data, models, &true_factor, opts).and_then(|scores| {
            let threshold = calibrate_threshold(&scores.calibration, scn.pfa)?;
            let empirical_pfa = verify_pfa(&scores.verification, threshold);
            let pd = scores
                .grid
                .iter()
                .map(|per_snr| per_snr.iter().map(|s| estimate_pd(s, threshold)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            Ok((threshold, empirical_pfa, pd, scores.tyler_unconverged))
        });
        let summary = DetectorSummary {
            detector: kind,
            threshold: f64::NAN,
            empirical_pfa: f64::NAN,
            n_calibration: data.calibration.len(),
            n_verification: data.verification.len(),
            tyler_unconverged: 0,
            failure: None,
        };
        match outcome {
            Ok((threshold, empirical_pfa, pd, tyler_unconverged)) => {
                for (b, &bin) in test.doppler_bins.iter().enumerate() {
                    for (k, &snr_db) in test.snr_grid_db.iter().enumerate() {
                        let e = pd[b][k];
                        rows.push(DetectionRow {
                            detector: kind,
                            clutter_family: scn.clutter_family,
                            doppler_bin: bin,
                            snr_db,
                            pd: e.pd,
                            ci_low: e.ci_low,
                            ci_high: e.ci_high,
                            n_trials: e.n_trials,
                            threshold,
                            empirical_pfa,
                        });
                    }
                }
                summaries.push(DetectorSummary {
                    threshold,
                    empirical_pfa,
                    tyler_unconverged,
                    ..summary
                });
            }
            Err(e) => {
                for &bin in &test.doppler_bins {
                    for &snr_db in &test.snr_grid_db {
                        rows.push(DetectionRow {
                            detector: kind,
                            clutter_family: scn.clutter_family,
                            doppler_bin: bin,
                            snr_db,
                            pd: f64::NAN,
                            ci_low: f64::NAN,
                            ci_high: f64::NAN,
                            n_trials: test.n_test(),
                            threshold: f64::NAN,
                            empirical_pfa: f64::NAN,
                        });
                    }
                }
                summaries.push(DetectorSummary {
                    failure: Some(e.to_string()),
                    ..summary
                });
            }
        }
    }
    Ok(DetectionReport {
        clutter_family: scn.clutter_family,
        rows,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Domain, StreamFactory};
    use crate::sim::SceneGenerator;
    use crate::svdd::SolverOptions;
    use rand::Rng;
    use rand_distr::Exp1;

    #[test]
    fn threshold_order_statistics() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = calibrate_threshold(&scores, 0.01).unwrap();
        assert_eq!(t, 99.0);
        assert_eq!(exceedance_rate(&scores, t), 0.01);
        let constant = vec![2.5; 200];
        let t = calibrate_threshold(&constant, 0.01).unwrap();
        assert_eq!(t, 2.5);
        assert_eq!(exceedance_rate(&constant, t), 0.0);
        assert!(calibrate_threshold(&scores[..99], 0.01).is_err());
        assert!(calibrate_threshold(&[1.0, f64::NAN], 0.5).is_err());
        assert!(calibrate_threshold(&scores, 0.0).is_err());
        assert_eq!(verify_pfa(&scores, f64::INFINITY), 0.0);
    }

    #[test]
    fn exponential_quantile() {
        let mut rng = StreamFactory::new(17).stream(Domain::Oracle, 0, 0);
        let scores: Vec<f64> = (0..5000).map(|_| rng.sample(Exp1)).collect();
        let t = calibrate_threshold(&scores, 0.01).unwrap();
        let expected = 100f64.ln();
        assert!((t - expected).abs() / expected < 0.1, "{t}");
        assert!((expected - 4.6052).abs() < 1e-4);
        assert!((nmf_analytic_threshold(0.01, 16) - 0.2644).abs() < 1e-4);
    }

    #[test]
    fn pd_and_wilson() {
        let above = vec![5.0; 10];
        assert_eq!(estimate_pd(&above, 1.0).unwrap().pd, 1.0);
        assert_eq!(estimate_pd(&above, 5.0).unwrap().pd, 0.0);
        let mut scores = vec![0.0; 5000];
        scores[..50].iter_mut().for_each(|s| *s = 2.0);
        let e = estimate_pd(&scores, 1.0).unwrap();
        assert_eq!(e.pd, 0.01);
        assert!(e.ci_low > 0.007 && e.ci_high < 0.014, "{e:?}");
        // direct evaluation of the Wilson formula for 50/5000
        assert!((e.ci_low - 0.0075938).abs() < 1e-6 && (e.ci_high - 0.0131586).abs() < 1e-6, "{e:?}");
        let (lo, hi) = wilson_interval(0, 20);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.2);
        assert!(estimate_pd(&[], 1.0).is_err());
    }

    #[test]
    fn detector_tags_round_trip() {
        for k in DetectorKind::ALL {
            assert_eq!(k.as_str().parse::<DetectorKind>().unwrap(), k);
        }
        assert!("glrt".parse::<DetectorKind>().is_err());
    }

    fn small_scenario() -> Scenario {
        Scenario {
            m: 8,
            k_secondary: 16,
            doppler_bins: vec![0, 4],
            snr_grid_db: vec![0.0, 20.0],
            n_train: 200,
            n_cal: 400,
            n_verify: 400,
            n_test: 100,
            pfa: 0.05,
            ..Scenario::default()
        }
    }

    #[test]
    fn experiment_rows_and_determinism() {
        let scn = small_scenario();
        let splits = SceneGenerator::new(&scn).unwrap().make_splits().unwrap();
        let train: Vec<_> = splits.train.iter().map(|s| s.cell.clone()).collect();
        let svdd = SvddModel::fit(&train, 0.05, &SolverOptions::default()).unwrap().model;
        let models = Models {
            svdd: Some(&svdd),
            dsvdd: None,
        };
        let data = EvaluationData {
            calibration: &splits.calibration,
            verification: &splits.verification,
            test: &splits.test,
        };
        let detectors = DetectorKind::ALL;
        let run = || run_experiment(&scn, &data, &detectors, &models, &HarnessOptions::default()).unwrap();
        let report = run();
        assert_eq!(report.rows.len(), 5 * 2 * 2);
        // the missing Deep SVDD model is flagged, the rest succeed
        let dsvdd = report.summary(DetectorKind::Dsvdd).unwrap();
        assert!(dsvdd.failure.is_some());
        assert!(report
            .rows
            .iter()
            .filter(|r| r.detector == DetectorKind::Dsvdd)
            .all(|r| r.pd.is_nan()));
        for k in [DetectorKind::MfTrue, DetectorKind::AmfScm, DetectorKind::AnmfTyler, DetectorKind::Svdd] {
            let s = report.summary(k).unwrap();
            assert!(s.failure.is_none(), "{k}: {:?}", s.failure);
            assert!(s.threshold.is_finite());
        }
        for r in report.rows.iter().filter(|r| r.detector != DetectorKind::Dsvdd) {
            assert!(r.ci_low <= r.pd && r.pd <= r.ci_high);
            assert_eq!(r.n_trials, 100);
        }
        assert_eq!(report.pd_at(DetectorKind::MfTrue, 4, 20.0), Some(1.0));
        assert!(!report.all_failed());

        let mut a = Vec::new();
        let mut b = Vec::new();
        report.write_csv(&mut a).unwrap();
        run().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(
            "detector,clutter_family,doppler_bin,snr_db,pd,ci_low,ci_high,n_trials,threshold,empirical_pfa\n"
        ));
        assert_eq!(text.lines().count(), 21);
        assert_eq!(report.file_name(), "report_gaussian.csv");
    }

    #[test]
    fn grid_scores_match_direct_statistics() {
        use crate::classical::{mf_statistic, nmf_statistic, scm, CovarianceEstimate};
        let scn = small_scenario();
        let splits = SceneGenerator::new(&scn).unwrap().make_splits().unwrap();
        let true_factor = scn.total_covariance().unwrap().cholesky().unwrap();
        let opts = HarnessOptions::default();
        for kind in [DetectorKind::MfTrue, DetectorKind::AmfScm, DetectorKind::AnmfTyler] {
            let scorer = Classical {
                kind,
                true_factor: &true_factor,
                opts: &opts,
            };
            let (grid, _) = scorer.score_grid(&splits.test).unwrap();
            let samples = splits.test.samples_at(1, 20.0).unwrap();
            let p = splits.test.steering(1);
            for (i, s) in samples.iter().enumerate().take(10) {
                let direct = match kind {
                    DetectorKind::MfTrue => {
                        let est = CovarianceEstimate::known(scn.total_covariance().unwrap()).unwrap();
                        mf_statistic(&s.cell, &est, p).unwrap()
                    }
                    DetectorKind::AmfScm => mf_statistic(&s.cell, &scm(&s.secondary).unwrap(), p).unwrap(),
                    _ => {
                        let est = crate::classical::tyler(&s.secondary, 1e-8, 100).unwrap();
                        nmf_statistic(&s.cell, &est, p).unwrap()
                    }
                };
                let g = grid[1][1][i];
                assert!((g - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{kind}: {g} vs {direct}");
            }
        }
    }
}
