//! Independent oracles: analytic null distributions of the matched
//! filters, Tyler estimator properties, a projected-gradient reference
//! solver for the SVDD dual and finite-difference gradient checks.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cfar::{calibrate_threshold, exceedance_rate, mf_analytic_threshold, nmf_analytic_threshold};
use crate::classical::{tyler_run, TylerMutation, TylerOptions, WhitenedSteering};
use crate::deep::gradcheck::{check_layers, FD_TOLERANCE};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::rng::{Domain, Stream, StreamFactory};
use crate::sim::{draw_complex_gaussian, steering_vector, ClutterFamily, SceneGenerator, Scenario};
use crate::svdd::solver::{solve_dual, Gram, SolverOptions};
use crate::svdd::{gram_matrix, kernel_width, SvddModel};
use crate::CVector;

/// Draws for the Kolmogorov-Smirnov tests of the null distributions.
pub const NULL_DRAWS: usize = 100_000;
pub const KS_TOLERANCE: f64 = 0.01;
/// Calibration-set size for the threshold cross-checks.
pub const THRESHOLD_DRAWS: usize = 5000;
/// Allowed relative gap between calibrated and analytic thresholds.
pub const THRESHOLD_REL_TOLERANCE: f64 = 0.10;
/// Allowed gap between the empirical and nominal exceedance at the
/// analytic NMF threshold (3σ at p = 0.01 over `NULL_DRAWS`).
pub const TAIL_TOLERANCE: f64 = 0.003;

pub const TYLER_INVARIANCE_TOLERANCE: f64 = 1e-9;
pub const TYLER_TRACE_TOLERANCE: f64 = 1e-9;
pub const TYLER_TRIALS: usize = 1000;
/// Required share of Tyler runs meeting the tolerance within the cap.
pub const TYLER_CONVERGED_SHARE: f64 = 0.99;

pub const QP_INSTANCES: usize = 50;
pub const QP_OBJECTIVE_TOLERANCE: f64 = 1e-6;
pub const QP_KKT_TOLERANCE: f64 = 1e-5;
pub const QP_SUM_TOLERANCE: f64 = 1e-9;
/// Iteration budget of the projected-gradient reference.
pub const PG_MAX_ITER: usize = 1_000_000;

pub const GRADCHECK_CONFIGS: u64 = 20;

const TAG_MF: u64 = 1;
const TAG_NMF: u64 = 2;
const TAG_TYLER: u64 = 3;
const TAG_QP: u64 = 4;
const TAG_CAL: u64 = 5;

/// One row of the verification table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Human-readable pass condition, e.g. `< 1e-9`.
    pub tolerance: String,
    pub value: f64,
    pub passed: bool,
}

impl CheckResult {
    fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            tolerance: format!("< {bound:e}"),
            value,
            passed: value < bound,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            tolerance: format!(">= {bound}"),
            value,
            passed: value >= bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Fault injected into every Tyler run of the suite.
    pub tyler_mutation: Option<TylerMutation>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 2025,
            tyler_mutation: None,
        }
    }
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    })
}

pub fn exp1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-x).exp()
    }
}

/// CDF of Beta(1, b): `1 − (1 − x)^b` on `[0, 1]`.
pub fn beta1_cdf(x: f64, b: f64) -> f64 {
    1.0 - (1.0 - x.clamp(0.0, 1.0)).powf(b)
}

/// Matched-filter statistics with the true covariance on target-free
/// Gaussian cells; draw `i` is tested at Doppler bin `i mod m`.
pub fn true_covariance_null(scn: &Scenario, n: usize, normalized: bool, rng: &mut Stream) -> Result<Vec<f64>> {
    let sigma = scn.total_covariance()?;
    let factor = sigma.cholesky()?;
    let filters = (0..scn.m)
        .map(|d| WhitenedSteering::new(factor.clone(), steering_vector(d, scn.m)?.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let cells = draw_complex_gaussian(&sigma, n, rng)?;
    cells
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let f = &filters[i % scn.m];
            if normalized {
                f.nmf(z.as_slice())
            } else {
                f.mf(z.as_slice())
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TylerSummary {
    /// Worst relative Frobenius change under per-column rescaling.
    pub max_invariance_err: f64,
    /// Worst `|tr M − m| / m` over every run.
    pub max_trace_err: f64,
    /// Share of runs whose residual fell below the tolerance within the cap.
    pub converged_share: f64,
}

/// Runs the Tyler estimator on the secondary blocks of `trials` seeded
/// target-free samples of `scn` and on a positively rescaled copy of each.
pub fn tyler_trials(scn: &Scenario, trials: usize, opts: &TylerOptions, seed: u64) -> Result<TylerSummary> {
    let factory = StreamFactory::new(seed);
    let generator = SceneGenerator::new(scn)?;
    let per_trial: Vec<(f64, f64, bool)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = factory.stream(Domain::Oracle, TAG_TYLER, i as u64);
            let block = generator.draw_base(scn.k_secondary, &mut rng).secondary;
            let scaled_cols: Vec<Vec<Complex64>> = block
                .columns()
                .map(|c| {
                    let s = 10f64.powf(rng.gen_range(-2.0..2.0));
                    c.iter().map(|v| v * s).collect()
                })
                .collect();
            let scaled = ComplexMatrix::from_columns(scn.m, &scaled_cols)?;
            let a = tyler_run(&block, opts)?;
            let b = tyler_run(&scaled, opts)?;
            let inv = a.matrix.frobenius_distance(&b.matrix)? / a.matrix.frobenius_norm();
            let m = scn.m as f64;
            let trace = ((a.matrix.trace() - m).abs()).max((b.matrix.trace() - m).abs()) / m;
            Ok((inv, trace, a.converged))
        })
        .collect::<Result<_>>()?;
    Ok(TylerSummary {
        max_invariance_err: per_trial.iter().map(|t| t.0).fold(0.0, f64::max),
        max_trace_err: per_trial.iter().map(|t| t.1).fold(0.0, f64::max),
        converged_share: per_trial.iter().filter(|t| t.2).count() as f64 / trials as f64,
    })
}

/// Euclidean projection onto `{x : 0 ≤ x_i ≤ upper, Σ x = 1}`.
///
/// The sum of `clamp(y_i − τ, 0, upper)` is piecewise linear and
/// nonincreasing in `τ` with kinks at `y_i` and `y_i − upper`; sweeping the
/// kinks locates the segment holding the root, which is then solved exactly.
pub fn project_capped_simplex(y: &[f64], upper: f64) -> Result<Vec<f64>> {
    let n = y.len();
    if n == 0 || !(upper > 0.0) || upper * (n as f64) < 1.0 - 1e-12 {
        return Err(Error::Infeasible(format!("capped simplex with n = {n}, upper = {upper}")));
    }
    let total = |tau: f64| -> f64 { y.iter().map(|&v| (v - tau).clamp(0.0, upper)).sum() };
    let mut kinks: Vec<f64> = y.iter().flat_map(|&v| [v, v - upper]).collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    // total(τ) is n·upper below the smallest kink and 0 above the largest
    let mut hi = kinks.partition_point(|&t| total(t) > 1.0);
    hi = hi.min(kinks.len() - 1);
    let tau = if hi == 0 {
        kinks[0]
    } else {
        let (a, b) = (kinks[hi - 1], kinks[hi]);
        let (fa, fb) = (total(a), total(b));
        if fa == fb {
            a
        } else {
            a + (fa - 1.0) * (b - a) / (fa - fb)
        }
    };
    Ok(y.iter().map(|&v| (v - tau).clamp(0.0, upper)).collect())
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub alphas: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Maximizes the SVDD dual by projected gradient ascent with step `1/L`,
/// `L = 2 max_i Σ_j |K_ij|` (a Gershgorin bound on the gradient's Lipschitz
/// constant), from the uniform point, until the iterate stops moving or
/// `max_iter` steps have run.
pub fn reference_dual(gram: &Gram<f64>, nu: f64, max_iter: usize) -> Result<ReferenceSolution> {
    let n = gram.n();
    let upper = (1.0 / (nu * n as f64)).min(1.0);
    let lipschitz = 2.0 * (0..n).map(|i| gram.row(i).iter().map(|k| k.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let mut alpha = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let ka: f64 = gram.row(i).iter().zip(&alpha).map(|(k, a)| k * a).sum();
                alpha[i] + step * (gram.get(i, i) - 2.0 * ka)
            })
            .collect();
        let next = project_capped_simplex(&y, upper)?;
        let moved = next.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        alpha = next;
        if moved < 1e-16 {
            break;
        }
    }
    Ok(ReferenceSolution {
        objective: gram.dual_objective(&alpha),
        alphas: alpha,
        iterations,
    })
}

/// Largest KKT violation of a feasible dual point: the gap between the
/// best gradient entry that could still rise and the worst that could fall.
pub fn kkt_residual(gram: &Gram<f64>, alphas: &[f64], upper: f64) -> f64 {
    let n = gram.n();
    let grad: Vec<f64> = (0..n)
        .map(|i| gram.get(i, i) - 2.0 * gram.row(i).iter().zip(alphas).map(|(k, a)| k * a).sum::<f64>())
        .collect();
    let up = (0..n).filter(|&i| alphas[i] < upper).map(|i| grad[i]).fold(f64::NEG_INFINITY, f64::max);
    let down = (0..n).filter(|&i| alphas[i] > 0.0).map(|i| grad[i]).fold(f64::INFINITY, f64::min);
    (up - down).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSummary {
    pub max_objective_gap: f64,
    pub max_kkt: f64,
    pub max_sum_err: f64,
}

/// Compares the SMO solver with [`reference_dual`] on seeded instances of
/// 10 to 20 points in `C^4`, alternating ν between 0.1 and 0.5.
pub fn qp_oracle(instances: usize, seed: u64) -> Result<QpSummary> {
    let factory = StreamFactory::new(seed);
    let rows: Vec<(f64, f64, f64)> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = factory.stream(Domain::Oracle, TAG_QP, i as u64);
            let n = rng.gen_range(10..=20);
            let nu = if i % 2 == 0 { 0.1 } else { 0.5 };
            let points: Vec<CVector> = (0..n)
                .map(|_| {
                    let v: Vec<Complex64> = (0..4)
                        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                        .collect();
                    CVector::new(v)
                })
                .collect::<Result<_>>()?;
            let gram = gram_matrix(&points, kernel_width(&points)?)?;
            let smo = solve_dual(&gram, nu, &SolverOptions::default())?;
            let reference = reference_dual(&gram, nu, PG_MAX_ITER)?;
            let sum: f64 = smo.alphas.iter().sum();
            Ok((
                (smo.objective - reference.objective).abs(),
                kkt_residual(&gram, &smo.alphas, smo.upper),
                (sum - 1.0).abs(),
            ))
        })
        .collect::<Result<_>>()?;
    Ok(QpSummary {
        max_objective_gap: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        max_kkt: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        max_sum_err: rows.iter().map(|r| r.2).fold(0.0, f64::max),
    })
}

/// Training points whose score exceeds `R²` by more than `slack`.
pub fn margin_error_fraction(model: &SvddModel<f64>, train: &[CVector], slack: f64) -> Result<f64> {
    let r2 = model.radius_sqr()?;
    let scores: Vec<f64> = train.par_iter().map(|z| model.score(z)).collect::<Result<_>>()?;
    Ok(scores.iter().filter(|&&s| s > r2 + slack).count() as f64 / train.len() as f64)
}

/// Worst finite-difference relative error per layer over `configs` shapes.
pub fn gradient_table(configs: u64) -> Result<Vec<(&'static str, f64)>> {
    let runs = (0..configs).map(check_layers).collect::<Result<Vec<_>>>()?;
    let mut table: Vec<(&'static str, f64)> = Vec::new();
    for check in runs.into_iter().flatten() {
        match table.iter_mut().find(|(l, _)| *l == check.layer) {
            Some(entry) => entry.1 = entry.1.max(check.max_rel_err),
            None => table.push((check.layer, check.max_rel_err)),
        }
    }
    Ok(table)
}

/// Compound-Gaussian secondary data with an independent texture for every
/// vector, the hardest case for the fixed point.
pub fn tyler_scenario() -> Scenario {
    Scenario {
        texture_per_vector: true,
        ..Scenario::default().with_family(ClutterFamily::CompoundGaussian)
    }
}

/// The whole oracle suite with the default Gaussian and compound-Gaussian
/// scenarios.
pub fn run_checks(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let scn = Scenario::default();
    let factory = StreamFactory::new(opts.seed);
    let b = (scn.m - 1) as f64;
    let mut out = Vec::new();

    let mf = true_covariance_null(&scn, NULL_DRAWS, false, &mut factory.stream(Domain::Oracle, TAG_MF, 0))?;
    out.push(CheckResult::below("mf_null_ks_exp1", ks_distance(&mf, exp1_cdf), KS_TOLERANCE));
    let nmf = true_covariance_null(&scn, NULL_DRAWS, true, &mut factory.stream(Domain::Oracle, TAG_NMF, 0))?;
    out.push(CheckResult::below("nmf_null_ks_beta", ks_distance(&nmf, |x| beta1_cdf(x, b)), KS_TOLERANCE));
    let tail = exceedance_rate(&nmf, nmf_analytic_threshold(scn.pfa, scn.m));
    out.push(CheckResult::below("nmf_null_tail_at_analytic_threshold", (tail - scn.pfa).abs(), TAIL_TOLERANCE));

    let cal_mf = true_covariance_null(&scn, THRESHOLD_DRAWS, false, &mut factory.stream(Domain::Oracle, TAG_CAL, 0))?;
    let t = calibrate_threshold(&cal_mf, scn.pfa)?;
    let analytic = mf_analytic_threshold(scn.pfa);
    out.push(CheckResult::below(
        "mf_threshold_vs_ln_inv_pfa",
        (t - analytic).abs() / analytic,
        THRESHOLD_REL_TOLERANCE,
    ));
    let cal_nmf = true_covariance_null(&scn, THRESHOLD_DRAWS, true, &mut factory.stream(Domain::Oracle, TAG_CAL, 1))?;
    let t = calibrate_threshold(&cal_nmf, scn.pfa)?;
    let analytic = nmf_analytic_threshold(scn.pfa, scn.m);
    out.push(CheckResult::below(
        "nmf_threshold_vs_beta_quantile",
        (t - analytic).abs() / analytic,
        THRESHOLD_REL_TOLERANCE,
    ));

    let compound = tyler_scenario();
    let tyler_opts = TylerOptions {
        mutation: opts.tyler_mutation,
        ..TylerOptions::default()
    };
    let tyler = tyler_trials(&compound, TYLER_TRIALS, &tyler_opts, opts.seed)?;
    out.push(CheckResult::below("tyler_scale_invariance", tyler.max_invariance_err, TYLER_INVARIANCE_TOLERANCE));
    out.push(CheckResult::at_least("tyler_converged_share", tyler.converged_share, TYLER_CONVERGED_SHARE));
    out.push(CheckResult::below("tyler_trace", tyler.max_trace_err, TYLER_TRACE_TOLERANCE));

    let qp = qp_oracle(QP_INSTANCES, opts.seed)?;
    out.push(CheckResult::below("svdd_objective_vs_reference", qp.max_objective_gap, QP_OBJECTIVE_TOLERANCE));
    out.push(CheckResult::below("svdd_kkt_residual", qp.max_kkt, QP_KKT_TOLERANCE));
    out.push(CheckResult::below("svdd_alpha_sum", qp.max_sum_err, QP_SUM_TOLERANCE));

    for (layer, err) in gradient_table(GRADCHECK_CONFIGS)? {
        out.push(CheckResult::below(format!("gradcheck_{layer}"), err, FD_TOLERANCE));
    }
    Ok(out)
}

/// Fixed-width pass/fail table.
pub fn format_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    let mut s = format!("{:<width$}  {:>12}  {:<10}  result\n", "check", "value", "tolerance");
    for r in results {
        let _ = writeln!(
            s,
            "{:<width$}  {:>12.4e}  {:<10}  {}",
            r.name,
            r.value,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capped_simplex_projection_cases() {
        let x = project_capped_simplex(&[0.2, 0.3, 0.5], 1.0).unwrap();
        for (a, b) in x.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        // cap binds on the large entry
        let x = project_capped_simplex(&[5.0, 0.0, 0.0], 0.5).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.25).abs() < 1e-15 && (x[2] - 0.25).abs() < 1e-15);
        // floor binds on the small entry
        let x = project_capped_simplex(&[1.0, 1.0, -10.0], 1.0).unwrap();
        assert_eq!(x, vec![0.5, 0.5, 0.0]);
        // upper = 1/n forces the uniform point
        let x = project_capped_simplex(&[3.0, -1.0, 0.2, 7.0], 0.25).unwrap();
        assert!(x.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!(project_capped_simplex(&[1.0, 2.0], 0.4).is_err());
    }

    #[test]
    fn projection_is_the_closest_feasible_point() {
        let mut rng = StreamFactory::new(4).stream(Domain::Oracle, 99, 0);
        for _ in 0..50 {
            let n = rng.gen_range(2..10);
            let upper = rng.gen_range(1.0 / n as f64..1.0);
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = project_capped_simplex(&y, upper).unwrap();
            assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(x.iter().all(|&v| (0.0..=upper).contains(&v)));
            // variational inequality: (y − x)·(v − x) ≤ 0 for feasible v
            for _ in 0..20 {
                let v = project_capped_simplex(&(0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>(), upper).unwrap();
                let ip: f64 = (0..n).map(|i| (y[i] - x[i]) * (v[i] - x[i])).sum();
                assert!(ip <= 1e-12, "{ip}");
            }
        }
    }

    #[test]
    fn ks_and_cdfs() {
        assert_eq!(ks_distance(&[0.5], |x| x), 0.5);
        assert!((exp1_cdf(100f64.ln()) - 0.99).abs() < 1e-12);
        assert!((beta1_cdf(nmf_analytic_threshold(0.01, 16), 15.0) - 0.99).abs() < 1e-12);
        let uniform: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!((ks_distance(&uniform, |x| x) - 0.0005).abs() < 1e-12);
    }

    #[test]
    fn reference_solver_on_two_points() {
        // K = [[1, k], [k, 1]]: the optimum splits the mass evenly
        let k = 0.3;
        let gram = Gram::from_row_major(2, vec![1.0, k, k, 1.0]).unwrap();
        let r = reference_dual(&gram, 0.5, 10_000).unwrap();
        assert!((r.alphas[0] - 0.5).abs() < 1e-12);
        assert!((r.objective - (1.0 - 0.5 * (1.0 + k))).abs() < 1e-12);
        assert!(kkt_residual(&gram, &r.alphas, 1.0) < 1e-12);
        assert!(kkt_residual(&gram, &[1.0, 0.0], 1.0) > 0.1);
    }

    #[test]
    fn smo_agrees_with_reference_on_a_few_instances() {
        let s = qp_oracle(6, 11).unwrap();
        assert!(s.max_objective_gap < QP_OBJECTIVE_TOLERANCE, "{s:?}");
        assert!(s.max_kkt < QP_KKT_TOLERANCE);
        assert!(s.max_sum_err < QP_SUM_TOLERANCE);
    }

    #[test]
    fn tyler_mutation_is_caught() {
        let scn = tyler_scenario();
        let clean = tyler_trials(&scn, 20, &TylerOptions::default(), 3).unwrap();
        assert!(clean.max_invariance_err < TYLER_INVARIANCE_TOLERANCE, "{clean:?}");
        assert!(clean.max_trace_err < TYLER_TRACE_TOLERANCE);
        let broken = TylerOptions {
            mutation: Some(TylerMutation::DenominatorOffset(1.0)),
            ..TylerOptions::default()
        };
        let bad = tyler_trials(&scn, 20, &broken, 3).unwrap();
        assert!(bad.max_invariance_err > 1e-3, "{bad:?}");
    }

    #[test]
    fn table_lists_tolerances() {
        let rows = vec![CheckResult::below("a", 0.5, 1.0), CheckResult::at_least("bb", 0.5, 0.99)];
        let t = format_table(&rows);
        assert!(t.contains("PASS") && t.contains("FAIL") && t.contains("< 1e0") && t.contains(">= 0.99"));
        assert_eq!(t.lines().count(), 3);
    }
}
