//! The four subcommands. Files in the output directory are the only
//! interchange between them:
//!
//! ```text
//! <out>/manifest.json
//! <out>/<family>/{train,calibration,verification,test}.bin   simulate
//! <out>/<family>/svdd.model, dsvdd.model, dsvdd_epochs.csv   fit
//! <out>/report_<family>.csv, pd_curves_<family>.svg,
//!       pd_map_<family>_<detector>.svg                       evaluate
//! <out>/verify.txt                                           verify
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use svdd_cfar::cfar::{run_experiment, DetectionReport, DetectorKind, EvaluationData, Models};
use svdd_cfar::classical::TylerMutation;
use svdd_cfar::deep;
use svdd_cfar::sim::io::{load_dataset, save_split, save_test_split, Dataset, SplitKind};
use svdd_cfar::sim::{ClutterFamily, SceneGenerator};
use svdd_cfar::svdd::{self, SvddModel};
use svdd_cfar::verify::{format_table, run_checks, CheckResult, VerifyOptions};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;
use crate::plot;

pub const SVDD_MODEL_FILE: &str = "svdd.model";
pub const DSVDD_MODEL_FILE: &str = "dsvdd.model";
pub const EPOCH_LOG_FILE: &str = "dsvdd_epochs.csv";
pub const VERIFY_FILE: &str = "verify.txt";

fn rel(family: ClutterFamily, file: &str) -> String {
    format!("{}/{file}", family.as_str())
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Loads a split, checking that it belongs to `family` and to the current
/// configuration.
fn load_split(out: &Path, family: ClutterFamily, kind: SplitKind, cfg: &RunConfig) -> CliResult<Dataset> {
    let path = out.join(family.as_str()).join(kind.file_name());
    if !path.exists() {
        return Err(CliError::Runtime(format!(
            "missing {} split: expected {}; run `svdd-cfar simulate` with this configuration and --out {} first",
            family,
            path.display(),
            out.display()
        )));
    }
    let data = load_dataset(&path)?;
    let h = &data.header;
    let s = &cfg.scenario;
    let expected_count = match kind {
        SplitKind::Train => s.n_train,
        SplitKind::Calibration => s.n_cal,
        SplitKind::Verification => s.n_verify,
        SplitKind::Test => s.n_test,
    };
    let grid_ok = match (&data.grid, kind) {
        (Some((snr, bins)), SplitKind::Test) => snr == &s.snr_grid_db && bins == &s.doppler_bins,
        (None, SplitKind::Test) => false,
        _ => true,
    };
    if h.kind != kind
        || h.family != family
        || h.m != s.m
        || h.master_seed != cfg.seed
        || data.samples.len() != expected_count
        || !grid_ok
    {
        return Err(CliError::Validation(format!(
            "{} was generated with a different configuration; rerun `svdd-cfar simulate`",
            path.display()
        )));
    }
    Ok(data)
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    create_dir(out)?;
    let mut manifest = Manifest::open(out, cfg)?;
    for &family in &cfg.families {
        let start = Instant::now();
        let scn = cfg.scenario(family);
        let splits = SceneGenerator::new(&scn)?.make_splits()?;
        let dir = out.join(family.as_str());
        create_dir(&dir)?;
        for (kind, samples) in [
            (SplitKind::Train, &splits.train),
            (SplitKind::Calibration, &splits.calibration),
            (SplitKind::Verification, &splits.verification),
        ] {
            save_split(&dir.join(kind.file_name()), kind, family, cfg.seed, samples)?;
            manifest.record(out, &rel(family, kind.file_name()))?;
        }
        save_test_split(&dir.join(SplitKind::Test.file_name()), family, cfg.seed, &splits.test)?;
        manifest.record(out, &rel(family, SplitKind::Test.file_name()))?;
        eprintln!("simulate: {family} splits written to {} ({:.1?})", dir.display(), start.elapsed());
    }
    manifest.save(out)?;
    Ok(manifest)
}

pub fn fit(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    create_dir(out)?;
    let mut manifest = Manifest::open(out, cfg)?;
    let (want_svdd, want_dsvdd) = (cfg.wants(DetectorKind::Svdd), cfg.wants(DetectorKind::Dsvdd));
    if !want_svdd && !want_dsvdd {
        eprintln!("fit: no learned detector selected; nothing to fit");
    }
    for &family in &cfg.families {
        if !want_svdd && !want_dsvdd {
            break;
        }
        let train = load_split(out, family, SplitKind::Train, cfg)?;
        let cells: Vec<_> = train.samples.into_iter().map(|s| s.cell).collect();
        let dir = out.join(family.as_str());
        if want_svdd {
            let start = Instant::now();
            let fitted = SvddModel::fit(&cells, cfg.svdd.nu, &cfg.solver_options())
                .map_err(|e| CliError::Runtime(format!("{family}: SVDD fit failed: {e}")))?;
            let radius = fitted
                .model
                .radius_sqr()
                .map(|r| format!("{r:.6}"))
                .unwrap_or_else(|_| "unavailable".into());
            svdd::io::save_model(&dir.join(SVDD_MODEL_FILE), &fitted.model)?;
            manifest.record(out, &rel(family, SVDD_MODEL_FILE))?;
            eprintln!(
                "fit: {family} SVDD with {} support vectors, R² {radius}, {} pair updates ({:.1?})",
                fitted.model.support_points().len(),
                fitted.solution.pair_updates,
                start.elapsed()
            );
        }
        if want_dsvdd {
            let start = Instant::now();
            let model = deep::train(&cfg.network_spec(), &cells, &cfg.train_config())
                .map_err(|e| CliError::Runtime(format!("{family}: Deep SVDD training failed: {e}")))?;
            deep::io::save_model(&dir.join(DSVDD_MODEL_FILE), &model)?;
            write_file(&dir.join(EPOCH_LOG_FILE), |w| {
                deep::io::write_epoch_log(w, model.log()).map_err(std::io::Error::other)
            })?;
            manifest.record(out, &rel(family, DSVDD_MODEL_FILE))?;
            manifest.record(out, &rel(family, EPOCH_LOG_FILE))?;
            let log = model.log();
            eprintln!(
                "fit: {family} Deep SVDD, loss {:.4} -> {:.4} over {} epochs ({:.1?})",
                log.first().map_or(f64::NAN, |e| e.mean_loss),
                log.last().map_or(f64::NAN, |e| e.mean_loss),
                log.len(),
                start.elapsed()
            );
        }
    }
    manifest.save(out)?;
    Ok(manifest)
}

fn load_optional<T>(path: PathBuf, wanted: bool, load: impl Fn(&Path) -> svdd_cfar::error::Result<T>) -> CliResult<Option<T>> {
    if !wanted {
        return Ok(None);
    }
    if !path.exists() {
        eprintln!("evaluate: warning: {} not found; run `svdd-cfar fit` first", path.display());
        return Ok(None);
    }
    Ok(Some(load(&path)?))
}

pub fn evaluate(cfg: &RunConfig, out: &Path) -> CliResult<(Manifest, Vec<DetectionReport>)> {
    create_dir(out)?;
    let mut manifest = Manifest::open(out, cfg)?;
    let mut reports = Vec::new();
    for &family in &cfg.families {
        let start = Instant::now();
        let scn = cfg.scenario(family);
        let calibration = load_split(out, family, SplitKind::Calibration, cfg)?.samples;
        let verification = load_split(out, family, SplitKind::Verification, cfg)?.samples;
        let test = load_split(out, family, SplitKind::Test, cfg)?.into_test_split()?;
        let dir = out.join(family.as_str());
        let svdd_model = load_optional(dir.join(SVDD_MODEL_FILE), cfg.wants(DetectorKind::Svdd), svdd::io::load_model)?;
        let dsvdd_model = load_optional(dir.join(DSVDD_MODEL_FILE), cfg.wants(DetectorKind::Dsvdd), deep::io::load_model)?;
        let models = Models {
            svdd: svdd_model.as_ref(),
            dsvdd: dsvdd_model.as_ref(),
        };
        let data = EvaluationData {
            calibration: &calibration,
            verification: &verification,
            test: &test,
        };
        let report = run_experiment(&scn, &data, &cfg.detectors, &models, &cfg.harness_options())?;

        let name = report.file_name();
        write_file(&out.join(&name), |w| report.write_csv(w).map_err(std::io::Error::other))?;
        manifest.record(out, &name)?;
        if cfg.plot {
            let curves = format!("pd_curves_{family}.svg");
            fs::write(out.join(&curves), plot::pd_curves_svg(&report)).map_err(|e| CliError::io(&out.join(&curves), e))?;
            manifest.record(out, &curves)?;
            for &detector in &cfg.detectors {
                let map = format!("pd_map_{family}_{detector}.svg");
                fs::write(out.join(&map), plot::pd_map_svg(&report, detector)).map_err(|e| CliError::io(&out.join(&map), e))?;
                manifest.record(out, &map)?;
            }
        }
        eprintln!("evaluate: {family} ({:.1?})", start.elapsed());
        for s in &report.summaries {
            match &s.failure {
                None => eprintln!(
                    "  {:<11} threshold {:.6}  empirical pfa {:.4}{}",
                    s.detector,
                    s.threshold,
                    s.empirical_pfa,
                    if s.tyler_unconverged > 0 {
                        format!("  ({} Tyler runs hit the iteration cap)", s.tyler_unconverged)
                    } else {
                        String::new()
                    }
                ),
                Some(msg) => eprintln!("  {:<11} FAILED: {msg}", s.detector),
            }
        }
        reports.push(report);
    }
    manifest.save(out)?;
    if reports.iter().all(|r| r.all_failed()) {
        return Err(CliError::Runtime("every detector failed; see the report rows".into()));
    }
    Ok((manifest, reports))
}

pub fn verify(seed: u64, mutation: Option<TylerMutation>, out: &Path) -> CliResult<Vec<CheckResult>> {
    create_dir(out)?;
    let results = run_checks(&VerifyOptions {
        seed,
        tyler_mutation: mutation,
    })?;
    let table = format_table(&results);
    print!("{table}");
    let path = out.join(VERIFY_FILE);
    fs::write(&path, &table).map_err(|e| CliError::io(&path, e))?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::Runtime(format!("failed checks: {}", failed.join(", "))));
    }
    Ok(results)
}
