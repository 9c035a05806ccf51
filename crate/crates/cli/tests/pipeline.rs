use std::fs;
use std::path::Path;
use std::process::Command;

use svdd_cfar_cli::manifest::MANIFEST_FILE;
use svdd_cfar_cli::run;

/// Dotted keys for a small grid and network; top-level keys must come
/// first in a TOML document, so callers prepend theirs.
const SMALL: &str = r#"
scenario.snr_grid_db = [0.0, 10.0, 20.0]
scenario.doppler_bins = [0, 8]
scenario.n_train = 300
scenario.n_cal = 200
scenario.n_verify = 200
scenario.n_test = 100
svdd.nu = 0.05
network.channels = [4, 8, 8]
network.embed_dim = 8
training.epochs = 3
training.milestones = [1, 2]
"#;

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("svdd-cfar").chain(args.iter().copied()))
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_fit_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", &format!("seed = 7\n{SMALL}"));
    let out = tmp.path().join("out");
    assert_eq!(cli(&["simulate", "--config", &cfg, "--out", path(&out)]), 0);
    let first_manifest = fs::read(out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(cli(&["simulate", "--config", &cfg, "--out", path(&out)]), 0);
    assert_eq!(fs::read(out.join(MANIFEST_FILE)).unwrap(), first_manifest);

    assert_eq!(cli(&["fit", "--config", &cfg, "--out", path(&out)]), 0);
    let epochs = fs::read_to_string(out.join("gaussian/dsvdd_epochs.csv")).unwrap();
    assert_eq!(epochs.lines().count(), 1 + 3);
    assert!(epochs.starts_with("epoch,mean_loss,lr\n"));

    let manifest = out.join(MANIFEST_FILE);
    assert_eq!(cli(&["evaluate", "--config", path(&manifest), "--out", path(&out)]), 0);
    for family in ["gaussian", "compound_gaussian"] {
        let report = fs::read_to_string(out.join(format!("report_{family}.csv"))).unwrap();
        // 5 detectors × 2 bins × 3 SNR values
        assert_eq!(report.lines().count(), 1 + 30);
        let curves = fs::read_to_string(out.join(format!("pd_curves_{family}.svg"))).unwrap();
        assert_eq!(curves.matches(r#"class="series""#).count(), 5);
        assert!(out.join(format!("pd_map_{family}_dsvdd.svg")).exists());
    }
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("report_gaussian.csv") && text.contains("gaussian/train.bin"));
}

#[test]
fn svdd_only_fit_writes_only_the_svdd_model() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("seed = 7\nfamilies = [\"gaussian\"]\ndetectors = [\"svdd\", \"amf_scm\"]\nplot = false\n{SMALL}");
    let cfg = write_config(tmp.path(), "svdd.toml", &text);
    let out = tmp.path().join("out");
    assert_eq!(cli(&["simulate", "--config", &cfg, "--out", path(&out)]), 0);
    assert_eq!(cli(&["fit", "--config", &cfg, "--out", path(&out)]), 0);
    assert!(out.join("gaussian/svdd.model").exists());
    assert!(!out.join("gaussian/dsvdd.model").exists());
    assert!(!out.join("compound_gaussian").exists());
    assert_eq!(cli(&["evaluate", "--config", &cfg, "--out", path(&out)]), 0);
    let report = fs::read_to_string(out.join("report_gaussian.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 2 * 2 * 3);
    assert!(!out.join("pd_curves_gaussian.svg").exists());
}

#[test]
fn missing_training_split_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", &format!("seed = 7\n{SMALL}"));
    let out = tmp.path().join("empty");
    let bin = env!("CARGO_BIN_EXE_svdd-cfar");
    let o = Command::new(bin).args(["fit", "--config", &cfg, "--out", path(&out)]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(path(&out.join("gaussian").join("train.bin"))), "{err}");
}

#[test]
fn validation_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let bad = write_config(tmp.path(), "bad.toml", "scenario.pfa = 0.0\n");
    assert_eq!(cli(&["simulate", "--config", &bad, "--out", path(&out)]), 1);
    assert!(!out.exists());
    assert_eq!(cli(&["simulate", "--config", path(&tmp.path().join("nope.toml")), "--out", path(&out)]), 1);
    assert_eq!(cli(&["simulate"]), 1);
    assert_eq!(cli(&["launch"]), 1);
    assert_eq!(cli(&["--help"]), 0);
}

#[test]
fn seed_override_changes_the_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", &format!("seed = 7\n{SMALL}"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(cli(&["simulate", "--config", &cfg, "--out", path(&a)]), 0);
    assert_eq!(cli(&["simulate", "--config", &cfg, "--out", path(&b), "--seed", "8"]), 0);
    assert_ne!(fs::read(a.join("gaussian/train.bin")).unwrap(), fs::read(b.join("gaussian/train.bin")).unwrap());
    assert!(fs::read_to_string(b.join(MANIFEST_FILE)).unwrap().contains("\"seed\": 8"));
}

#[test]
fn verify_passes_and_catches_the_tyler_mutation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    assert_eq!(cli(&["verify", "--out", path(&out)]), 0);
    let table = fs::read_to_string(out.join("verify.txt")).unwrap();
    assert!(table.lines().skip(1).all(|l| l.ends_with("PASS")), "{table}");
    assert!(table.contains("tyler_scale_invariance") && table.contains("< 1e-9"));
    assert_eq!(cli(&["verify", "--out", path(&out), "--mutate", "tyler"]), 2);
    let table = fs::read_to_string(out.join("verify.txt")).unwrap();
    let line = table.lines().find(|l| l.starts_with("tyler_scale_invariance")).unwrap();
    assert!(line.ends_with("FAIL"), "{line}");
}
