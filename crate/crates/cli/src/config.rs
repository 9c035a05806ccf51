//! Run configuration: a flat TOML document with dotted keys.
//!
//! Every key is optional; missing keys take the defaults below, which
//! reproduce the reference protocol. Unknown keys are rejected.
//!
//! ```toml
//! seed = 2025
//! families = ["gaussian", "compound_gaussian"]
//! detectors = ["mf_true", "amf_scm", "anmf_tyler", "svdd", "dsvdd"]
//! plot = true
//!
//! scenario.m = 16
//! scenario.k_secondary = 32
//! scenario.rho = 0.5
//! scenario.texture_shape = 1.0
//! scenario.texture_per_vector = false
//! scenario.noise_power = 1.0
//! scenario.pfa = 0.01
//! scenario.snr_grid_db = [0.0, 1.0, ..., 20.0]
//! scenario.doppler_bins = [0, 1, ..., 15]
//! scenario.n_train = 5000
//! scenario.n_cal = 5000
//! scenario.n_verify = 5000
//! scenario.n_test = 5000
//!
//! svdd.nu = 0.01
//! svdd.tol = 1e-6
//! svdd.max_pair_updates = 100000
//!
//! network.channels = [32, 64, 128]
//! network.kernel_size = 3
//! network.padding = 1
//! network.pool_size = 2
//! network.leaky_slope = 0.01
//! network.embed_dim = 128
//! network.bn_eps = 1e-5
//! network.bn_momentum = 0.1
//!
//! training.epochs = 15
//! training.batch_size = 64
//! training.learning_rate = 1e-3
//! training.milestones = [5, 10]
//! training.lr_factor = 0.1
//! training.weight_decay = 1e-3
//! training.adam_beta1 = 0.9
//! training.adam_beta2 = 0.999
//! training.adam_eps = 1e-8
//!
//! harness.tyler_tol = 1e-8
//! harness.tyler_max_iter = 100
//! harness.scm_loading = 0.0
//! ```

use serde::{Deserialize, Serialize};
use svdd_cfar::cfar::{DetectorKind, HarnessOptions};
use svdd_cfar::classical::TylerOptions;
use svdd_cfar::deep::{NetworkSpec, TrainConfig};
use svdd_cfar::sim::{ClutterFamily, Scenario};
use svdd_cfar::svdd::SolverOptions;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub families: Vec<ClutterFamily>,
    pub detectors: Vec<DetectorKind>,
    pub plot: bool,
    pub scenario: ScenarioConfig,
    pub svdd: SvddConfig,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub harness: HarnessConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2025,
            families: vec![ClutterFamily::Gaussian, ClutterFamily::CompoundGaussian],
            detectors: DetectorKind::ALL.to_vec(),
            plot: true,
            scenario: ScenarioConfig::default(),
            svdd: SvddConfig::default(),
            network: NetworkConfig::default(),
            training: TrainingConfig::default(),
            harness: HarnessConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub m: usize,
    pub k_secondary: usize,
    pub rho: f64,
    pub texture_shape: f64,
    pub texture_per_vector: bool,
    pub noise_power: f64,
    pub pfa: f64,
    pub snr_grid_db: Vec<f64>,
    pub doppler_bins: Vec<usize>,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_verify: usize,
    pub n_test: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let s = Scenario::default();
        Self {
            m: s.m,
            k_secondary: s.k_secondary,
            rho: s.rho,
            texture_shape: s.texture_shape,
            texture_per_vector: s.texture_per_vector,
            noise_power: s.noise_power,
            pfa: s.pfa,
            snr_grid_db: s.snr_grid_db,
            doppler_bins: s.doppler_bins,
            n_train: s.n_train,
            n_cal: s.n_cal,
            n_verify: s.n_verify,
            n_test: s.n_test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvddConfig {
    pub nu: f64,
    pub tol: f64,
    pub max_pair_updates: usize,
}

impl Default for SvddConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            nu: 0.01,
            tol: o.tol,
            max_pair_updates: o.max_pair_updates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub padding: usize,
    pub pool_size: usize,
    pub leaky_slope: f64,
    pub embed_dim: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let n = NetworkSpec::default();
        Self {
            channels: n.channels,
            kernel_size: n.kernel_size,
            padding: n.padding,
            pool_size: n.pool_size,
            leaky_slope: n.leaky_slope,
            embed_dim: n.embed_dim,
            bn_eps: n.bn_eps,
            bn_momentum: n.bn_momentum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub milestones: Vec<usize>,
    pub lr_factor: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            milestones: t.milestones,
            lr_factor: t.lr_factor,
            weight_decay: t.weight_decay,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub tyler_tol: f64,
    pub tyler_max_iter: usize,
    pub scm_loading: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        let t = TylerOptions::default();
        Self {
            tyler_tol: t.tol,
            tyler_max_iter: t.max_iter,
            scm_loading: 0.0,
        }
    }
}

impl RunConfig {
    /// Parses a TOML document and validates it. Errors carry the line of
    /// the offending key when it can be located.
    pub fn from_toml(src: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| {
            let line = e
                .span()
                .map(|s| src[..s.start.min(src.len())].lines().count().max(1))
                .map(|l| format!("line {l}: "))
                .unwrap_or_default();
            CliError::Validation(format!("{line}{}", e.message()))
        })?;
        cfg.validate().map_err(|(key, msg)| match locate_key(src, key) {
            Some(line) => CliError::Validation(format!("line {line}: {key}: {msg}")),
            None => CliError::Validation(format!("{key}: {msg}")),
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Semantic checks; the error names the dotted key at fault.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.families.is_empty() {
            return Err(("families", "at least one clutter family is required".into()));
        }
        if self.detectors.is_empty() {
            return Err(("detectors", "at least one detector is required".into()));
        }
        for (i, f) in self.families.iter().enumerate() {
            if self.families[..i].contains(f) {
                return Err(("families", format!("{f} listed twice")));
            }
        }
        for (i, d) in self.detectors.iter().enumerate() {
            if self.detectors[..i].contains(d) {
                return Err(("detectors", format!("{d} listed twice")));
            }
        }
        let s = &self.scenario;
        if !(s.pfa > 0.0 && s.pfa < 1.0) {
            return Err(("pfa", format!("{} must lie strictly between 0 and 1", s.pfa)));
        }
        for (key, n) in [("n_cal", s.n_cal), ("n_verify", s.n_verify)] {
            if (n as f64) * s.pfa < 1.0 {
                return Err((key, format!("{n} samples cannot resolve pfa = {}", s.pfa)));
            }
        }
        if s.snr_grid_db.is_empty() {
            return Err(("snr_grid_db", "grid is empty".into()));
        }
        if s.doppler_bins.is_empty() {
            return Err(("doppler_bins", "no Doppler bins".into()));
        }
        let needs_tyler = self.detectors.contains(&DetectorKind::AnmfTyler);
        if needs_tyler && s.k_secondary <= s.m {
            return Err(("k_secondary", format!("Tyler estimation needs k_secondary > m = {}", s.m)));
        }
        if self.detectors.contains(&DetectorKind::AmfScm) && s.k_secondary < s.m && self.harness.scm_loading == 0.0 {
            return Err(("k_secondary", format!("an unloaded SCM needs k_secondary >= m = {}", s.m)));
        }
        self.scenario(ClutterFamily::Gaussian)
            .validate()
            .map_err(|e| ("scenario", e.to_string()))?;
        let v = &self.svdd;
        if !(v.nu > 0.0 && v.nu <= 1.0) {
            return Err(("nu", format!("{} must lie in (0, 1]", v.nu)));
        }
        if v.nu * (s.n_train as f64) < 1.0 {
            return Err(("nu", format!("nu * n_train = {} must be at least 1", v.nu * s.n_train as f64)));
        }
        if !(v.tol > 0.0) || v.max_pair_updates == 0 {
            return Err(("svdd", "tol and max_pair_updates must be positive".into()));
        }
        let spec = self.network_spec();
        spec.validate().map_err(|e| ("network", e.to_string()))?;
        spec.check_length(s.m).map_err(|e| ("network", e.to_string()))?;
        self.train_config().validate().map_err(|e| ("training", e.to_string()))?;
        let h = &self.harness;
        if !(h.tyler_tol > 0.0) || h.tyler_max_iter == 0 {
            return Err(("tyler_tol", "Tyler tolerance and iteration cap must be positive".into()));
        }
        if !(h.scm_loading >= 0.0) {
            return Err(("scm_loading", format!("{} must be nonnegative", h.scm_loading)));
        }
        Ok(())
    }

    pub fn scenario(&self, family: ClutterFamily) -> Scenario {
        let s = &self.scenario;
        Scenario {
            clutter_family: family,
            m: s.m,
            k_secondary: s.k_secondary,
            rho: s.rho,
            texture_shape: s.texture_shape,
            texture_per_vector: s.texture_per_vector,
            noise_power: s.noise_power,
            pfa: s.pfa,
            snr_grid_db: s.snr_grid_db.clone(),
            doppler_bins: s.doppler_bins.clone(),
            n_train: s.n_train,
            n_cal: s.n_cal,
            n_verify: s.n_verify,
            n_test: s.n_test,
            master_seed: self.seed,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.svdd.tol,
            max_pair_updates: self.svdd.max_pair_updates,
        }
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let n = &self.network;
        NetworkSpec {
            channels: n.channels.clone(),
            kernel_size: n.kernel_size,
            padding: n.padding,
            pool_size: n.pool_size,
            leaky_slope: n.leaky_slope,
            embed_dim: n.embed_dim,
            bn_eps: n.bn_eps,
            bn_momentum: n.bn_momentum,
            ..NetworkSpec::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            milestones: t.milestones.clone(),
            lr_factor: t.lr_factor,
            weight_decay: t.weight_decay,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            seed: self.seed,
        }
    }

    pub fn harness_options(&self) -> HarnessOptions {
        HarnessOptions {
            tyler: TylerOptions {
                tol: self.harness.tyler_tol,
                max_iter: self.harness.tyler_max_iter,
                mutation: None,
            },
            scm_loading: self.harness.scm_loading,
        }
    }

    pub fn wants(&self, detector: DetectorKind) -> bool {
        self.detectors.contains(&detector)
    }
}

/// 1-based line on which `key` is assigned, either bare or as the last
/// segment of a dotted key.
fn locate_key(src: &str, key: &str) -> Option<usize> {
    src.lines().position(|line| {
        let Some((lhs, _)) = line.split_once('=') else {
            return false;
        };
        let lhs = lhs.trim();
        !lhs.starts_with('#') && lhs.rsplit('.').next().map(str::trim) == Some(key)
    })
    .map(|i| i + 1)
}
