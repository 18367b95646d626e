//! Experiment configuration file.
//!
//! A TOML document with four optional sections:
//!
//! ```toml
//! [dataset]
//! benchmark = "nl-msd"      # or train/val/test CSV paths
//! seed = 0
//!
//! [model]
//! mode = "rational"
//! n_x = 2
//! n_p = 1
//! eta = [3]
//! net = { hidden = [] }
//!
//! [training]
//! restarts = 25
//! jobs = 4
//!
//! [output]
//! dir = "runs/msd"
//! emit_plot_data = true
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! Command-line flags override file values, which override defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lpvlfr::lfr::ModelMode;
use lpvlfr::sched::NetPlan;
use lpvlfr::train::{AdamConfig, SchedulingKind, TrainConfig};
use serde::Deserialize;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LPVLFR_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "runs";

pub const BENCHMARKS: &[&str] = &["nl-msd"];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub benchmark: Option<String>,
    pub seed: u64,
    /// Output noise variance; overrides the SNR calibration.
    pub noise_variance: Option<f64>,
    /// Target SNR in dB (the default is 20).
    pub snr_db: Option<f64>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub mode: ModelMode,
    pub n_x: usize,
    pub n_p: Option<usize>,
    pub eta: Option<Vec<usize>>,
    pub scheduling: SchedulingKind,
    pub net: NetPlan,
    pub epsilon: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            mode: t.mode,
            n_x: t.n_x,
            n_p: None,
            eta: None,
            scheduling: t.scheduling,
            net: t.net,
            epsilon: t.epsilon,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub adam_epochs: usize,
    pub lbfgs_epochs: usize,
    pub adam_step: f64,
    pub adam_betas: [f64; 2],
    pub adam_eps: f64,
    pub lbfgs_memory: usize,
    pub reg_rho: f64,
    pub restarts: usize,
    pub seed: u64,
    pub normalize_data: bool,
    pub jobs: Option<usize>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            adam_epochs: t.adam_epochs,
            lbfgs_epochs: t.lbfgs_epochs,
            adam_step: t.adam.step,
            adam_betas: [t.adam.beta1, t.adam.beta2],
            adam_eps: t.adam.eps,
            lbfgs_memory: t.lbfgs_memory,
            reg_rho: t.reg_rho,
            restarts: t.restarts,
            seed: t.seed,
            normalize_data: t.normalize_data,
            jobs: t.jobs,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub emit_plot_data: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let ds = &mut cfg.dataset;
        for p in [&mut ds.train, &mut ds.val, &mut ds.test]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(dir) = &mut cfg.output.dir {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    /// Repetition vector after reconciling `n_p` and `eta`; a missing `eta`
    /// means one repetition per scheduling variable.
    pub fn eta(&self) -> Result<Vec<usize>> {
        let m = &self.model;
        match (&m.eta, m.n_p) {
            (Some(eta), Some(n_p)) if eta.len() != n_p => {
                bail!("model.eta has {} entries but model.n_p = {n_p}", eta.len())
            }
            (Some(eta), _) => Ok(eta.clone()),
            (None, Some(n_p)) => Ok(vec![1; n_p]),
            (None, None) => Ok(TrainConfig::default().eta),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.n_x == 0 {
            bail!("model.n_x must be positive");
        }
        let eta = self.eta()?;
        if eta.contains(&0) {
            bail!("model.eta entries must be positive");
        }
        let ds = &self.dataset;
        match (&ds.benchmark, &ds.train, &ds.val) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                bail!("dataset: give either a benchmark or CSV paths, not both")
            }
            (Some(b), None, None) => {
                if !BENCHMARKS.contains(&b.as_str()) {
                    bail!(
                        "unknown benchmark '{b}' (available: {})",
                        BENCHMARKS.join(", ")
                    );
                }
            }
            (None, Some(_), Some(_)) => {}
            (None, _, _) => bail!("dataset: need a benchmark or both train and val CSV paths"),
        }
        for p in [&ds.train, &ds.val, &ds.test].into_iter().flatten() {
            if !p.is_file() {
                bail!("dataset file {} does not exist", p.display());
            }
        }
        if ds.noise_variance.is_some() && ds.snr_db.is_some() {
            bail!("dataset: noise_variance and snr_db are mutually exclusive");
        }
        self.train_config()?.validate()?;
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let m = &self.model;
        let t = &self.training;
        Ok(TrainConfig {
            mode: m.mode,
            n_x: m.n_x,
            eta: self.eta()?,
            scheduling: m.scheduling,
            net: m.net.clone(),
            epsilon: m.epsilon,
            adam_epochs: t.adam_epochs,
            lbfgs_epochs: t.lbfgs_epochs,
            adam: AdamConfig {
                step: t.adam_step,
                beta1: t.adam_betas[0],
                beta2: t.adam_betas[1],
                eps: t.adam_eps,
            },
            lbfgs_memory: t.lbfgs_memory,
            reg_rho: t.reg_rho,
            restarts: t.restarts,
            seed: t.seed,
            normalize_data: t.normalize_data,
            jobs: t.jobs,
        })
    }
}

/// Output directory: flag, then config file, then environment, then `runs`.
pub fn resolve_out_dir(flag: Option<&Path>, file: Option<&Path>) -> PathBuf {
    flag.or(file)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: ExperimentConfig = toml::from_str("").unwrap();
        let t = cfg.train_config().unwrap();
        assert_eq!(t, TrainConfig::default());
    }

    #[test]
    fn eta_defaults_from_n_p() {
        let cfg: ExperimentConfig =
            toml::from_str("[model]\nmode = \"affine\"\nn_p = 2\n").unwrap();
        assert_eq!(cfg.eta().unwrap(), vec![1, 1]);
        let bad: ExperimentConfig = toml::from_str("[model]\nn_p = 2\neta = [3]\n").unwrap();
        assert!(bad.eta().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("[training]\nrestart = 3\n").is_err());
    }

    #[test]
    fn dataset_needs_a_source() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_err());
        cfg.dataset.benchmark = Some("nl-msd".into());
        cfg.validate().unwrap();
        cfg.dataset.benchmark = Some("cmg".into());
        assert!(cfg.validate().is_err());
    }
}
