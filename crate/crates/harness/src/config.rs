//! Experiment configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dsgld::samplers::{InitLaw, SamplerKind, TrackerInit};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LinregW2,
    LogregAccuracy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    Barbell {
        agents: usize,
        #[serde(default = "default_period")]
        period: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_eps_hat")]
        eps_hat: f64,
        window: Option<usize>,
    },
    Lollipop {
        agents: usize,
        #[serde(default = "default_period")]
        period: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_eps_hat")]
        eps_hat: f64,
        window: Option<usize>,
        #[serde(default = "default_branch_min")]
        branch_min: usize,
        #[serde(default = "default_branch_max")]
        branch_max: usize,
        #[serde(default = "default_attach")]
        attach: usize,
    },
    Complete {
        agents: usize,
        #[serde(default = "default_eps_hat")]
        eps_hat: f64,
    },
}

impl GraphConfig {
    pub fn agents(&self) -> usize {
        match self {
            GraphConfig::Barbell { agents, .. } | GraphConfig::Lollipop { agents, .. } | GraphConfig::Complete { agents, .. } => {
                *agents
            }
        }
    }
}

fn default_period() -> usize {
    50
}
fn default_eps_hat() -> f64 {
    1e-6
}
fn default_branch_min() -> usize {
    3
}
fn default_branch_max() -> usize {
    4
}
fn default_attach() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    LinearSynthetic {
        #[serde(default = "default_linear_samples")]
        samples: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_reg")]
        reg: f64,
        #[serde(default = "default_noise_var")]
        noise_var: f64,
        /// Minibatch size; absent means full local batch.
        batch: Option<usize>,
        #[serde(default)]
        data_seed: u64,
    },
    LogisticSynthetic {
        #[serde(default = "default_logistic_samples")]
        samples: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_reg")]
        reg: f64,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
        #[serde(default = "default_balanced")]
        balanced_train: Option<usize>,
        batch: Option<usize>,
        #[serde(default)]
        data_seed: u64,
    },
    LogisticCsv {
        path: PathBuf,
        #[serde(default = "default_real_reg")]
        reg: f64,
        #[serde(default = "default_real_fraction")]
        train_fraction: f64,
        #[serde(default = "default_real_balanced")]
        balanced_train: usize,
        #[serde(default)]
        has_header: bool,
        batch: Option<usize>,
        #[serde(default)]
        data_seed: u64,
    },
    /// `f_i = ½‖x − a_i‖²` with given centers, one per agent.
    GaussianToy { centers: Vec<Vec<f64>> },
}

fn default_linear_samples() -> usize {
    100
}
fn default_logistic_samples() -> usize {
    600
}
fn default_dim() -> usize {
    5
}
fn default_reg() -> f64 {
    0.1
}
fn default_noise_var() -> f64 {
    1.0
}
fn default_train_fraction() -> f64 {
    0.7
}
fn default_balanced() -> Option<usize> {
    Some(380)
}
fn default_real_reg() -> f64 {
    0.3
}
fn default_real_fraction() -> f64 {
    0.09
}
fn default_real_balanced() -> usize {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default = "default_init_law")]
    pub law: InitLaw,
    #[serde(default = "default_tracker")]
    pub tracker: TrackerInit,
}

fn default_init_law() -> InitLaw {
    InitLaw::StandardNormal
}
fn default_tracker() -> TrackerInit {
    TrackerInit::Exact
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { law: default_init_law(), tracker: default_tracker() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub samplers: Vec<SamplerKind>,
    pub graph: GraphConfig,
    pub model: ModelConfig,
    /// Stepsize per sampler name.
    pub eta: BTreeMap<SamplerKind, f64>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Directory below the output root.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default = "default_true")]
    pub plots: bool,
}

fn default_iterations() -> usize {
    100
}
fn default_trials() -> usize {
    200
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // CSV paths are relative to the config file.
        if let ModelConfig::LogisticCsv { path: csv, .. } = &mut cfg.model {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.samplers.is_empty() {
            return Err(HarnessError::Config("no samplers selected".into()));
        }
        for s in &self.samplers {
            match self.eta.get(s) {
                Some(&eta) if eta > 0.0 && eta.is_finite() => {}
                Some(&eta) => return Err(HarnessError::Config(format!("stepsize for {} must be positive, got {eta}", s.name()))),
                None => return Err(HarnessError::Config(format!("no stepsize for {}", s.name()))),
            }
        }
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be positive".into()));
        }
        let fits = matches!(
            (self.experiment, &self.model),
            (ExperimentKind::LinregW2, ModelConfig::LinearSynthetic { .. } | ModelConfig::GaussianToy { .. })
                | (ExperimentKind::LogregAccuracy, ModelConfig::LogisticSynthetic { .. } | ModelConfig::LogisticCsv { .. })
        );
        if !fits {
            return Err(HarnessError::Config(format!("model kind does not fit experiment {:?}", self.experiment)));
        }
        if let ModelConfig::GaussianToy { centers } = &self.model {
            if centers.len() != self.graph.agents() {
                return Err(HarnessError::Config("toy model needs one center per agent".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
experiment = "linreg_w2"
samplers = ["diging", "de_sgld"]
iterations = 10
trials = 4

[graph]
kind = "barbell"
agents = 20

[model]
kind = "linear_synthetic"
batch = 3

[eta]
diging = 0.01
de_sgld = 0.02
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.graph, GraphConfig::Barbell { agents: 20, period: 50, seed: 0, eps_hat: 1e-6, window: None });
        assert!(matches!(cfg.model, ModelConfig::LinearSynthetic { samples: 100, dim: 5, batch: Some(3), .. }));
        assert_eq!(cfg.eta[&SamplerKind::DeSgld], 0.02);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_missing_stepsize_and_unknown_keys() {
        let missing = SAMPLE.replace("de_sgld = 0.02\n", "");
        assert!(matches!(ExperimentConfig::from_toml(&missing), Err(HarnessError::Config(_))));
        let unknown = SAMPLE.replace("trials = 4", "trials = 4\nmystery = 1");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
        let mismatched = SAMPLE.replace("linreg_w2", "logreg_accuracy");
        assert!(ExperimentConfig::from_toml(&mismatched).is_err());
    }
}
