//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use miosindy::differentiation::Differentiator;
use miosindy::pde::PdeSystem;
use miosindy::selection::Algorithm;
use miosindy::systems::SystemKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// The five experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SampleEfficiency,
    Runtime,
    Constraints,
    Robustness,
    Pde,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SampleEfficiency => "sample_efficiency",
            ExperimentKind::Runtime => "runtime",
            ExperimentKind::Constraints => "constraints",
            ExperimentKind::Robustness => "robustness",
            ExperimentKind::Pde => "pde",
        }
    }
}

/// A single value or a list in TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakSettings {
    pub num_domains: usize,
    pub points_per_domain: usize,
    /// PDE boxes: `points_per_domain` counts points along each axis.
    #[serde(default)]
    pub per_axis: bool,
    #[serde(default)]
    pub test_power: Option<u32>,
}

fn default_true() -> bool {
    true
}

fn default_differentiator() -> Differentiator {
    Differentiator::Smoothed { window: 9 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryConfig {
    /// Polynomial degree; a list makes the degree an experimental condition.
    pub degree: OneOrMany<usize>,
    #[serde(default = "default_true")]
    pub include_bias: bool,
    /// Highest spatial derivative (PDE experiments).
    #[serde(default)]
    pub max_deriv: Option<usize>,
    #[serde(default = "default_differentiator")]
    pub differentiator: Differentiator,
    #[serde(default)]
    pub weak: Option<WeakSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSettings {
    pub grid_points: usize,
}

fn default_test_trajectories() -> usize {
    10
}

fn default_test_seconds() -> f64 {
    10.0
}

fn default_split() -> f64 {
    2.0 / 3.0
}

fn default_time_limit() -> f64 {
    30.0
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub system: String,
    pub trials: usize,
    /// Base seed; trial `i` uses `seed ^ i`.
    pub seed: u64,
    pub noise_percent: OneOrMany<f64>,
    /// Length of each sampled trajectory (train + validation), seconds.
    pub train_seconds: OneOrMany<f64>,
    /// Sample spacing, seconds.
    pub dt: f64,
    pub library: LibraryConfig,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_test_trajectories")]
    pub test_trajectories: usize,
    #[serde(default = "default_test_seconds")]
    pub test_seconds: f64,
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    /// Per-solve branch-and-bound budget, seconds.
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub pde: Option<PdeSettings>,
}

/// One point of the experimental design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub noise_percent: f64,
    pub train_seconds: f64,
    pub degree: usize,
}

impl Condition {
    pub fn label(&self) -> String {
        format!("noise={};seconds={};degree={}", self.noise_percent, self.train_seconds, self.degree)
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt must be positive"));
        }
        if self.algorithms.is_empty() {
            return Err(invalid("no algorithms configured"));
        }
        let (noise, secs, degrees) = (self.noise_percent.to_vec(), self.train_seconds.to_vec(), self.library.degree.to_vec());
        if noise.is_empty() || secs.is_empty() || degrees.is_empty() {
            return Err(invalid("noise_percent, train_seconds and library.degree need at least one value"));
        }
        if noise.iter().any(|n| !(*n >= 0.0)) || secs.iter().any(|s| !(*s > 0.0)) || degrees.contains(&0) {
            return Err(invalid("noise must be >= 0, durations > 0, degrees >= 1"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(invalid("split_fraction must lie in (0, 1)"));
        }
        if self.test_trajectories == 0 || !(self.test_seconds > 0.0) {
            return Err(invalid("need at least one test trajectory of positive length"));
        }
        if !(self.time_limit > 0.0) {
            return Err(invalid("time_limit must be positive"));
        }
        match self.experiment {
            ExperimentKind::Pde => {
                PdeSystem::from_name(&self.system).map_err(|e| invalid(e.to_string()))?;
                if self.library.max_deriv.is_none() || self.library.weak.is_none() || self.pde.is_none() {
                    return Err(invalid("pde experiments need library.max_deriv, library.weak and [pde]"));
                }
            }
            kind => {
                let sys = SystemKind::from_name(&self.system).map_err(|e| invalid(e.to_string()))?;
                if kind == ExperimentKind::Constraints && sys != SystemKind::Duffing {
                    return Err(invalid("the constraints experiment is defined for the duffing system"));
                }
                if kind == ExperimentKind::Robustness && self.library.weak.is_none() {
                    return Err(invalid("robustness experiments use the weak form: set [library.weak]"));
                }
            }
        }
        Ok(())
    }

    /// Conditions in a fixed order: degree, then duration, then noise.
    pub fn conditions(&self) -> Vec<Condition> {
        let mut out = Vec::new();
        for degree in self.library.degree.to_vec() {
            for train_seconds in self.train_seconds.to_vec() {
                for noise_percent in self.noise_percent.to_vec() {
                    out.push(Condition { noise_percent, train_seconds, degree });
                }
            }
        }
        out
    }

    /// SHA-256 of the canonical JSON form, ignoring where results are written.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.workers = 0;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed ^ trial as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        experiment = "sample_efficiency"
        system = "lorenz"
        trials = 2
        seed = 7
        noise_percent = [0.0, 1.0]
        train_seconds = 1.0
        dt = 0.002
        [library]
        degree = 2
        [[algorithms]]
        name = "miosr"
        ks = [1, 2]
        alphas = [0.0]
    "#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.test_trajectories, 10);
        assert_eq!(cfg.library.differentiator, Differentiator::Smoothed { window: 9 });
        assert!(cfg.library.include_bias);
        assert_eq!(cfg.conditions().len(), 2);
        assert_eq!(cfg.trial_seed(3), 7 ^ 3);
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.trials = 3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            MINIMAL.replace("trials = 2", "trials = 0"),
            MINIMAL.replace("\"lorenz\"", "\"nope\""),
            MINIMAL.replace("experiment = \"sample_efficiency\"", "experiment = \"constraints\""),
            MINIMAL.replace("experiment = \"sample_efficiency\"", "experiment = \"robustness\""),
            MINIMAL.replace("dt = 0.002", "dt = 0.002\nbogus = 1"),
        ];
        for text in bad {
            assert!(matches!(ExperimentConfig::from_toml(&text), Err(HarnessError::Config(_))), "{text}");
        }
    }
}
