//! Per-trial provenance records (one JSON file per trial and condition).

use std::path::{Path, PathBuf};

use miosindy::selection::GridPoint;
use serde::{Deserialize, Serialize};

use crate::config::Condition;
use crate::error::Result;

/// Scores of one fitted model. `aicc` is absent when no selection ran.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: f64,
    pub coef_error: f64,
    /// Mean over the clean test trajectories.
    pub rmse: f64,
    pub aicc: Option<f64>,
}

/// Exact-solver bookkeeping over every solve behind one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solves: usize,
    pub all_optimal: bool,
    /// Largest relative gap among solves that stopped early (0 if none).
    pub max_gap: f64,
    pub nodes: usize,
    /// Longest single solve, seconds.
    pub max_solve_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmResult {
    /// Algorithm label, with a `-constrained` suffix for constrained fits.
    pub algorithm: String,
    pub chosen: Vec<GridPoint>,
    /// Nonzero library indices per target dimension.
    pub supports: Vec<Vec<usize>>,
    /// Coefficients per target dimension (original units).
    pub coefficients: Vec<Vec<f64>>,
    pub metrics: Option<Metrics>,
    /// Mean absolute violation `(1/c)‖Aξ − b‖₁` (constraints experiment).
    pub constraint_violation: Option<f64>,
    /// Largest single-row violation (constraints experiment).
    pub max_violation: Option<f64>,
    pub solver: Option<SolverStats>,
    /// Regression time over the whole grid, seconds.
    pub fit_time: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub simulate: f64,
    pub library: f64,
    pub test_set: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config_hash: String,
    pub experiment: String,
    pub system: String,
    pub condition_index: usize,
    pub condition: Condition,
    pub trial: usize,
    pub seed: u64,
    pub initial_condition: Vec<f64>,
    pub results: Vec<AlgorithmResult>,
    pub timings: Timings,
    /// Set when the trial failed before any algorithm ran.
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn file_name(condition_index: usize, trial: usize) -> String {
        format!("c{condition_index:03}-t{trial:04}.json")
    }

    pub fn failed(&self) -> bool {
        self.error.is_some() || self.results.iter().any(|r| r.error.is_some())
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(Self::file_name(self.condition_index, self.trial));
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Every record under `<dir>/records`, sorted by condition then trial.
pub fn load_records(dir: &Path) -> Result<Vec<TrialRecord>> {
    let rec_dir = dir.join("records");
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&rec_dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(TrialRecord::load(&path)?);
        }
    }
    out.sort_by_key(|r| (r.condition_index, r.trial));
    Ok(out)
}
