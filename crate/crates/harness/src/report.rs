//! Aggregation of trial records into `summary.csv` / `figure_data.csv`.

use std::path::Path;

use miosindy::metrics::{log10_floored, mean_stderr};
use serde::Serialize;

use crate::config::Condition;
use crate::error::Result;
use crate::record::{load_records, TrialRecord};

/// Metrics that measure wall-clock time and so differ between runs.
pub const TIMING_METRICS: [&str; 1] = ["fit_time"];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub system: String,
    pub algorithm: String,
    pub condition: Condition,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl SummaryRow {
    pub fn is_timing(&self) -> bool {
        TIMING_METRICS.contains(&self.metric.as_str())
    }
}

#[derive(Serialize)]
struct SummaryCsv<'a> {
    experiment: &'a str,
    system: &'a str,
    algorithm: &'a str,
    condition: String,
    metric: &'a str,
    mean: String,
    stderr: String,
    n: usize,
}

#[derive(Serialize)]
struct FigureCsv<'a> {
    experiment: &'a str,
    system: &'a str,
    algorithm: &'a str,
    noise_percent: f64,
    train_seconds: f64,
    degree: usize,
    metric: &'a str,
    mean: String,
    stderr: String,
    n: usize,
}

// per-result samples, in a fixed metric order
fn samples(rec: &TrialRecord, algo: &str) -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    for r in rec.results.iter().filter(|r| r.algorithm == algo && r.error.is_none()) {
        if let Some(m) = &r.metrics {
            out.push(("tpr", m.tpr));
            out.push(("log10_rmse", log10_floored(m.rmse)));
            out.push(("log10_coef_error", log10_floored(m.coef_error)));
        }
        if let Some(v) = r.constraint_violation {
            out.push(("constraint_violation", v));
        }
        if let Some(v) = r.max_violation {
            out.push(("max_violation", v));
        }
        if let Some(s) = &r.solver {
            out.push(("all_optimal", if s.all_optimal { 1.0 } else { 0.0 }));
        }
        out.push(("fit_time", r.fit_time));
    }
    out
}

/// Mean ± standard error over trials for every
/// (condition, algorithm, metric). Rows follow condition index, then the
/// order algorithms appear in the records, then a fixed metric order.
pub fn aggregate(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut records: Vec<&TrialRecord> = records.iter().collect();
    records.sort_by_key(|r| (r.condition_index, r.trial));
    let mut rows = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let ci = records[start].condition_index;
        let end = start + records[start..].iter().take_while(|r| r.condition_index == ci).count();
        let group = &records[start..end];
        let mut algos: Vec<&str> = Vec::new();
        for r in group.iter().flat_map(|r| r.results.iter()) {
            if !algos.contains(&r.algorithm.as_str()) {
                algos.push(&r.algorithm);
            }
        }
        for algo in algos {
            let mut metrics: Vec<(&'static str, Vec<f64>)> = Vec::new();
            for rec in group {
                for (name, v) in samples(rec, algo) {
                    match metrics.iter_mut().find(|(m, _)| *m == name) {
                        Some((_, vals)) => vals.push(v),
                        None => metrics.push((name, vec![v])),
                    }
                }
            }
            for (name, vals) in metrics {
                let (mean, stderr) = mean_stderr(&vals);
                rows.push(SummaryRow {
                    experiment: group[0].experiment.clone(),
                    system: group[0].system.clone(),
                    algorithm: algo.to_string(),
                    condition: group[0].condition,
                    metric: name.to_string(),
                    mean,
                    stderr,
                    n: vals.len(),
                });
            }
        }
        start = end;
    }
    rows
}

/// Drop wall-clock rows (they are the only nondeterministic output).
pub fn without_timing(rows: &[SummaryRow]) -> Vec<SummaryRow> {
    rows.iter().filter(|r| !r.is_timing()).cloned().collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(SummaryCsv {
            experiment: &r.experiment,
            system: &r.system,
            algorithm: &r.algorithm,
            condition: r.condition.label(),
            metric: &r.metric,
            mean: format!("{}", r.mean),
            stderr: format!("{}", r.stderr),
            n: r.n,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format table with the condition split into columns, for plotting.
pub fn write_figure_data(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(FigureCsv {
            experiment: &r.experiment,
            system: &r.system,
            algorithm: &r.algorithm,
            noise_percent: r.condition.noise_percent,
            train_seconds: r.condition.train_seconds,
            degree: r.condition.degree,
            metric: &r.metric,
            mean: format!("{}", r.mean),
            stderr: format!("{}", r.stderr),
            n: r.n,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Re-aggregate the records under `dir` and rewrite both tables.
pub fn report_dir(dir: &Path) -> Result<Vec<SummaryRow>> {
    let rows = aggregate(&load_records(dir)?);
    write_summary(&dir.join("summary.csv"), &rows)?;
    write_figure_data(&dir.join("figure_data.csv"), &rows)?;
    Ok(rows)
}
