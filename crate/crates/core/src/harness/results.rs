//! Per-cycle and summary CSV files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{csv_io, SceneId};
use crate::metrics::EvalReport;
use crate::{write_atomic, Error, Result};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Highest GAME level written to the results file.
pub const RESULT_GAME_LEVELS: u32 = 3;

/// Outcome of one active-learning cycle. Test metrics are measured on the
/// held-out split after that cycle's training.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub trial: usize,
    /// 1-based cycle index.
    pub cycle: usize,
    pub selected: Vec<SceneId>,
    pub labeled: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ResultRow {
    strategy: String,
    trial: usize,
    cycle: usize,
    labeled: usize,
    mae: f64,
    mse: f64,
    game0: f64,
    game1: f64,
    game2: f64,
    game3: f64,
    selected_ids: String,
}

/// Mean and sample standard deviation of final-cycle MAE / MSE over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub mse_mean: f64,
    pub mse_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub rows: Vec<SummaryRow>,
}

impl ResultsTable {
    pub fn get(&self, strategy: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn summarize(strategy: &str, finals: &[&CycleRecord]) -> SummaryRow {
    let maes: Vec<f64> = finals.iter().map(|r| r.report.mae).collect();
    let mses: Vec<f64> = finals.iter().map(|r| r.report.mse).collect();
    let (mae_mean, mae_std) = mean_std(&maes);
    let (mse_mean, mse_std) = mean_std(&mses);
    SummaryRow {
        strategy: strategy.to_owned(),
        mae_mean,
        mae_std,
        mse_mean,
        mse_std,
    }
}

fn game_at(report: &EvalReport, level: usize) -> f64 {
    report.game.get(level).copied().unwrap_or(f64::NAN)
}

pub const RESULTS_HEADER: [&str; 11] = [
    "strategy", "trial", "cycle", "labeled", "mae", "mse", "game0", "game1", "game2", "game3",
    "selected_ids",
];
pub const SUMMARY_HEADER: [&str; 5] = ["strategy", "mae_mean", "mae_std", "mse_mean", "mse_std"];

fn to_csv<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).map_err(|e| csv_io(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_io(path, e))?;
    }
    w.into_inner()
        .map_err(|e| Error::Results(format!("{}: {e}", path.display())))
}

/// Writes `results.csv` and `summary.csv` into `dir`. Both files are fully
/// rendered before either is written, and each is moved into place from a
/// temporary file.
pub fn write_results(
    dir: &Path,
    records: &[(String, CycleRecord)],
    table: &ResultsTable,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results_path = dir.join(RESULTS_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    let rows = records.iter().map(|(strategy, r)| ResultRow {
        strategy: strategy.clone(),
        trial: r.trial,
        cycle: r.cycle,
        labeled: r.labeled,
        mae: r.report.mae,
        mse: r.report.mse,
        game0: game_at(&r.report, 0),
        game1: game_at(&r.report, 1),
        game2: game_at(&r.report, 2),
        game3: game_at(&r.report, 3),
        selected_ids: r.selected.iter().map(SceneId::as_str).collect::<Vec<_>>().join(";"),
    });
    let results = to_csv(&results_path, &RESULTS_HEADER, rows)?;
    let summary = to_csv(&summary_path, &SUMMARY_HEADER, &table.rows)?;
    write_atomic(&results_path, &results)?;
    write_atomic(&summary_path, &summary)?;
    Ok((results_path, summary_path))
}

/// Parses a `results.csv` back into `(strategy, record)` pairs. The test-set
/// size is not stored, so `n_scenes` comes back as 0.
pub fn read_results(path: &Path) -> Result<Vec<(String, CycleRecord)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    reader
        .deserialize::<ResultRow>()
        .map(|row| {
            let row = row.map_err(|e| Error::Results(format!("{}: {e}", path.display())))?;
            let selected = if row.selected_ids.is_empty() {
                Vec::new()
            } else {
                row.selected_ids.split(';').map(SceneId::from).collect()
            };
            Ok((
                row.strategy,
                CycleRecord {
                    trial: row.trial,
                    cycle: row.cycle,
                    selected,
                    labeled: row.labeled,
                    report: EvalReport {
                        mae: row.mae,
                        mse: row.mse,
                        game: vec![row.game0, row.game1, row.game2, row.game3],
                        n_scenes: 0,
                    },
                },
            ))
        })
        .collect()
}

pub fn read_summary(path: &Path) -> Result<ResultsTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let rows = reader
        .deserialize::<SummaryRow>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Results(format!("{}: {e}", path.display())))?;
    Ok(ResultsTable { rows })
}
