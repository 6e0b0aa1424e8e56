//! Per-run CSV rows and per-cell summary statistics.

use std::io::{Read, Write};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::runner::RunRecord;

pub const CSV_HEADER: &str = "method,frames,seed,ate,pne_deg,pde,avg_time_ms,optim_time_ms,converged,error";

/// One line of `runs.csv`; metric fields are empty for failed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub method: String,
    pub frames: usize,
    pub seed: u64,
    pub ate: Option<f64>,
    pub pne_deg: Option<f64>,
    pub pde: Option<f64>,
    pub avg_time_ms: Option<f64>,
    pub optim_time_ms: Option<f64>,
    pub converged: bool,
    pub error: String,
}

impl CsvRow {
    pub fn from_record(record: &RunRecord) -> Self {
        let mut row = CsvRow {
            method: record.cell.method.name().to_string(),
            frames: record.cell.frames,
            seed: record.cell.seed,
            ate: None,
            pne_deg: None,
            pde: None,
            avg_time_ms: None,
            optim_time_ms: None,
            converged: false,
            error: String::new(),
        };
        match &record.outcome {
            Ok(run) => {
                row.ate = Some(run.report.ate);
                row.pne_deg = Some(run.report.pne_deg);
                row.pde = Some(run.report.pde);
                row.avg_time_ms = Some(run.report.avg_time_ms);
                row.optim_time_ms = Some(run.report.optim_time_ms);
                row.converged = run.result.converged;
            }
            Err(e) => row.error = e.clone(),
        }
        row
    }

    pub fn failed(&self) -> bool {
        !self.error.is_empty()
    }
}

pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .context("reading runs csv")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let median = if k % 2 == 1 {
            sorted[k / 2]
        } else {
            0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
        };
        let std = if k > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stats { mean, median, std })
    }
}

/// Statistics of one (method, frames) cell over its successful seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub frames: usize,
    pub runs: usize,
    pub failures: usize,
    pub ate: Option<Stats>,
    pub pne_deg: Option<Stats>,
    pub pde: Option<Stats>,
    pub avg_time_ms: Option<Stats>,
    pub optim_time_ms: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
}

/// Groups consecutive rows by (method, frames); rows must be cell-sorted.
pub fn summarize(rows: &[CsvRow]) -> Summary {
    let mut cells = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (&rows[start].method, rows[start].frames);
        let end = start
            + rows[start..]
                .iter()
                .take_while(|r| (&r.method, r.frames) == key)
                .count();
        let group = &rows[start..end];
        let column = |f: fn(&CsvRow) -> Option<f64>| -> Option<Stats> {
            Stats::of(&group.iter().filter(|r| !r.failed()).filter_map(f).collect::<Vec<_>>())
        };
        cells.push(CellSummary {
            method: key.0.clone(),
            frames: key.1,
            runs: group.len(),
            failures: group.iter().filter(|r| r.failed()).count(),
            ate: column(|r| r.ate),
            pne_deg: column(|r| r.pne_deg),
            pde: column(|r| r.pde),
            avg_time_ms: column(|r| r.avg_time_ms),
            optim_time_ms: column(|r| r.optim_time_ms),
        });
        start = end;
    }
    Summary { cells }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, frames: usize, seed: u64, pne: Option<f64>) -> CsvRow {
        CsvRow {
            method: method.into(),
            frames,
            seed,
            ate: pne.map(|p| p / 10.0),
            pne_deg: pne,
            pde: pne,
            avg_time_ms: pne,
            optim_time_ms: pne,
            converged: pne.is_some(),
            error: if pne.is_some() { String::new() } else { "boom, \"quoted\"".into() },
        }
    }

    #[test]
    fn stats_by_hand() {
        let s = Stats::of(&[1.0, 2.0, 3.0, 10.0]).unwrap();
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.median, 2.5);
        assert!((s.std - (50.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(Stats::of(&[5.0]).unwrap().std, 0.0);
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn csv_round_trip_with_header() {
        let rows = vec![row("GPO", 5, 0, Some(1.5)), row("GPO", 5, 1, None)];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn summary_skips_failures() {
        let rows = vec![
            row("BA", 5, 0, Some(1.0)),
            row("BA", 5, 1, None),
            row("BA", 5, 2, Some(3.0)),
            row("GPO", 5, 0, None),
        ];
        let summary = summarize(&rows);
        assert_eq!(summary.cells.len(), 2);
        let ba = &summary.cells[0];
        assert_eq!((ba.runs, ba.failures), (3, 1));
        assert_eq!(ba.pne_deg.unwrap().mean, 2.0);
        assert!(summary.cells[1].pne_deg.is_none());
    }
}
