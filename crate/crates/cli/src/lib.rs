//! Benchmark runner: sweeps methods, frame counts and seeds over synthetic
//! planar scenes and writes `runs.csv`, `summary.json` and TUM trajectories.

pub mod config;
pub mod report;
pub mod runner;
pub mod tum;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};

pub use config::ExperimentConfig;
use report::{summarize, write_csv, CsvRow};
use runner::{run_sweep, RunRecord};

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub rows: Vec<CsvRow>,
    pub failures: usize,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Runs the sweep and writes every report under `config.output.dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let records = run_sweep(config)?;
    let rows: Vec<CsvRow> = records.iter().map(CsvRow::from_record).collect();

    let csv_path = dir.join("runs.csv");
    let file = File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    write_csv(&rows, BufWriter::new(file)).with_context(|| format!("writing {}", csv_path.display()))?;

    let summary_path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summarize(&rows))?;
    std::fs::write(&summary_path, json + "\n").with_context(|| format!("writing {}", summary_path.display()))?;

    if config.output.trajectories {
        let traj_dir = dir.join("trajectories");
        std::fs::create_dir_all(&traj_dir).with_context(|| format!("creating {}", traj_dir.display()))?;
        for record in &records {
            if let Ok(run) = &record.outcome {
                let c = record.cell;
                let path = traj_dir.join(format!("{}_f{}_s{}.txt", c.method, c.frames, c.seed));
                tum::write_trajectory(&run.result.poses, &path)?;
            }
        }
    }

    let failures = rows.iter().filter(|r| r.failed()).count();
    log::info!("{} runs, {failures} failed; reports in {}", rows.len(), dir.display());
    Ok(ExperimentOutcome {
        records,
        rows,
        failures,
        csv_path,
        summary_path,
    })
}
