//! Sweep over (method, frames, seed) cells on a bounded worker pool.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Duration;

use anyhow::{Context, Result};
use gpo_core::eval::{evaluate, MetricsReport};
use gpo_core::methods::{run_method, Method};
use gpo_core::synth::{generate_scene, SceneConfig};
use gpo_core::{InitializationResult, Timing};
use rayon::prelude::*;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub method: Method,
    pub frames: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub cell: Cell,
    pub outcome: std::result::Result<Run, String>,
}

#[derive(Debug, Clone)]
pub struct Run {
    pub report: MetricsReport,
    pub result: InitializationResult,
}

/// Every cell of the sweep, sorted by key and without duplicates.
pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out: Vec<Cell> = config
        .methods
        .iter()
        .flat_map(|&method| {
            config.frames.iter().flat_map(move |&frames| {
                (0..config.seeds).map(move |s| Cell {
                    method,
                    frames,
                    seed: config.first_seed + s,
                })
            })
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

fn run_cell_inner(config: &ExperimentConfig, cell: Cell) -> gpo_core::Result<Run> {
    let scene = SceneConfig {
        frames: cell.frames,
        seed: cell.seed,
        ..config.scene.clone()
    };
    let (window, truth) = generate_scene(&scene)?;
    let mut result = run_method(cell.method, &window, &config.method, cell.seed)?;
    if config.timing {
        let mut totals = vec![result.timing.total];
        let mut optims = vec![result.timing.optimization];
        for _ in 1..config.repeat_timing {
            let again = run_method(cell.method, &window, &config.method, cell.seed)?;
            totals.push(again.timing.total);
            optims.push(again.timing.optimization);
        }
        result.timing = Timing {
            total: median(totals),
            optimization: median(optims),
        };
    } else {
        result.timing = Timing::default();
    }
    let report = evaluate(&result, &truth, &config.eval, cell.seed)?;
    Ok(Run { report, result })
}

/// Runs one cell; errors and panics become a failed record.
pub fn run_cell(config: &ExperimentConfig, cell: Cell) -> RunRecord {
    let outcome = match catch_unwind(AssertUnwindSafe(|| run_cell_inner(config, cell))) {
        Ok(Ok(run)) => Ok(run),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(panic
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".to_string())),
    };
    match &outcome {
        Ok(run) => log::info!(
            "{} frames={} seed={}: pne {:.3} deg, ate {:.4}",
            cell.method,
            cell.frames,
            cell.seed,
            run.report.pne_deg,
            run.report.ate
        ),
        Err(e) => log::warn!("{} frames={} seed={}: {e}", cell.method, cell.frames, cell.seed),
    }
    RunRecord { cell, outcome }
}

/// Runs all cells; the output order is the cell order, not completion order.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let cells = cells(config);
    log::info!("running {} cells", cells.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .context("building worker pool")?;
    Ok(pool.install(|| cells.par_iter().map(|&c| run_cell(config, c)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_are_sorted_and_unique() {
        let config = ExperimentConfig {
            methods: vec![Method::Dbscan, Method::Gpo, Method::Gpo],
            frames: vec![10, 5],
            seeds: 2,
            first_seed: 7,
            ..Default::default()
        };
        let cells = cells(&config);
        assert_eq!(cells.len(), 8);
        assert!(cells.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(
            cells[0],
            Cell {
                method: Method::Gpo,
                frames: 5,
                seed: 7
            }
        );
    }

    #[test]
    fn median_of_durations() {
        let ms = Duration::from_millis;
        assert_eq!(median(vec![ms(3), ms(1), ms(2)]), ms(2));
        assert_eq!(median(vec![ms(4), ms(1), ms(2), ms(3)]), Duration::from_micros(2500));
    }

    #[test]
    fn failures_become_records() {
        // a negative threshold admits no homography inliers
        let config = ExperimentConfig {
            method: gpo_core::methods::MethodConfig {
                ransac: gpo_core::estimation::RansacConfig {
                    threshold: -1.0,
                    ..Default::default()
                },
                ..Default::default()
            },
            ..Default::default()
        };
        let record = run_cell(
            &config,
            Cell {
                method: Method::Gpo,
                frames: 5,
                seed: 0,
            },
        );
        assert!(record.outcome.is_err());
    }
}
