use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use gpo_cli::config::{from_table, load_table, parse_on_off, set_key};
use gpo_cli::{run_experiment, ExperimentConfig};
use gpo_core::methods::Method;

/// Planar-initialization benchmark over synthetic scenes.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Args {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated method names, e.g. GPO,PNP_BA,DBSCAN.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Comma-separated frame counts.
    #[arg(long, value_delimiter = ',')]
    frames: Option<Vec<usize>>,
    /// Seeds per cell.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    noise_px: Option<f64>,
    #[arg(long)]
    outlier_ratio: Option<f64>,
    #[arg(long)]
    rotation_noise_deg: Option<f64>,
    /// Force homography-inlier track filtering on or off.
    #[arg(long, value_parser = parse_on_off)]
    ransac: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: one per CPU).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    repeat_timing: Option<usize>,
    /// Turn wall-clock columns off for byte-reproducible output.
    #[arg(long, value_parser = parse_on_off)]
    timing: Option<bool>,
    /// Any config key as dotted.path=value, e.g. scene.clutter_points=25.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn build_config(args: Args) -> Result<ExperimentConfig> {
    let mut table = load_table(args.config.as_deref())?;
    for assignment in &args.set {
        set_key(&mut table, assignment)?;
    }
    let mut config = from_table(table)?;
    if let Some(v) = args.methods {
        config.methods = v;
    }
    if let Some(v) = args.frames {
        config.frames = v;
    }
    if let Some(v) = args.seeds {
        config.seeds = v;
    }
    if let Some(v) = args.noise_px {
        config.scene.noise_px = v;
    }
    if let Some(v) = args.outlier_ratio {
        config.scene.outlier_ratio = v;
    }
    if let Some(v) = args.rotation_noise_deg {
        config.scene.rotation_noise_deg = v;
    }
    if let Some(v) = args.ransac {
        config.method.ransac_override = Some(v);
    }
    if let Some(v) = args.out {
        config.output.dir = v;
    }
    if let Some(v) = args.jobs {
        config.jobs = v;
    }
    if let Some(v) = args.repeat_timing {
        config.repeat_timing = v;
    }
    if let Some(v) = args.timing {
        config.timing = v;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let outcome = build_config(Args::parse()).and_then(|c| run_experiment(&c));
    match outcome {
        Ok(o) if o.failures == 0 => ExitCode::SUCCESS,
        Ok(o) => {
            log::error!("{} of {} runs failed", o.failures, o.rows.len());
            ExitCode::FAILURE
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
