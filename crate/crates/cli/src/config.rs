//! Experiment configuration: a TOML file, `--set key.path=value` edits and
//! typed flags, applied in that order.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gpo_core::eval::EvalConfig;
use gpo_core::methods::{Method, MethodConfig};
use gpo_core::synth::SceneConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scene template; `frames` and `seed` are replaced per run.
    pub scene: SceneConfig,
    pub methods: Vec<Method>,
    /// Frame counts to sweep.
    pub frames: Vec<usize>,
    /// Number of seeds per cell, counted up from `first_seed`.
    pub seeds: u64,
    pub first_seed: u64,
    pub method: MethodConfig,
    pub eval: EvalConfig,
    pub output: OutputConfig,
    /// Worker threads; 0 uses one per CPU.
    pub jobs: usize,
    /// Timed repetitions per run; the median is reported.
    pub repeat_timing: usize,
    /// When off, time columns are written as 0 so reruns are byte-identical.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write one TUM trajectory per successful run.
    pub trajectories: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            trajectories: true,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig {
                noise_px: 1.0,
                ..SceneConfig::default()
            },
            methods: Method::ALL.to_vec(),
            frames: (5..=60).step_by(5).collect(),
            seeds: 10,
            first_seed: 0,
            method: MethodConfig::default(),
            eval: EvalConfig::default(),
            output: OutputConfig::default(),
            jobs: 0,
            repeat_timing: 5,
            timing: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            bail!("no methods selected");
        }
        if self.frames.is_empty() {
            bail!("frame sweep is empty");
        }
        if let Some(f) = self.frames.iter().find(|f| **f < 2) {
            bail!("frame count {f} is below 2");
        }
        if self.seeds == 0 {
            bail!("need at least one seed");
        }
        if self.repeat_timing == 0 {
            bail!("repeat_timing must be at least 1");
        }
        let max_frames = *self.frames.iter().max().expect("checked non-empty");
        SceneConfig {
            frames: max_frames,
            ..self.scene.clone()
        }
        .validate()?;
        self.method.solver.validate()?;
        Ok(())
    }
}

/// Reads a config file into a TOML table (empty when `path` is `None`).
pub fn load_table(path: Option<&Path>) -> Result<toml::Table> {
    match path {
        None => Ok(toml::Table::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            text.parse::<toml::Table>()
                .with_context(|| format!("parsing {}", p.display()))
        }
    }
}

/// Applies `key.path=value`. The value is read as a TOML literal when it
/// parses as one, otherwise as a bare string.
pub fn set_key(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .with_context(|| format!("expected key=value, got {assignment:?}"))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut node = table;
    for part in parents {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .with_context(|| format!("{key}: {part} is not a table"))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

pub fn from_table(table: toml::Table) -> Result<ExperimentConfig> {
    ExperimentConfig::deserialize(table).context("invalid experiment config")
}

pub fn parse_on_off(s: &str) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => bail!("expected on or off, got {s:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = ExperimentConfig::default();
        let text = toml::to_string(&config).unwrap();
        let back = from_table(text.parse().unwrap()).unwrap();
        assert_eq!(back, config);
        assert_eq!(config.frames.len(), 12);
    }

    #[test]
    fn set_key_reaches_nested_fields() {
        let mut table = toml::Table::new();
        set_key(&mut table, "scene.step=0.02").unwrap();
        set_key(&mut table, "method.solver.max_iterations=7").unwrap();
        set_key(&mut table, "output.dir=out/x").unwrap();
        set_key(&mut table, r#"methods=["GPO", "BA"]"#).unwrap();
        let config = from_table(table).unwrap();
        assert_eq!(config.scene.step, 0.02);
        assert_eq!(config.method.solver.max_iterations, 7);
        assert_eq!(config.output.dir, PathBuf::from("out/x"));
        assert_eq!(config.methods, vec![Method::Gpo, Method::Ba]);
        assert!(set_key(&mut toml::Table::new(), "novalue").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut table = toml::Table::new();
        set_key(&mut table, "scene.colour=1").unwrap();
        assert!(from_table(table).is_err());
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = [
            ExperimentConfig { methods: vec![], ..Default::default() },
            ExperimentConfig { frames: vec![], ..Default::default() },
            ExperimentConfig { frames: vec![1], ..Default::default() },
            ExperimentConfig { seeds: 0, ..Default::default() },
            ExperimentConfig { repeat_timing: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
