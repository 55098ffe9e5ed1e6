use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{LabError, Result};
use crate::optim::TrainConfig;

/// Environment variable overriding `output_dir`.
pub const OUTPUT_ENV: &str = "DTPO_LAB_OUT";

/// Training hyperparameters plus run-level settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub steps: usize,
    /// Trajectories of every `eval_every`-th step are persisted.
    pub eval_every: usize,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub emit_svg: bool,
    /// Held-out tasks for the greedy evaluation after training.
    pub eval_tasks: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            steps: 80,
            eval_every: 10,
            output_dir: PathBuf::from("runs"),
            seeds: vec![0, 1, 2],
            emit_svg: true,
            eval_tasks: 512,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.steps == 0 {
            return Err(LabError::Config("steps must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(LabError::Config("eval_every must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(LabError::Config("seeds must be non-empty".into()));
        }
        if self.eval_tasks == 0 {
            return Err(LabError::Config("eval_tasks must be at least 1".into()));
        }
        Ok(())
    }

    /// Parses a flat key-value config: either a JSON object, or one
    /// `key = value` (or `key: value`) pair per line with JSON values.
    /// Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let map = if text.trim_start().starts_with('{') {
            match serde_json::from_str::<Value>(text) {
                Ok(Value::Object(map)) => map,
                Ok(_) => return Err(LabError::Config("config must be a flat object".into())),
                Err(e) => return Err(LabError::Config(format!("config is not valid JSON: {e}"))),
            }
        } else {
            parse_lines(text)?
        };
        let known = known_keys();
        if let Some(bad) = map.keys().find(|k| !known.contains(k)) {
            return Err(LabError::Config(format!("unknown config key {bad:?}")));
        }
        if let Some((k, _)) = map.iter().find(|(_, v)| v.is_object()) {
            return Err(LabError::Config(format!("config key {k:?} must be a scalar or list")));
        }
        let cfg: ExperimentConfig = serde_json::from_value(Value::Object(map))
            .map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Applies the `DTPO_LAB_OUT` override if it is set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_ENV) {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn known_keys() -> Vec<String> {
    match serde_json::to_value(ExperimentConfig::default()) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => unreachable!("config serializes to an object"),
    }
}

fn parse_lines(text: &str) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| LabError::Config(format!("line {}: expected key = value", n + 1)))?;
        let key = key.trim().trim_matches('"').to_string();
        let value = value.trim().trim_end_matches(',');
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        map.insert(key, parsed);
    }
    Ok(map)
}
