//! Optional TOML run configuration. Command-line flags override file values,
//! which override built-in defaults.

use anyhow::Context;
use compograph::model::BasisMode;
use compograph::synth::{Generator, Regime};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: TrainFile,
    pub eval: EvalFile,
    pub synth: SynthFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub iterations: Option<usize>,
    pub lr: Option<f64>,
    pub neg_ratio: Option<f64>,
    pub seed: Option<u64>,
    pub basis_mode: Option<BasisMode>,
    pub log_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalFile {
    pub fraction: Option<f64>,
    pub dims: Option<Vec<usize>>,
    pub seeds: Option<usize>,
    pub split_seed: Option<u64>,
    pub keep: Option<Vec<usize>>,
    pub masks: Option<usize>,
    pub calibration: Option<String>,
    pub bins: Option<usize>,
    pub l2_grid: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthFile {
    pub n: Option<usize>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub regime: Option<Regime>,
    pub generator: Option<Generator>,
    pub mean_degree: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// `flag`, else `file`, else `default`.
pub fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}
