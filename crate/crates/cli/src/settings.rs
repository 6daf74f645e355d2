//! Resolution of built-in defaults, an optional TOML file and explicit flags.

use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::Deserialize;
use sscnn_core::model::ModelConfig;
use sscnn_core::train::TrainConfig;

use crate::args::{AnalyzeArgs, ModelArgs, OptimArgs, Switch};
use crate::failure::Failure;

/// Keys accepted in a `--config` file; each mirrors the flag of the same name.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub t_in: Option<usize>,
    pub t_out: Option<usize>,
    pub layers: Option<usize>,
    pub channels: Option<usize>,
    pub cycle: Option<usize>,
    pub delta: Option<usize>,
    pub kernel: Option<usize>,
    pub spatial: Option<bool>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub control: Option<String>,
    pub max_lag: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }
}

/// Flag value when given on the command line, else the file value, else the
/// flag's default.
fn pick<T>(m: &ArgMatches, id: &str, flag: T, file: Option<T>) -> T {
    if m.value_source(id) == Some(ValueSource::CommandLine) {
        flag
    } else {
        file.unwrap_or(flag)
    }
}

pub fn model_config(m: &ArgMatches, a: &ModelArgs, f: &FileConfig, n_series: usize) -> ModelConfig {
    let spatial = pick(m, "spatial", a.spatial == Switch::On, f.spatial);
    ModelConfig {
        n_series,
        t_in: pick(m, "t_in", a.t_in, f.t_in),
        t_out: pick(m, "t_out", a.t_out, f.t_out),
        channels: pick(m, "channels", a.channels, f.channels),
        layers: pick(m, "layers", a.layers, f.layers),
        cycle: pick(m, "cycle", a.cycle, f.cycle),
        short_window: pick(m, "delta", a.delta, f.delta),
        kernel: pick(m, "kernel", a.kernel, f.kernel),
        eps: sscnn_core::attnnorm::EPS,
        spatial,
    }
}

pub fn train_config(m: &ArgMatches, a: &OptimArgs, f: &FileConfig) -> TrainConfig {
    TrainConfig {
        learning_rate: pick(m, "lr", a.lr, f.lr),
        batch_size: pick(m, "batch", a.batch, f.batch),
        max_epochs: pick(m, "epochs", a.epochs, f.epochs),
        patience: pick(m, "patience", a.patience, f.patience),
        seed: pick(m, "seed", a.seed, f.seed),
        ..TrainConfig::default()
    }
}

pub struct AnalyzeSettings {
    pub cycle: usize,
    pub delta: usize,
    pub history: usize,
    pub control: String,
    pub max_lag: usize,
}

pub fn analyze_settings(m: &ArgMatches, a: &AnalyzeArgs, f: &FileConfig) -> AnalyzeSettings {
    AnalyzeSettings {
        cycle: pick(m, "cycle", a.cycle, f.cycle),
        delta: pick(m, "delta", a.delta, f.delta),
        history: pick(m, "t_in", a.t_in, f.t_in),
        control: pick(m, "control", a.control.clone(), f.control.clone()),
        max_lag: pick(m, "max_lag", a.max_lag, f.max_lag),
    }
}
