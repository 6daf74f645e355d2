use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::data::{Normalizer, SplitFractions};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const CHECKPOINT_FORMAT: &str = "sscnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// JSON document holding a configuration, its normalizer and the parameter
/// tensors in [`ModelParams::names`] order. Floats round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub normalizer: Normalizer,
    pub split: SplitFractions,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: &ModelParams, normalizer: Normalizer, split: SplitFractions) -> Self {
        let params = params
            .names()
            .into_iter()
            .zip(params.tensors())
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                values: t.data().to_vec(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config,
            normalizer,
            split,
            params,
        }
    }

    /// Rebuilds the parameters, checking names and shapes against the config.
    pub fn params(&self) -> Result<ModelParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.normalizer.n_series() != self.config.n_series {
            return Err(Error::Checkpoint(format!(
                "normalizer has {} channels but config has {} series",
                self.normalizer.n_series(),
                self.config.n_series
            )));
        }
        let mut p = ModelParams::zeros(&self.config)?;
        let names = p.names();
        if names.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                self.params.len()
            )));
        }
        let mut values = Vec::with_capacity(names.len());
        for (want, nt) in names.iter().zip(&self.params) {
            if *want != nt.name {
                return Err(Error::Checkpoint(format!("expected tensor {want}, found {}", nt.name)));
            }
            values.push(
                Tensor::new(nt.shape.clone(), nt.values.clone())
                    .map_err(|e| Error::Checkpoint(format!("{}: {e}", nt.name)))?,
            );
        }
        p.assign(&values).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))?;
        c.params()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        std::fs::write(normalizer_path(path), serde_json::to_string_pretty(&self.normalizer)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

/// `<checkpoint>.normalizer.json`.
pub fn normalizer_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".normalizer.json");
    PathBuf::from(s)
}
