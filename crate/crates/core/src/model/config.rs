use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::fusion_parameter_count;
use crate::selection::{tau_in, tau_out};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_series: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub channels: usize,
    pub layers: usize,
    pub cycle: usize,
    pub short_window: usize,
    pub kernel: usize,
    pub eps: f64,
    pub spatial: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_series: 1,
            t_in: 168,
            t_out: 96,
            channels: 8,
            layers: 4,
            cycle: 24,
            short_window: 16,
            kernel: 2,
            eps: crate::attnnorm::EPS,
            spatial: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_series", self.n_series),
            ("t_in", self.t_in),
            ("t_out", self.t_out),
            ("channels", self.channels),
            ("layers", self.layers),
            ("cycle", self.cycle),
            ("short_window", self.short_window),
            ("kernel", self.kernel),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        tau_in(self.cycle, self.t_in)?;
        if self.short_window > self.t_in {
            return Err(Error::Config(format!(
                "short_window {} exceeds t_in {}",
                self.short_window, self.t_in
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }

    pub fn tau_in(&self) -> usize {
        self.t_in / self.cycle
    }

    pub fn tau_out(&self) -> usize {
        tau_out(self.cycle, self.t_out)
    }
}

/// Parameter counts by part of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParameterBreakdown {
    pub embed: usize,
    /// Seasonal and short-term selection weights over all layers.
    pub selection: usize,
    /// Inference and extrapolation fusion over all layers.
    pub fusion: usize,
    pub head: usize,
}

impl ParameterBreakdown {
    pub fn total(&self) -> usize {
        self.embed + self.selection + self.fusion + self.head
    }
}

pub fn parameter_breakdown(cfg: &ModelConfig) -> ParameterBreakdown {
    let d = cfg.channels;
    let (ti, to, delta) = (cfg.tau_in(), cfg.tau_out(), cfg.short_window);
    ParameterBreakdown {
        embed: d + d,
        selection: cfg.layers * (ti * ti + to * ti + delta + delta * delta),
        fusion: cfg.layers * 2 * fusion_parameter_count(d, cfg.kernel),
        head: d * cfg.t_out + cfg.t_out,
    }
}

/// Closed-form parameter count; does not depend on the spatial flag.
pub fn count_parameters(cfg: &ModelConfig) -> usize {
    parameter_breakdown(cfg).total()
}
