use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::fusion::{FusionParams, FusionVars};
use crate::numcore::{Tape, Tensor, Var};
use crate::selection::{SeasonalParams, ShortTermParams};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub seasonal: SeasonalParams,
    pub short_term: ShortTermParams,
    /// Inference branch; produces the next layer's input.
    pub fuse_in: FusionParams,
    /// Extrapolation branch; produces the layer's horizon features.
    pub fuse_out: FusionParams,
}

/// All trainable tensors.
///
/// The embedding is stored as a `1 x 1 x d` causal kernel so the lift from the
/// raw series reuses the convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embed_w: Tensor,
    pub embed_b: Tensor,
    pub layers: Vec<LayerParams>,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub w_se: Var,
    pub w_se_hat: Var,
    pub w_st: Var,
    pub w_st_hat: Var,
    pub fuse_in: FusionVars,
    pub fuse_out: FusionVars,
}

/// Tape handles for every parameter, plus the flat list in [`ModelParams::names`] order.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub all: Vec<Var>,
    pub embed_w: Var,
    pub embed_b: Var,
    pub layers: Vec<LayerVars>,
    pub head_w: Var,
    pub head_b: Var,
}

const FUSION_FIELDS: [&str; 6] = ["conv_a", "bias_a", "conv_b", "bias_b", "conv_mix", "bias_mix"];

impl ModelParams {
    /// Every tensor zero; the forecast is then the head bias.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.channels;
        let mut layers = Vec::with_capacity(cfg.layers);
        for _ in 0..cfg.layers {
            layers.push(LayerParams {
                seasonal: SeasonalParams::zeros(cfg.cycle, cfg.t_in, cfg.t_out)?,
                short_term: ShortTermParams::zeros(cfg.short_window),
                fuse_in: FusionParams::zeros(d, cfg.kernel)?,
                fuse_out: FusionParams::zeros(d, cfg.kernel)?,
            });
        }
        Ok(Self {
            embed_w: Tensor::zeros(&[1, 1, d]),
            embed_b: Tensor::zeros(&[d]),
            layers,
            head_w: Tensor::zeros(&[cfg.t_out, d]),
            head_b: Tensor::zeros(&[cfg.t_out]),
        })
    }

    /// Zero biases and selection logits (uniform maps), Gaussian weights
    /// scaled by fan-in.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for v in p.embed_w.data_mut() {
            *v = unit.sample(rng);
        }
        for layer in &mut p.layers {
            layer.fuse_in = FusionParams::random(cfg.channels, cfg.kernel, rng)?;
            layer.fuse_out = FusionParams::random(cfg.channels, cfg.kernel, rng)?;
        }
        let head = Normal::new(0.0, 1.0 / (cfg.channels as f64).sqrt()).expect("finite std");
        for v in p.head_w.data_mut() {
            *v = head.sample(rng);
        }
        Ok(p)
    }

    /// Tensor names in storage order.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["embed.weight".to_string(), "embed.bias".to_string()];
        for l in 0..self.layers.len() {
            for field in ["seasonal.w_se", "seasonal.w_se_hat", "short_term.w_st", "short_term.w_st_hat"] {
                names.push(format!("layer{l}.{field}"));
            }
            for branch in ["fuse_in", "fuse_out"] {
                for field in FUSION_FIELDS {
                    names.push(format!("layer{l}.{branch}.{field}"));
                }
            }
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embed_w, &self.embed_b];
        for l in &self.layers {
            out.extend([&l.seasonal.w_se, &l.seasonal.w_se_hat, &l.short_term.w_st, &l.short_term.w_st_hat]);
            out.extend(l.fuse_in.tensors());
            out.extend(l.fuse_out.tensors());
        }
        out.extend([&self.head_w, &self.head_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embed_w, &mut self.embed_b];
        for l in &mut self.layers {
            out.extend([
                &mut l.seasonal.w_se,
                &mut l.seasonal.w_se_hat,
                &mut l.short_term.w_st,
                &mut l.short_term.w_st_hat,
            ]);
            out.extend(l.fuse_in.tensors_mut());
            out.extend(l.fuse_out.tensors_mut());
        }
        out.extend([&mut self.head_w, &mut self.head_b]);
        out
    }

    pub fn stored_reals(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Overwrites every tensor from `values`, which must match in order and shape.
    pub fn assign(&mut self, values: &[Tensor]) -> Result<()> {
        let mut slots = self.tensors_mut();
        if slots.len() != values.len() {
            return Err(Error::shape(
                "ModelParams::assign",
                format!("expected {} tensors, got {}", slots.len(), values.len()),
            ));
        }
        for (i, (slot, v)) in slots.iter_mut().zip(values).enumerate() {
            if slot.shape() != v.shape() {
                return Err(Error::shape(
                    "ModelParams::assign",
                    format!("tensor {i}: expected {:?}, got {:?}", slot.shape(), v.shape()),
                ));
            }
            **slot = v.clone();
        }
        Ok(())
    }

    pub fn on_tape(&self, tape: &mut Tape) -> ParamVars {
        let all: Vec<Var> = self.tensors().into_iter().map(|t| tape.param(t.clone())).collect();
        ParamVars::from_vars(all, self.layers.len()).expect("one var per tensor")
    }
}

impl ParamVars {
    /// Groups `all`, given in [`ModelParams::names`] order, for a model of
    /// `layers` layers.
    pub fn from_vars(all: Vec<Var>, layers: usize) -> Result<Self> {
        let per_layer = 4 + 2 * FUSION_FIELDS.len();
        if all.len() != 4 + layers * per_layer {
            return Err(Error::Invalid(format!(
                "{} vars do not describe a {layers}-layer model",
                all.len()
            )));
        }
        let fusion = |at: usize| FusionVars {
            conv_a: all[at],
            bias_a: all[at + 1],
            conv_b: all[at + 2],
            bias_b: all[at + 3],
            conv_mix: all[at + 4],
            bias_mix: all[at + 5],
        };
        let layers = (0..layers)
            .map(|l| {
                let at = 2 + l * per_layer;
                LayerVars {
                    w_se: all[at],
                    w_se_hat: all[at + 1],
                    w_st: all[at + 2],
                    w_st_hat: all[at + 3],
                    fuse_in: fusion(at + 4),
                    fuse_out: fusion(at + 10),
                }
            })
            .collect();
        let n = all.len();
        Ok(ParamVars {
            embed_w: all[0],
            embed_b: all[1],
            layers,
            head_w: all[n - 2],
            head_b: all[n - 1],
            all,
        })
    }
}
