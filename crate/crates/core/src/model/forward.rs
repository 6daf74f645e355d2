use std::sync::Arc;

use super::config::ModelConfig;
use super::params::{LayerVars, ModelParams, ParamVars};
use crate::attnnorm::{attn_norm_spatial_var, attn_norm_temporal_var, ComponentTriple, TapedTriple};
use crate::error::{Error, Result};
use crate::fusion::polynomial_regression_var;
use crate::numcore::{Mask, Tape, Tensor, Var};
use crate::selection::{build_long_term_maps, spatial_map_var, MapLayout};

/// A validated configuration with its selection-map layouts prepared once.
#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    lt_in: Tensor,
    lt_out: Tensor,
    se_in: MapLayout,
    se_out: MapLayout,
    st_in: MapLayout,
    st_out: MapLayout,
}

/// Tape handles for one layer's components and horizon features.
#[derive(Debug, Clone)]
pub struct TapedLayer {
    pub input: Var,
    pub long_term: TapedTriple,
    pub seasonal: TapedTriple,
    pub short_term: TapedTriple,
    pub spatial: Option<TapedTriple>,
    /// `(mu_hat, residual_hat)` per component, spatial last.
    pub extrapolated: [(Var, Var); 4],
    /// Fused horizon features, `N x T_out x d`.
    pub horizon: Var,
    /// Fused inference output, the next layer's input.
    pub output: Var,
}

#[derive(Debug, Clone)]
pub struct TapedForward {
    pub forecast: Var,
    pub layers: Vec<TapedLayer>,
}

#[derive(Debug, Clone)]
pub struct LayerDiagnostics {
    pub long_term: ComponentTriple,
    pub seasonal: ComponentTriple,
    pub short_term: ComponentTriple,
    /// `None` when the spatial component is disabled.
    pub spatial: Option<ComponentTriple>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// `N x T_out`, on the scale of the input window.
    pub forecast: Tensor,
    pub layers: Vec<LayerDiagnostics>,
}

impl Model {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (lt_in, lt_out) = build_long_term_maps(cfg.t_in, cfg.t_out)?;
        Ok(Self {
            lt_in: lt_in.values().clone(),
            lt_out: lt_out.values().clone(),
            se_in: MapLayout::seasonal_inference(cfg.cycle, cfg.t_in)?,
            se_out: MapLayout::seasonal_extrapolation(cfg.cycle, cfg.t_in, cfg.t_out)?,
            st_in: MapLayout::short_term_inference(cfg.short_window, cfg.t_in)?,
            st_out: MapLayout::short_term_extrapolation(cfg.short_window, cfg.t_in, cfg.t_out)?,
            cfg,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn check_params(&self, params: &ModelParams) -> Result<()> {
        let want = ModelParams::zeros(&self.cfg)?;
        if want.layers.len() != params.layers.len() {
            return Err(Error::shape(
                "model parameters",
                format!("expected {} layers, got {}", want.layers.len(), params.layers.len()),
            ));
        }
        for ((name, a), b) in want.names().iter().zip(want.tensors()).zip(params.tensors()) {
            if a.shape() != b.shape() {
                return Err(Error::shape(
                    "model parameters",
                    format!("{name}: expected {:?}, got {:?}", a.shape(), b.shape()),
                ));
            }
        }
        Ok(())
    }

    fn check_window(&self, window: &Tensor) -> Result<()> {
        if window.shape() != [self.cfg.n_series, self.cfg.t_in] {
            return Err(Error::shape(
                "forward",
                format!(
                    "window {:?} does not match {} series x {} steps",
                    window.shape(),
                    self.cfg.n_series,
                    self.cfg.t_in
                ),
            ));
        }
        Ok(())
    }

    /// Records the forward pass of one `N x T_in` window.
    ///
    /// The head reads the sum of every layer's horizon features plus the
    /// long-term extrapolation of the last layer's output, so both fusion
    /// blocks of every layer reach the forecast.
    pub fn forward_var(&self, tape: &mut Tape, pv: &ParamVars, window: &Tensor) -> Result<TapedForward> {
        self.check_window(window)?;
        let cfg = &self.cfg;
        let x = tape.constant(window.reshaped(&[cfg.n_series, cfg.t_in, 1])?);
        let mut h = tape.causal_conv1d(x, pv.embed_w, pv.embed_b)?;
        let lt_in = tape.constant(self.lt_in.clone());
        let lt_out = tape.constant(self.lt_out.clone());

        let mut layers: Vec<TapedLayer> = Vec::with_capacity(pv.layers.len());
        let mut features: Option<Var> = None;
        for lv in &pv.layers {
            let layer = self.layer_var(tape, lv, h, lt_in, lt_out)?;
            h = layer.output;
            features = Some(match features {
                Some(f) => tape.add(f, layer.horizon)?,
                None => layer.horizon,
            });
            layers.push(layer);
        }
        let tail = tape.time_map(lt_out, h, None)?;
        let features = match features {
            Some(f) => tape.add(f, tail)?,
            None => tail,
        };
        let forecast = tape.readout(features, pv.head_w, pv.head_b)?;
        Ok(TapedForward { forecast, layers })
    }

    fn layer_var(&self, tape: &mut Tape, lv: &LayerVars, h: Var, lt_in: Var, lt_out: Var) -> Result<TapedLayer> {
        let cfg = &self.cfg;
        let eps = cfg.eps;

        let lt = attn_norm_temporal_var(tape, h, lt_in, None, eps)?;
        let i_se = self.se_in.build_var(tape, lv.w_se)?;
        let se = attn_norm_temporal_var(tape, lt.residual, i_se, Some(self.se_in.support().clone()), eps)?;
        let i_st = self.st_in.build_var(tape, lv.w_st)?;
        let st = attn_norm_temporal_var(tape, se.residual, i_st, Some(self.st_in.support().clone()), eps)?;
        let si = if cfg.spatial {
            let i_si = spatial_map_var(tape, st.residual)?;
            Some(attn_norm_spatial_var(tape, st.residual, i_si, eps)?)
        } else {
            None
        };

        let zeros_in = tape.constant(Tensor::zeros(&[cfg.n_series, cfg.t_in, cfg.channels]));
        let (r_si, mu_si) = si.map_or((zeros_in, zeros_in), |s| (s.residual, s.mu));
        let s = tape.concat_channels(&[lt.residual, lt.mu, se.residual, se.mu, st.residual, st.mu, r_si, mu_si])?;
        let output = polynomial_regression_var(tape, s, &lv.fuse_in)?;

        let e_se = self.se_out.build_var(tape, lv.w_se_hat)?;
        let e_st = self.st_out.build_var(tape, lv.w_st_hat)?;
        let mut hat = |map: Var, support: Option<&Arc<Mask>>, tr: &TapedTriple| -> Result<(Var, Var)> {
            Ok((
                tape.time_map(map, tr.mu, support.cloned())?,
                tape.time_map(map, tr.residual, support.cloned())?,
            ))
        };
        let lt_hat = hat(lt_out, None, &lt)?;
        let se_hat = hat(e_se, Some(self.se_out.support()), &se)?;
        let st_hat = hat(e_st, Some(self.st_out.support()), &st)?;
        let zeros_out = tape.constant(Tensor::zeros(&[cfg.n_series, cfg.t_out, cfg.channels]));
        let si_hat = (zeros_out, zeros_out);

        let s_hat = tape.concat_channels(&[
            lt_hat.1, lt_hat.0, se_hat.1, se_hat.0, st_hat.1, st_hat.0, si_hat.1, si_hat.0,
        ])?;
        let horizon = polynomial_regression_var(tape, s_hat, &lv.fuse_out)?;

        Ok(TapedLayer {
            input: h,
            long_term: lt,
            seasonal: se,
            short_term: st,
            spatial: si,
            extrapolated: [lt_hat, se_hat, st_hat, si_hat],
            horizon,
            output,
        })
    }

    /// Forecast plus per-layer component diagnostics.
    pub fn forward(&self, params: &ModelParams, window: &Tensor) -> Result<Forward> {
        self.check_params(params)?;
        let mut tape = Tape::new();
        let pv = params.on_tape(&mut tape);
        let out = self.forward_var(&mut tape, &pv, window)?;
        let triple = |tr: &TapedTriple, hat: (Var, Var)| ComponentTriple {
            mu: tape.value(tr.mu).clone(),
            sigma: tape.value(tr.sigma).clone(),
            residual: tape.value(tr.residual).clone(),
            mu_hat: Some(tape.value(hat.0).clone()),
            residual_hat: Some(tape.value(hat.1).clone()),
        };
        let layers = out
            .layers
            .iter()
            .map(|l| LayerDiagnostics {
                long_term: triple(&l.long_term, l.extrapolated[0]),
                seasonal: triple(&l.seasonal, l.extrapolated[1]),
                short_term: triple(&l.short_term, l.extrapolated[2]),
                spatial: l.spatial.as_ref().map(|s| triple(s, l.extrapolated[3])),
            })
            .collect();
        Ok(Forward {
            forecast: tape.value(out.forecast).clone(),
            layers,
        })
    }

    /// Forecast only.
    pub fn predict(&self, params: &ModelParams, window: &Tensor) -> Result<Tensor> {
        self.check_params(params)?;
        let mut tape = Tape::new();
        let pv = params.on_tape(&mut tape);
        let out = self.forward_var(&mut tape, &pv, window)?;
        Ok(tape.value(out.forecast).clone())
    }

    /// MSE of one window and its gradient for every parameter tensor, in
    /// [`ModelParams::names`] order.
    pub fn loss_and_grads(&self, params: &ModelParams, window: &Tensor, target: &Tensor) -> Result<(f64, Vec<Tensor>)> {
        self.check_params(params)?;
        let mut tape = Tape::new();
        let pv = params.on_tape(&mut tape);
        let out = self.forward_var(&mut tape, &pv, window)?;
        if tape.value(out.forecast).shape() != target.shape() {
            return Err(Error::shape(
                "loss",
                format!(
                    "target {:?} does not match forecast {:?}",
                    target.shape(),
                    tape.value(out.forecast).shape()
                ),
            ));
        }
        let loss = tape.mse(out.forecast, target)?;
        let grads = tape.backward(loss)?;
        let value = tape.value(loss).data()[0];
        Ok((value, pv.all.iter().map(|&v| grads.wrt(v)).collect()))
    }
}
