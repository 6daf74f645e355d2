//! Attention-based normalization along time or across series, and
//! extrapolation of the resulting components to the forecast horizon.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numcore::{Mask, Tape, Tensor, Var};
use crate::selection::SelectionMap;

/// Default variance floor.
pub const EPS: f64 = 1e-5;

/// Output of one AttnNorm block.
///
/// `mu_hat` and `residual_hat` are empty until [`extrapolate`] fills them.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTriple {
    pub mu: Tensor,
    pub sigma: Tensor,
    pub residual: Tensor,
    pub mu_hat: Option<Tensor>,
    pub residual_hat: Option<Tensor>,
}

/// Tape handles for the inference part of a block.
#[derive(Debug, Clone, Copy)]
pub struct TapedTriple {
    pub mu: Var,
    pub sigma: Var,
    pub residual: Var,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

// The variance of a convex combination is nonnegative, so this only trips on
// a map that is not row-stochastic or on non-finite input.
fn jensen_guard(tape: &Tape, var: Var, what: &str) -> Result<()> {
    if let Some(v) = tape.value(var).data().iter().find(|v| !(**v > 0.0)) {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{what}: variance {v}")));
        }
        return Err(Error::Invalid(format!("{what}: non-positive variance {v}")));
    }
    Ok(())
}

fn normalize(tape: &mut Tape, h: Var, mu: Var, second: Var, eps: f64, what: &str) -> Result<TapedTriple> {
    let mu_sq = tape.square(mu)?;
    let var = tape.sub(second, mu_sq)?;
    let var = tape.add_scalar(var, eps)?;
    jensen_guard(tape, var, what)?;
    let sigma = tape.sqrt(var)?;
    let centered = tape.sub(h, mu)?;
    let residual = tape.div(centered, sigma)?;
    Ok(TapedTriple { mu, sigma, residual })
}

/// Temporal AttnNorm of `h` (N x T_in x d) under a `T_in x T_in` map.
///
/// `support` restricts the map gradient to the entries a masked softmax can
/// move; pass `None` for constant maps.
pub fn attn_norm_temporal_var(
    tape: &mut Tape,
    h: Var,
    map: Var,
    support: Option<Arc<Mask>>,
    eps: f64,
) -> Result<TapedTriple> {
    check_eps(eps)?;
    let (_, t, _) = tape.value(h).dims3()?;
    if tape.value(map).shape() != [t, t] {
        return Err(Error::shape(
            "attn_norm_temporal",
            format!("map {:?} does not match {t} steps", tape.value(map).shape()),
        ));
    }
    let mu = tape.time_map(map, h, support.clone())?;
    let sq = tape.square(h)?;
    let second = tape.time_map(map, sq, support)?;
    normalize(tape, h, mu, second, eps, "attn_norm_temporal")
}

/// Spatial AttnNorm: the `N x N` map mixes series at each fixed step and channel.
pub fn attn_norm_spatial_var(tape: &mut Tape, h: Var, map: Var, eps: f64) -> Result<TapedTriple> {
    check_eps(eps)?;
    let (n, t, c) = tape.value(h).dims3()?;
    if tape.value(map).shape() != [n, n] {
        return Err(Error::shape(
            "attn_norm_spatial",
            format!("map {:?} does not match {n} series", tape.value(map).shape()),
        ));
    }
    let flat = tape.reshape(h, &[n, t * c])?;
    let mu = tape.matmul(map, flat)?;
    let sq = tape.square(flat)?;
    let second = tape.matmul(map, sq)?;
    let tr = normalize(tape, flat, mu, second, eps, "attn_norm_spatial")?;
    Ok(TapedTriple {
        mu: tape.reshape(tr.mu, &[n, t, c])?,
        sigma: tape.reshape(tr.sigma, &[n, t, c])?,
        residual: tape.reshape(tr.residual, &[n, t, c])?,
    })
}

fn untaped(
    h: &Tensor,
    map: &Tensor,
    build: impl FnOnce(&mut Tape, Var, Var) -> Result<TapedTriple>,
) -> Result<ComponentTriple> {
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let mv = tape.constant(map.clone());
    let tr = build(&mut tape, hv, mv)?;
    Ok(ComponentTriple {
        mu: tape.value(tr.mu).clone(),
        sigma: tape.value(tr.sigma).clone(),
        residual: tape.value(tr.residual).clone(),
        mu_hat: None,
        residual_hat: None,
    })
}

pub fn attn_norm_temporal(h: &Tensor, map: &SelectionMap, eps: f64) -> Result<ComponentTriple> {
    untaped(h, map.values(), |t, h, m| attn_norm_temporal_var(t, h, m, None, eps))
}

pub fn attn_norm_spatial(h: &Tensor, map: &SelectionMap, eps: f64) -> Result<ComponentTriple> {
    untaped(h, map.values(), |t, h, m| attn_norm_spatial_var(t, h, m, eps))
}

/// Fills `mu_hat = E mu` and `residual_hat = E residual`.
pub fn extrapolate(triple: &mut ComponentTriple, map: &SelectionMap) -> Result<()> {
    let e = map.values();
    triple.mu_hat = Some(crate::numcore::time_map(e, &triple.mu)?);
    triple.residual_hat = Some(crate::numcore::time_map(e, &triple.residual)?);
    Ok(())
}

/// Zero forecasts for the spatial component, shaped `N x t_out x d`.
pub fn extrapolate_spatial_zero(t_out: usize, n_series: usize, channels: usize) -> (Tensor, Tensor) {
    let z = Tensor::zeros(&[n_series, t_out, channels]);
    (z.clone(), z)
}
