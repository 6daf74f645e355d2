//! Inference and extrapolation maps for the long-term, seasonal, short-term
//! and spatial components.
//!
//! Every map is row-stochastic on its support. Trainable maps are produced by
//! scattering a small logit tensor into a masked matrix ([`MapLayout`]) and
//! applying a masked row softmax, so the same layout serves the taped model
//! and the plain builders below.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numcore::{self, Mask, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    LongTermInference,
    LongTermExtrapolation,
    SeasonalInference,
    SeasonalExtrapolation,
    ShortTermInference,
    ShortTermExtrapolation,
    SpatialInference,
}

/// A materialized selection map with its support pattern.
#[derive(Debug, Clone)]
pub struct SelectionMap {
    kind: MapKind,
    values: Tensor,
    support: Mask,
}

impl SelectionMap {
    fn new(kind: MapKind, values: Tensor, support: Mask) -> Self {
        Self {
            kind,
            values,
            support,
        }
    }

    /// Wraps explicit values; the support is the set of nonzero entries.
    pub fn from_dense(kind: MapKind, values: Tensor) -> Result<Self> {
        let (r, c) = values.dims2()?;
        let support = Mask::from_fn(r, c, |i, j| values.at2(i, j) != 0.0);
        Ok(Self::new(kind, values, support))
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn support(&self) -> &Mask {
        &self.support
    }

    pub fn rows(&self) -> usize {
        self.support.rows()
    }

    pub fn cols(&self) -> usize {
        self.support.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.at2(i, j)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        let c = self.cols();
        self.values.data()[i * c..(i + 1) * c].iter().sum()
    }

    /// Checks that supported rows sum to one within `tol`, that entries off
    /// the support are exactly zero, and that only short-term extrapolation
    /// has unsupported rows.
    pub fn check_row_stochastic(&self, tol: f64) -> Result<()> {
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                let v = self.get(i, j);
                if !self.support.get(i, j) && v != 0.0 {
                    return Err(Error::Invalid(format!(
                        "{:?}: entry ({i},{j}) = {v} lies off the support",
                        self.kind
                    )));
                }
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::Invalid(format!("{:?}: entry ({i},{j}) = {v}", self.kind)));
                }
            }
            if self.support.row_has_support(i) {
                let s = self.row_sum(i);
                if (s - 1.0).abs() > tol {
                    return Err(Error::Invalid(format!("{:?}: row {i} sums to {s}", self.kind)));
                }
            } else if self.kind != MapKind::ShortTermExtrapolation {
                return Err(Error::Invalid(format!("{:?}: row {i} has no support", self.kind)));
            }
        }
        Ok(())
    }
}

/// Seasonal logits: `w_se` is `tau_in x tau_in`, `w_se_hat` is `tau_out x tau_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalParams {
    pub cycle: usize,
    pub w_se: Tensor,
    pub w_se_hat: Tensor,
}

impl SeasonalParams {
    /// Zero logits, which give uniform weight across cycles.
    pub fn zeros(cycle: usize, t_in: usize, t_out: usize) -> Result<Self> {
        let tau_in = tau_in(cycle, t_in)?;
        let tau_out = tau_out(cycle, t_out);
        Ok(Self {
            cycle,
            w_se: Tensor::zeros(&[tau_in, tau_in]),
            w_se_hat: Tensor::zeros(&[tau_out, tau_in]),
        })
    }
}

/// Short-term logits: `w_st` over lags `0..window`, `w_st_hat` is `window x window`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortTermParams {
    pub window: usize,
    pub w_st: Tensor,
    pub w_st_hat: Tensor,
}

impl ShortTermParams {
    pub fn zeros(window: usize) -> Self {
        Self {
            window,
            w_st: Tensor::zeros(&[window]),
            w_st_hat: Tensor::zeros(&[window, window]),
        }
    }
}

/// Number of whole cycles in the input window; the window must be a multiple
/// of the cycle.
pub fn tau_in(cycle: usize, t_in: usize) -> Result<usize> {
    if cycle == 0 {
        return Err(Error::Config("cycle length must be at least 1".into()));
    }
    if t_in == 0 || !t_in.is_multiple_of(cycle) {
        return Err(Error::Config(format!(
            "input length {t_in} is not a positive multiple of cycle {cycle}"
        )));
    }
    Ok(t_in / cycle)
}

/// Smallest number of cycles covering the horizon.
pub fn tau_out(cycle: usize, t_out: usize) -> usize {
    t_out.div_ceil(cycle)
}

fn check_window(window: usize, t_in: usize) -> Result<()> {
    if window == 0 || window > t_in {
        return Err(Error::Config(format!(
            "short-term window {window} must lie in 1..={t_in}"
        )));
    }
    Ok(())
}

/// Placement of trainable logits inside a selection map.
///
/// The first `logit_rows` rows are a masked softmax over gathered logits;
/// the remaining rows up to `rows` are zero padding.
#[derive(Debug, Clone)]
pub struct MapLayout {
    kind: MapKind,
    logit_rows: usize,
    rows: usize,
    cols: usize,
    logit_shape: Vec<usize>,
    index: Arc<Vec<Option<usize>>>,
    softmax_mask: Arc<Mask>,
    support: Arc<Mask>,
}

impl MapLayout {
    fn from_fn(
        kind: MapKind,
        logit_rows: usize,
        rows: usize,
        cols: usize,
        logit_shape: Vec<usize>,
        f: impl Fn(usize, usize) -> Option<usize>,
    ) -> Self {
        let mut index = Vec::with_capacity(logit_rows * cols);
        for i in 0..logit_rows {
            for j in 0..cols {
                index.push(f(i, j));
            }
        }
        let bits: Vec<bool> = index.iter().map(Option::is_some).collect();
        let softmax_mask = Mask::new(logit_rows, cols, bits.clone()).expect("layout mask");
        let mut support_bits = bits;
        support_bits.resize(rows * cols, false);
        let support = Mask::new(rows, cols, support_bits).expect("layout support");
        Self {
            kind,
            logit_rows,
            rows,
            cols,
            logit_shape,
            index: Arc::new(index),
            softmax_mask: Arc::new(softmax_mask),
            support: Arc::new(support),
        }
    }

    /// `I^se(i, j)` draws on `W_se(i / c, j / c)` where `i` and `j` share a phase.
    pub fn seasonal_inference(cycle: usize, t_in: usize) -> Result<Self> {
        let tau = tau_in(cycle, t_in)?;
        Ok(Self::from_fn(
            MapKind::SeasonalInference,
            t_in,
            t_in,
            t_in,
            vec![tau, tau],
            |i, j| (i + t_in - j).is_multiple_of(cycle).then(|| (i / cycle) * tau + j / cycle),
        ))
    }

    /// `E^se(i, j)` draws on `W_se_hat(i / c, j / c)` for forward step `i`.
    pub fn seasonal_extrapolation(cycle: usize, t_in: usize, t_out: usize) -> Result<Self> {
        let tau = tau_in(cycle, t_in)?;
        Ok(Self::from_fn(
            MapKind::SeasonalExtrapolation,
            t_out,
            t_out,
            t_in,
            vec![tau_out(cycle, t_out), tau],
            |i, j| (i + t_in - j).is_multiple_of(cycle).then(|| (i / cycle) * tau + j / cycle),
        ))
    }

    /// `I^st(i, j)` draws on `w_st` at lag `i - j` for lags inside the window.
    /// Rows near the start see fewer lags and are renormalized over them.
    pub fn short_term_inference(window: usize, t_in: usize) -> Result<Self> {
        check_window(window, t_in)?;
        Ok(Self::from_fn(
            MapKind::ShortTermInference,
            t_in,
            t_in,
            t_in,
            vec![window],
            |i, j| (j <= i && i - j < window).then(|| i - j),
        ))
    }

    /// `E^st(i, j)` draws on `w_st_hat(i, j - (t_in - window))` over the last
    /// `window` input steps for the first `window` horizons; later horizons
    /// are zero.
    pub fn short_term_extrapolation(window: usize, t_in: usize, t_out: usize) -> Result<Self> {
        check_window(window, t_in)?;
        let start = t_in - window;
        Ok(Self::from_fn(
            MapKind::ShortTermExtrapolation,
            window.min(t_out),
            t_out,
            t_in,
            vec![window, window],
            |i, j| (j >= start).then(|| i * window + (j - start)),
        ))
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn support(&self) -> &Arc<Mask> {
        &self.support
    }

    fn check_logits(&self, logits: &Tensor) -> Result<()> {
        if logits.shape() != self.logit_shape.as_slice() {
            return Err(Error::shape(
                "selection logits",
                format!("{:?} expects {:?}, got {:?}", self.kind, self.logit_shape, logits.shape()),
            ));
        }
        Ok(())
    }

    /// Builds the map on a tape so gradients reach the logits.
    pub fn build_var(&self, tape: &mut Tape, logits: Var) -> Result<Var> {
        self.check_logits(tape.value(logits))?;
        let scattered = tape.gather(logits, self.index.clone(), &[self.logit_rows, self.cols])?;
        let map = tape.masked_row_softmax(scattered, self.softmax_mask.clone())?;
        if self.rows > self.logit_rows {
            tape.pad_rows(map, self.rows)
        } else {
            Ok(map)
        }
    }

    pub fn build(&self, logits: &Tensor) -> Result<SelectionMap> {
        self.check_logits(logits)?;
        let scattered = numcore::gather(logits, &self.index, &[self.logit_rows, self.cols])?;
        let map = numcore::masked_row_softmax(&scattered, &self.softmax_mask)?;
        let values = numcore::pad_rows(&map, self.rows)?;
        Ok(SelectionMap::new(self.kind, values, (*self.support).clone()))
    }
}

/// Constant maps with every entry `1 / t_in`: `(I^lt, E^lt)`.
pub fn build_long_term_maps(t_in: usize, t_out: usize) -> Result<(SelectionMap, SelectionMap)> {
    if t_in == 0 || t_out == 0 {
        return Err(Error::Config("long-term maps need t_in >= 1 and t_out >= 1".into()));
    }
    let w = 1.0 / t_in as f64;
    Ok((
        SelectionMap::new(
            MapKind::LongTermInference,
            Tensor::full(&[t_in, t_in], w),
            Mask::full(t_in, t_in),
        ),
        SelectionMap::new(
            MapKind::LongTermExtrapolation,
            Tensor::full(&[t_out, t_in], w),
            Mask::full(t_out, t_in),
        ),
    ))
}

pub fn build_seasonal_inference(p: &SeasonalParams, t_in: usize) -> Result<SelectionMap> {
    MapLayout::seasonal_inference(p.cycle, t_in)?.build(&p.w_se)
}

pub fn build_seasonal_extrapolation(p: &SeasonalParams, t_in: usize, t_out: usize) -> Result<SelectionMap> {
    MapLayout::seasonal_extrapolation(p.cycle, t_in, t_out)?.build(&p.w_se_hat)
}

pub fn build_short_term_inference(p: &ShortTermParams, t_in: usize) -> Result<SelectionMap> {
    MapLayout::short_term_inference(p.window, t_in)?.build(&p.w_st)
}

pub fn build_short_term_extrapolation(p: &ShortTermParams, t_in: usize, t_out: usize) -> Result<SelectionMap> {
    MapLayout::short_term_extrapolation(p.window, t_in, t_out)?.build(&p.w_st_hat)
}

/// Softmax over unscaled inner products of the vectorized `(steps x channels)`
/// blocks of each series, on a tape so gradients reach `h`.
pub fn spatial_map_var(tape: &mut Tape, h: Var) -> Result<Var> {
    let (n, t, c) = tape.value(h).dims3()?;
    let flat = tape.reshape(h, &[n, t * c])?;
    let flat_t = tape.transpose(flat)?;
    let gram = tape.matmul(flat, flat_t)?;
    tape.masked_row_softmax(gram, Arc::new(Mask::full(n, n)))
}

pub fn build_spatial_inference(h: &Tensor) -> Result<SelectionMap> {
    let (n, t, c) = h.dims3()?;
    let flat = h.reshaped(&[n, t * c])?;
    let gram = numcore::matmul(&flat, &numcore::transpose(&flat)?)?;
    let support = Mask::full(n, n);
    let values = numcore::masked_row_softmax(&gram, &support)?;
    Ok(SelectionMap::new(MapKind::SpatialInference, values, support))
}
