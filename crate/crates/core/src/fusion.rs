//! Polynomial-regression fusion of the eight component tensors of a layer.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::attnnorm::ComponentTriple;
use crate::error::{Error, Result};
use crate::numcore::{self, Tape, Tensor, Var};

/// Number of component slots fed to fusion.
pub const SLOTS: usize = 8;

/// Kernels are stored `k x in x out`, oldest tap first.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub conv_a: Tensor,
    pub bias_a: Tensor,
    pub conv_b: Tensor,
    pub bias_b: Tensor,
    pub conv_mix: Tensor,
    pub bias_mix: Tensor,
}

/// Tape handles mirroring [`FusionParams`].
#[derive(Debug, Clone, Copy)]
pub struct FusionVars {
    pub conv_a: Var,
    pub bias_a: Var,
    pub conv_b: Var,
    pub bias_b: Var,
    pub conv_mix: Var,
    pub bias_mix: Var,
}

impl FusionParams {
    pub fn zeros(channels: usize, kernel: usize) -> Result<Self> {
        if channels == 0 || kernel == 0 {
            return Err(Error::Config(format!(
                "fusion needs channels >= 1 and kernel >= 1, got {channels} and {kernel}"
            )));
        }
        let d = channels;
        Ok(Self {
            conv_a: Tensor::zeros(&[kernel, SLOTS * d, d]),
            bias_a: Tensor::zeros(&[d]),
            conv_b: Tensor::zeros(&[kernel, SLOTS * d, d]),
            bias_b: Tensor::zeros(&[d]),
            conv_mix: Tensor::zeros(&[1, d, d]),
            bias_mix: Tensor::zeros(&[d]),
        })
    }

    /// Gaussian kernels with standard deviation `1 / sqrt(fan_in)`, zero biases.
    pub fn random<R: Rng + ?Sized>(channels: usize, kernel: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(channels, kernel)?;
        for w in [&mut p.conv_a, &mut p.conv_b, &mut p.conv_mix] {
            let fan_in = w.shape()[0] * w.shape()[1];
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("finite std");
            for v in w.data_mut() {
                *v = normal.sample(rng);
            }
        }
        Ok(p)
    }

    pub fn channels(&self) -> usize {
        self.bias_a.len()
    }

    pub fn kernel(&self) -> usize {
        self.conv_a.shape()[0]
    }

    pub fn tensors(&self) -> [&Tensor; 6] {
        [&self.conv_a, &self.bias_a, &self.conv_b, &self.bias_b, &self.conv_mix, &self.bias_mix]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.conv_a,
            &mut self.bias_a,
            &mut self.conv_b,
            &mut self.bias_b,
            &mut self.conv_mix,
            &mut self.bias_mix,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn on_tape(&self, tape: &mut Tape) -> FusionVars {
        FusionVars {
            conv_a: tape.param(self.conv_a.clone()),
            bias_a: tape.param(self.bias_a.clone()),
            conv_b: tape.param(self.conv_b.clone()),
            bias_b: tape.param(self.bias_b.clone()),
            conv_mix: tape.param(self.conv_mix.clone()),
            bias_mix: tape.param(self.bias_mix.clone()),
        }
    }
}

/// `2 k (8d) d + d^2 + 3d`.
pub fn fusion_parameter_count(channels: usize, kernel: usize) -> usize {
    let d = channels;
    2 * kernel * SLOTS * d * d + d * d + 3 * d
}

/// Channel concatenation `[R^lt, mu^lt, R^se, mu^se, R^st, mu^st, R^si, mu^si]`.
///
/// A missing spatial triple fills its two slots with zeros.
pub fn concat_components(
    long_term: &ComponentTriple,
    seasonal: &ComponentTriple,
    short_term: &ComponentTriple,
    spatial: Option<&ComponentTriple>,
) -> Result<Tensor> {
    let zeros = Tensor::zeros(long_term.mu.shape());
    let (r_si, mu_si) = spatial.map_or((&zeros, &zeros), |s| (&s.residual, &s.mu));
    numcore::concat_channels(&[
        &long_term.residual,
        &long_term.mu,
        &seasonal.residual,
        &seasonal.mu,
        &short_term.residual,
        &short_term.mu,
        r_si,
        mu_si,
    ])
}

/// `conv_mix(conv_a(S) * conv_b(S)) + conv_a(S)`.
pub fn polynomial_regression_var(tape: &mut Tape, s: Var, p: &FusionVars) -> Result<Var> {
    let (_, _, c) = tape.value(s).dims3()?;
    let d = tape.value(p.bias_a).len();
    if c != SLOTS * d {
        return Err(Error::shape(
            "polynomial_regression",
            format!("expected {} input channels, got {c}", SLOTS * d),
        ));
    }
    let a = tape.causal_conv1d(s, p.conv_a, p.bias_a)?;
    let b = tape.causal_conv1d(s, p.conv_b, p.bias_b)?;
    let ab = tape.mul(a, b)?;
    let mixed = tape.causal_conv1d(ab, p.conv_mix, p.bias_mix)?;
    tape.add(mixed, a)
}

pub fn polynomial_regression(s: &Tensor, p: &FusionParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let sv = tape.constant(s.clone());
    let vars = FusionVars {
        conv_a: tape.constant(p.conv_a.clone()),
        bias_a: tape.constant(p.bias_a.clone()),
        conv_b: tape.constant(p.conv_b.clone()),
        bias_b: tape.constant(p.bias_b.clone()),
        conv_mix: tape.constant(p.conv_mix.clone()),
        bias_mix: tape.constant(p.bias_mix.clone()),
    };
    let out = polynomial_regression_var(&mut tape, sv, &vars)?;
    Ok(tape.value(out).clone())
}
