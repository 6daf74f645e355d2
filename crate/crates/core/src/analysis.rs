//! Conditional correlation statistics, moving-average component control and
//! the decomposition distance check.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Residual norms at or below this fraction of the input norm count as zero.
pub const DEGENERATE_REL: f64 = 1e-10;

/// Control series laid out as columns over a shared set of observations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlSet {
    columns: Vec<Vec<f64>>,
}

impl ControlSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::Invalid("control columns differ in length".into()));
            }
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("control set holds non-finite values".into()));
        }
        Ok(Self { columns })
    }

    /// A single column of ones.
    pub fn intercept(n: usize) -> Self {
        Self {
            columns: vec![vec![1.0; n]],
        }
    }

    pub fn push(&mut self, column: Vec<f64>) -> Result<()> {
        if self.columns.first().is_some_and(|c| c.len() != column.len()) {
            return Err(Error::Invalid("control column length mismatch".into()));
        }
        self.columns.push(column);
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    fn observations(&self) -> Option<usize> {
        self.columns.first().map(Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub weights: Vec<f64>,
    pub residual: Vec<f64>,
}

/// Minimum-norm least-squares fit of `y` on the control columns.
pub fn least_squares_residual(y: &[f64], z: &ControlSet) -> Result<LeastSquares> {
    let Some(n) = z.observations() else {
        return Ok(LeastSquares {
            weights: Vec::new(),
            residual: y.to_vec(),
        });
    };
    if n != y.len() {
        return Err(Error::Invalid(format!("{} observations against {n} control rows", y.len())));
    }
    let p = z.dims();
    let a = DMatrix::from_fn(n, p, |i, j| z.columns[j][i]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = f64::EPSILON * n.max(p) as f64 * smax;
    let w = svd.solve(&b, tol).map_err(|e| Error::Invalid(e.to_string()))?;
    let fitted = a * &w;
    Ok(LeastSquares {
        weights: w.iter().copied().collect(),
        residual: y.iter().zip(fitted.iter()).map(|(v, f)| v - f).collect(),
    })
}

/// A correlation, or an explicit marker when a residual vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Correlation {
    Value(f64),
    Degenerate,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Correlation::Value(v) => Some(v),
            Correlation::Degenerate => None,
        }
    }

    pub fn is_degenerate(self) -> bool {
        self == Correlation::Degenerate
    }
}

impl std::fmt::Display for Correlation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Correlation::Value(v) => write!(f, "{v}"),
            Correlation::Degenerate => f.write_str("degenerate"),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn vanished(residual: &[f64], original: &[f64]) -> bool {
    let r = norm(residual);
    r == 0.0 || r <= DEGENERATE_REL * norm(original)
}

/// Correlation of the least-squares residuals of `x` and `y` on `z`.
pub fn conditional_correlation(x: &[f64], y: &[f64], z: &ControlSet) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!("series lengths {} and {} differ", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Invalid("need at least two observations".into()));
    }
    let rx = least_squares_residual(x, z)?.residual;
    let ry = least_squares_residual(y, z)?.residual;
    if vanished(&rx, x) || vanished(&ry, y) {
        return Ok(Correlation::Degenerate);
    }
    let dot: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    Ok(Correlation::Value((dot / (norm(&rx) * norm(&ry))).clamp(-1.0, 1.0)))
}

/// Lag-`tau` autocorrelation of the residual of `y` on `z`.
///
/// The denominator pairs the full residual sum of squares with the sum over
/// the lagged copy only: `sum_{i>=tau} R_i R_{i-tau} / (sqrt(sum_i R_i^2) *
/// sqrt(sum_{i>=tau} R_{i-tau}^2))`. Lag 0 returns 1.
pub fn conditional_autocorrelation(y: &[f64], z: &ControlSet, tau: usize) -> Result<Correlation> {
    let r = least_squares_residual(y, z)?.residual;
    residual_autocorrelation(&r, y, tau)
}

fn residual_autocorrelation(r: &[f64], y: &[f64], tau: usize) -> Result<Correlation> {
    let n = r.len();
    if tau >= n.max(1) {
        return Err(Error::Invalid(format!("lag {tau} needs more than {n} observations")));
    }
    if vanished(r, y) {
        return Ok(Correlation::Degenerate);
    }
    if tau == 0 {
        return Ok(Correlation::Value(1.0));
    }
    let num: f64 = (tau..n).map(|i| r[i] * r[i - tau]).sum();
    let lagged = norm(&r[..n - tau]);
    if lagged == 0.0 {
        return Ok(Correlation::Degenerate);
    }
    Ok(Correlation::Value((num / (norm(r) * lagged)).clamp(-1.0, 1.0)))
}

/// Autocorrelations for lags `1..=max_lag` of one residual.
pub fn autocorrelation_profile(y: &[f64], z: &ControlSet, max_lag: usize) -> Result<Vec<Correlation>> {
    let r = least_squares_residual(y, z)?.residual;
    (1..=max_lag).map(|tau| residual_autocorrelation(&r, y, tau)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageLabel {
    Raw,
    MinusLt,
    MinusSe,
    MinusSt,
}

impl StageLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StageLabel::Raw => "raw",
            StageLabel::MinusLt => "minus_lt",
            StageLabel::MinusSe => "minus_se",
            StageLabel::MinusSt => "minus_st",
        }
    }
}

/// One step of progressive control: `input = mu + sigma * residual`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStage {
    pub label: StageLabel,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub residual: Vec<f64>,
    /// The stage's component in original units, `mu` times the scales of
    /// earlier stages.
    pub contribution: Vec<f64>,
    /// Product of this and earlier stages' `sigma`.
    pub scale: Vec<f64>,
}

/// Moving-average controller settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSettings {
    pub cycle: usize,
    pub window: usize,
    /// Trailing length used by the long-term and seasonal stages; a multiple
    /// of `cycle`.
    pub history: usize,
    pub eps: f64,
}

impl ControlSettings {
    pub fn new(cycle: usize, window: usize, history: usize) -> Self {
        Self {
            cycle,
            window,
            history,
            eps: crate::attnnorm::EPS,
        }
    }

    fn validate(&self, len: usize) -> Result<()> {
        if self.cycle == 0 || self.window == 0 || self.history == 0 || !self.history.is_multiple_of(self.cycle) {
            return Err(Error::Config(format!(
                "need cycle, window >= 1 and history a positive multiple of cycle; got {:?}",
                (self.cycle, self.window, self.history)
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        if len < self.warmup() + 2 * self.cycle {
            return Err(Error::Data(format!(
                "series of {len} steps is too short; need at least {}",
                self.warmup() + 2 * self.cycle
            )));
        }
        Ok(())
    }

    /// First index at which every trailing window is complete.
    pub fn warmup(&self) -> usize {
        2 * self.history + self.window
    }
}

// Weighted mean and variance over trailing indices, each stage mirroring
// AttnNorm: mu = mean, sigma^2 = mean(x^2) - mu^2 + eps.
fn normalize_with(x: &[f64], eps: f64, support: impl Fn(usize) -> Vec<usize>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = x.len();
    let (mut mu, mut sigma, mut res) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for t in 0..n {
        let idx = support(t);
        let k = idx.len() as f64;
        let m = idx.iter().map(|&j| x[j]).sum::<f64>() / k;
        let m2 = idx.iter().map(|&j| x[j] * x[j]).sum::<f64>() / k;
        let s = (m2 - m * m).max(0.0) + eps;
        mu[t] = m;
        sigma[t] = s.sqrt();
        res[t] = (x[t] - m) / sigma[t];
    }
    (mu, sigma, res)
}

/// Progressively removes the long-term, seasonal and short-term components
/// with trailing (causal) windows that include the current step. Windows
/// near the start are truncated and renormalized.
pub fn control_components(y: &[f64], settings: &ControlSettings) -> Result<Vec<ResidualStage>> {
    settings.validate(y.len())?;
    let ControlSettings {
        cycle,
        window,
        history,
        eps,
    } = *settings;
    let n = y.len();
    let mut stages = vec![ResidualStage {
        label: StageLabel::Raw,
        mu: vec![0.0; n],
        sigma: vec![1.0; n],
        residual: y.to_vec(),
        contribution: vec![0.0; n],
        scale: vec![1.0; n],
    }];

    let long = |t: usize| ((t + 1).saturating_sub(history)..=t).collect::<Vec<_>>();
    let seasonal = |t: usize| {
        let lo = (t + 1).saturating_sub(history);
        (0..history / cycle).map(|k| k * cycle).take_while(|&b| b <= t && t - b >= lo).map(|b| t - b).collect()
    };
    let short = |t: usize| ((t + 1).saturating_sub(window)..=t).collect::<Vec<_>>();

    let steps: [(StageLabel, &dyn Fn(usize) -> Vec<usize>); 3] = [
        (StageLabel::MinusLt, &long),
        (StageLabel::MinusSe, &seasonal),
        (StageLabel::MinusSt, &short),
    ];
    for (label, support) in steps {
        let prev = stages.last().expect("raw stage");
        let (mu, sigma, residual) = normalize_with(&prev.residual, eps, support);
        let contribution = mu.iter().zip(&prev.scale).map(|(m, s)| m * s).collect();
        let scale = sigma.iter().zip(&prev.scale).map(|(a, b)| a * b).collect();
        stages.push(ResidualStage {
            label,
            mu,
            sigma,
            residual,
            contribution,
            scale,
        });
    }
    Ok(stages)
}

/// Which controlled components enter the control set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ControlChoice {
    pub long_term: bool,
    pub seasonal: bool,
    pub short_term: bool,
}

impl ControlChoice {
    pub fn all() -> Self {
        Self {
            long_term: true,
            seasonal: true,
            short_term: true,
        }
    }

    /// Parses a comma list over `lt`, `se`, `st`; empty or `none` selects nothing.
    pub fn parse(s: &str) -> Result<Self> {
        let mut c = Self::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty() && *p != "none") {
            match part {
                "lt" => c.long_term = true,
                "se" => c.seasonal = true,
                "st" => c.short_term = true,
                other => return Err(Error::Config(format!("unknown control component {other:?}"))),
            }
        }
        Ok(c)
    }
}

/// Observations and control set for conditional statistics of `y` given its
/// controlled components, restricted to steps after the warm-up.
///
/// `Z` holds an intercept, the long-term and seasonal contributions, and lags
/// `1..=window` of the series left after the long-term and seasonal stages
/// (in original units).
pub fn component_controls(y: &[f64], settings: &ControlSettings, choice: ControlChoice) -> Result<(Vec<f64>, ControlSet)> {
    let stages = control_components(y, settings)?;
    let start = settings.warmup();
    let obs = y[start..].to_vec();
    let m = obs.len();
    let mut z = ControlSet::intercept(m);
    if choice.long_term {
        z.push(stages[1].contribution[start..].to_vec())?;
    }
    if choice.seasonal {
        z.push(stages[2].contribution[start..].to_vec())?;
    }
    if choice.short_term {
        let pre: Vec<f64> = stages[2].residual.iter().zip(&stages[2].scale).map(|(r, s)| r * s).collect();
        for lag in 1..=settings.window {
            z.push((start..y.len()).map(|t| pre[t - lag]).collect())?;
        }
    }
    Ok((obs, z))
}

/// A triplet `x_k = (a_k, b_k)` with `a_1 = a_2`, `b_2 = b_3` and `a_1 != a_3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub a: [Vec<f64>; 3],
    pub b: [Vec<f64>; 3],
}

impl Triplet {
    pub fn new(a: [Vec<f64>; 3], b: [Vec<f64>; 3]) -> Result<Self> {
        if a[0] != a[1] || b[1] != b[2] {
            return Err(Error::Invalid("triplet needs a1 = a2 and b2 = b3".into()));
        }
        if a[0] == a[2] {
            return Err(Error::Invalid("triplet needs a1 != a3".into()));
        }
        Ok(Self { a, b })
    }

    /// `(|D(x1) - D(x2)|, |D(x1) - D(x3)|)` with `D(x) = (a, b)` stacked.
    pub fn distances(&self) -> (f64, f64) {
        let sq = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
        let d12 = sq(&self.a[0], &self.a[1]) + sq(&self.b[0], &self.b[1]);
        let d13 = sq(&self.a[0], &self.a[2]) + sq(&self.b[0], &self.b[2]);
        (d12.sqrt(), d13.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub trials: usize,
    pub dim: usize,
    pub noise: bool,
    pub passed: bool,
    /// Trials with `|D(x1) - D(x2)| > |D(x1) - D(x3)|` (deterministic variant).
    pub violations: usize,
    /// Draws discarded because they broke the triplet precondition.
    pub rejected: usize,
    pub mean_d12_sq: f64,
    pub mean_d13_sq: f64,
    /// Standard error of the mean of `d13^2 - d12^2`.
    pub std_error: f64,
}

fn gaussian_vec<R: Rng>(rng: &mut R, mean: &[f64], std: f64) -> Vec<f64> {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    mean.iter().map(|m| m + std * unit.sample(rng)).collect()
}

/// Draws one triplet; the deterministic variant ties components exactly, the
/// noisy one draws each from a Gaussian mixture whose tied members share a
/// mixture component.
fn draw_triplet<R: Rng>(rng: &mut R, dim: usize, noise: bool, rejected: &mut usize) -> Triplet {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let centre = |rng: &mut R| -> Vec<f64> { (0..dim).map(|_| 3.0 * unit.sample(rng)).collect() };
        let (ma, ma3, mb1, mb) = (centre(rng), centre(rng), centre(rng), centre(rng));
        let (a, b) = if noise {
            let s = 0.5;
            (
                [gaussian_vec(rng, &ma, s), gaussian_vec(rng, &ma, s), gaussian_vec(rng, &ma3, s)],
                [gaussian_vec(rng, &mb1, s), gaussian_vec(rng, &mb, s), gaussian_vec(rng, &mb, s)],
            )
        } else {
            ([ma.clone(), ma, ma3], [mb1, mb.clone(), mb])
        };
        if noise {
            // noisy members are compared in expectation, not tied exactly
            return Triplet { a, b };
        }
        match Triplet::new(a, b) {
            Ok(t) => return t,
            Err(_) => *rejected += 1,
        }
    }
}

/// Checks `|D(x1) - D(x2)| <= |D(x1) - D(x3)|` on `trials` random triplets.
///
/// Without noise every trial must satisfy the inequality. With noise the
/// squared version must hold for the Monte Carlo means within three standard
/// errors. Trial `i` uses stream `i` of the seeded generator.
pub fn decomposition_distance_check(trials: usize, dim: usize, noise: bool, seed: u64) -> Result<DecompositionReport> {
    if trials < 2 || dim == 0 {
        return Err(Error::Config("need at least two trials and dim >= 1".into()));
    }
    let draws: Vec<(f64, f64, usize)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut rejected = 0;
            let t = draw_triplet(&mut rng, dim, noise, &mut rejected);
            let (d12, d13) = t.distances();
            (d12, d13, rejected)
        })
        .collect();
    let n = trials as f64;
    let violations = draws.iter().filter(|(d12, d13, _)| d12 > d13).count();
    let rejected = draws.iter().map(|d| d.2).sum();
    let mean_d12_sq = draws.iter().map(|d| d.0 * d.0).sum::<f64>() / n;
    let mean_d13_sq = draws.iter().map(|d| d.1 * d.1).sum::<f64>() / n;
    let diffs: Vec<f64> = draws.iter().map(|d| d.1 * d.1 - d.0 * d.0).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    let passed = if noise { mean >= -3.0 * std_error } else { violations == 0 };
    Ok(DecompositionReport {
        trials,
        dim,
        noise,
        passed,
        violations,
        rejected,
        mean_d12_sq,
        mean_d13_sq,
        std_error,
    })
}
