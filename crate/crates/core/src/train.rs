//! L2 training with Adam, early stopping and MSE/MAE evaluation.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Normalizer, WindowSet};
use crate::error::{Error, Result};
use crate::model::{Model, ModelParams};
use crate::numcore::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            batch_size: 8,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("Adam needs betas in [0, 1) and a positive epsilon".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

fn check_same(pred: &Tensor, target: &Tensor, op: &'static str) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    if pred.is_empty() {
        return Err(Error::shape(op, "empty tensors"));
    }
    Ok(())
}

pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_same(pred, target, "mse")?;
    Ok(pred.data().iter().zip(target.data()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

pub fn mae(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_same(pred, target, "mae")?;
    Ok(pred.data().iter().zip(target.data()).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// First and second moment estimates per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(shapes: &[&Tensor]) -> Self {
        let zeros: Vec<Tensor> = shapes.iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} params, {} grads, {} moments", params.len(), grads.len(), state.m.len()),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        if p.shape() != grads[i].shape() {
            return Err(Error::shape("adam_step", format!("tensor {i}: {:?} vs {:?}", p.shape(), grads[i].shape())));
        }
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (k, (w, g)) in p.data_mut().iter_mut().zip(grads[i].data()).enumerate() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub val_mae: f64,
    /// Wall-clock duration of the epoch.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().min_by(|a, b| a.val_mse.total_cmp(&b.val_mse))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    MaxEpochs,
    /// Validation MSE did not improve for `patience` epochs.
    EarlyStopped,
    /// A non-finite loss or gradient appeared; the returned parameters are
    /// the last good ones.
    NonFinite { epoch: usize, batch: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (or the last good state on abort).
    pub params: ModelParams,
    pub history: History,
    pub best_epoch: Option<usize>,
    pub stop: StopReason,
}

/// Error metrics over every window of a set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub windows: usize,
}

fn metrics_of(pairs: Vec<(Tensor, Tensor)>) -> Result<Metrics> {
    let (mut se, mut ae, mut count) = (0.0, 0.0, 0usize);
    for (p, t) in &pairs {
        check_same(p, t, "metrics")?;
        for (a, b) in p.data().iter().zip(t.data()) {
            se += (a - b).powi(2);
            ae += (a - b).abs();
        }
        count += p.len();
    }
    if count == 0 {
        return Err(Error::Data("no windows to evaluate".into()));
    }
    Ok(Metrics {
        mse: se / count as f64,
        mae: ae / count as f64,
        windows: pairs.len(),
    })
}

/// Model forecasts for every window, in window order.
pub fn predict_all(model: &Model, params: &ModelParams, windows: &WindowSet) -> Result<Vec<(Tensor, Tensor)>> {
    (0..windows.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = windows.get(i)?;
            Ok((model.predict(params, &x)?, y))
        })
        .collect()
}

/// MSE and MAE of the model over `windows`; with a normalizer both forecast
/// and target are mapped back to the original scale first.
pub fn evaluate(
    model: &Model,
    params: &ModelParams,
    windows: &WindowSet,
    normalizer: Option<&Normalizer>,
) -> Result<Metrics> {
    let pairs = predict_all(model, params, windows)?;
    metrics_of(denormalize_pairs(pairs, normalizer)?)
}

fn denormalize_pairs(pairs: Vec<(Tensor, Tensor)>, normalizer: Option<&Normalizer>) -> Result<Vec<(Tensor, Tensor)>> {
    match normalizer {
        None => Ok(pairs),
        Some(n) => pairs.into_iter().map(|(p, t)| Ok((n.invert(&p)?, n.invert(&t)?))).collect(),
    }
}

/// Repeats the value observed one cycle before each horizon step.
pub fn seasonal_naive(window: &Tensor, cycle: usize, t_out: usize) -> Result<Tensor> {
    let (n, t_in) = window.dims2()?;
    if cycle == 0 || cycle > t_in {
        return Err(Error::Config(format!("seasonal-naive cycle {cycle} must lie in 1..={t_in}")));
    }
    let mut out = Vec::with_capacity(n * t_out);
    for s in 0..n {
        for h in 0..t_out {
            let back = cycle * (h / cycle + 1);
            out.push(window.at2(s, t_in + h - back));
        }
    }
    Tensor::matrix(n, t_out, out)
}

pub fn evaluate_seasonal_naive(windows: &WindowSet, cycle: usize, t_out: usize, normalizer: Option<&Normalizer>) -> Result<Metrics> {
    let pairs = (0..windows.len())
        .map(|i| {
            let (x, y) = windows.get(i)?;
            Ok((seasonal_naive(&x, cycle, t_out)?, y))
        })
        .collect::<Result<Vec<_>>>()?;
    metrics_of(denormalize_pairs(pairs, normalizer)?)
}

/// Summed-then-averaged gradient of a batch; windows run in parallel but are
/// reduced in index order so results do not depend on scheduling.
fn batch_gradient(model: &Model, params: &ModelParams, windows: &WindowSet, batch: &[usize]) -> Result<(Vec<f64>, Vec<Tensor>)> {
    let per: Vec<(f64, Vec<Tensor>)> = batch
        .par_iter()
        .map(|&i| {
            let (x, y) = windows.get(i)?;
            model.loss_and_grads(params, &x, &y)
        })
        .collect::<Result<_>>()?;
    let mut losses = Vec::with_capacity(per.len());
    let mut sum: Option<Vec<Tensor>> = None;
    for (loss, grads) in per {
        losses.push(loss);
        match &mut sum {
            None => sum = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                        *x += y;
                    }
                }
            }
        }
    }
    let mut grads = sum.unwrap_or_default();
    let inv = 1.0 / batch.len() as f64;
    for g in &mut grads {
        for v in g.data_mut() {
            *v *= inv;
        }
    }
    Ok((losses, grads))
}

/// Trains from `init`, calling `observe` after each epoch.
pub fn train(
    model: &Model,
    init: ModelParams,
    train_set: &WindowSet,
    val_set: &WindowSet,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.check_params(&init)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init;
    let mut state = AdamState::new(&params.tensors());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (losses, mut grads) = match batch_gradient(model, &params, train_set, batch) {
                Err(Error::NonFinite(_)) => (vec![f64::NAN], Vec::new()),
                other => other?,
            };
            let finite = losses.iter().all(|l| l.is_finite()) && grads.iter().all(Tensor::is_finite);
            if !finite {
                let params = best.map_or(params, |(_, _, p)| p);
                return Ok(TrainOutcome {
                    best_epoch: history.best().map(|r| r.epoch),
                    params,
                    history,
                    stop: StopReason::NonFinite { epoch, batch: b },
                });
            }
            loss_sum += losses.iter().sum::<f64>();
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            let before = params.clone();
            adam_step(&mut params.tensors_mut(), &grads, &mut state, cfg)?;
            if !params.is_finite() {
                let params = best.map_or(before, |(_, _, p)| p);
                return Ok(TrainOutcome {
                    best_epoch: history.best().map(|r| r.epoch),
                    params,
                    history,
                    stop: StopReason::NonFinite { epoch, batch: b },
                });
            }
        }
        let val = match evaluate(model, &params, val_set, None) {
            Err(Error::NonFinite(_)) => Metrics {
                mse: f64::NAN,
                mae: f64::NAN,
                windows: val_set.len(),
            },
            other => other?,
        };
        let record = EpochRecord {
            epoch,
            train_mse: loss_sum / train_set.len() as f64,
            val_mse: val.mse,
            val_mae: val.mae,
            seconds: started.elapsed().as_secs_f64(),
        };
        observe(&record);
        history.records.push(record);
        if !val.mse.is_finite() {
            let params = best.map_or(params, |(_, _, p)| p);
            return Ok(TrainOutcome {
                best_epoch: history.best().map(|r| r.epoch),
                params,
                history,
                stop: StopReason::NonFinite { epoch, batch: order.len().div_ceil(cfg.batch_size) },
            });
        }
        if best.as_ref().is_none_or(|(v, _, _)| val.mse < *v) {
            best = Some((val.mse, epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                let (_, e, p) = best.expect("best exists after first epoch");
                return Ok(TrainOutcome {
                    params: p,
                    history,
                    best_epoch: Some(e),
                    stop: StopReason::EarlyStopped,
                });
            }
        }
    }
    let (best_epoch, params) = match best {
        Some((_, e, p)) => (Some(e), p),
        None => (None, params),
    };
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
        stop: StopReason::MaxEpochs,
    })
}
