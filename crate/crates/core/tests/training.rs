use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sscnn_core::data::{make_windows, Normalizer, SeriesTable, SplitFractions, WindowSet};
use sscnn_core::model::{Model, ModelConfig, ModelParams};
use sscnn_core::train::{evaluate, evaluate_seasonal_naive, train, StopReason, TrainConfig};

fn windows(values: Vec<Vec<f64>>, cfg: &ModelConfig) -> (Normalizer, [WindowSet; 3]) {
    let names = (0..values.len()).map(|k| format!("s{k}")).collect();
    let raw = SeriesTable::new(names, values, None).unwrap();
    let split = SplitFractions::default();
    let [train_range, _, _] = split.ranges(raw.len()).unwrap();
    let normalizer = Normalizer::fit(&raw, train_range).unwrap();
    let table = Arc::new(normalizer.apply(&raw).unwrap());
    let sets = make_windows(table, cfg.t_in, cfg.t_out, split).unwrap();
    (normalizer, sets)
}

fn config(n_series: usize, cycle: usize) -> ModelConfig {
    ModelConfig {
        n_series,
        t_in: 4 * cycle,
        t_out: cycle,
        channels: 4,
        layers: 1,
        cycle,
        short_window: 3,
        kernel: 2,
        eps: sscnn_core::attnnorm::EPS,
        spatial: n_series > 1,
    }
}

#[test]
fn constant_series_is_learned_within_five_epochs() {
    let cfg = config(2, 12);
    let (_, [tr, va, _]) = windows(vec![vec![4.0; 1200], vec![-1.5; 1200]], &cfg);
    let model = Model::new(cfg.clone()).unwrap();
    let init = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let tcfg = TrainConfig {
        max_epochs: 5,
        ..TrainConfig::default()
    };
    let out = train(&model, init, &tr, &va, &tcfg, |_| {}).unwrap();
    let last = out.history.records.last().unwrap();
    assert!(last.train_mse < 1e-4, "{:?}", out.history.records);
}

#[test]
fn periodic_series_reaches_small_validation_error() {
    let cycle = 12;
    let cfg = config(1, cycle);
    let shape = [0.0, 0.8, 1.5, 1.0, 0.3, -0.2, -1.0, -1.6, -0.9, -0.4, 0.1, 0.4];
    let series: Vec<f64> = (0..1500).map(|t| shape[t % cycle]).collect();
    let (_, [tr, va, _]) = windows(vec![series], &cfg);

    // the seasonal-naive predictor is exact on this data
    assert!(evaluate_seasonal_naive(&va, cycle, cfg.t_out, None).unwrap().mse < 1e-24);

    let model = Model::new(cfg.clone()).unwrap();
    let init = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let tcfg = TrainConfig {
        max_epochs: 30,
        ..TrainConfig::default()
    };
    let out = train(&model, init, &tr, &va, &tcfg, |_| {}).unwrap();
    let val = evaluate(&model, &out.params, &va, None).unwrap();
    assert!(val.mse < 1e-3, "validation MSE {} after {:?}", val.mse, out.history.records);
}

#[test]
fn restores_the_best_validation_epoch() {
    let cfg = config(1, 6);
    let series: Vec<f64> = (0..700).map(|t| (t as f64 * 0.9).sin() + 0.01 * t as f64).collect();
    let (_, [tr, va, _]) = windows(vec![series], &cfg);
    let model = Model::new(cfg.clone()).unwrap();
    let init = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let tcfg = TrainConfig {
        max_epochs: 6,
        patience: 2,
        ..TrainConfig::default()
    };
    let out = train(&model, init, &tr, &va, &tcfg, |_| {}).unwrap();
    let best = out.history.best().unwrap();
    assert_eq!(out.best_epoch, Some(best.epoch));
    let val = evaluate(&model, &out.params, &va, None).unwrap();
    assert_eq!(val.mse, best.val_mse);
    assert!(matches!(out.stop, StopReason::MaxEpochs | StopReason::EarlyStopped));
}

#[test]
fn same_seed_same_history() {
    let cfg = config(2, 6);
    let a: Vec<f64> = (0..500).map(|t| (t as f64 * 0.7).cos()).collect();
    let b: Vec<f64> = (0..500).map(|t| (t as f64 * 0.3).sin() * 2.0).collect();
    let (_, [tr, va, _]) = windows(vec![a, b], &cfg);
    let model = Model::new(cfg.clone()).unwrap();
    let run = || {
        let init = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let tcfg = TrainConfig {
            max_epochs: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        train(&model, init, &tr, &va, &tcfg, |_| {}).unwrap()
    };
    let (x, y) = (run(), run());
    assert_eq!(x.params, y.params);
    let strip = |h: &sscnn_core::train::History| -> Vec<(f64, f64, f64)> {
        h.records.iter().map(|r| (r.train_mse, r.val_mse, r.val_mae)).collect()
    };
    assert_eq!(strip(&x.history), strip(&y.history));
}

#[test]
fn divergence_stops_with_finite_parameters() {
    let cfg = config(1, 6);
    let series: Vec<f64> = (0..400).map(|t| (t as f64).sin()).collect();
    let (_, [tr, va, _]) = windows(vec![series], &cfg);
    let model = Model::new(cfg.clone()).unwrap();
    let init = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let tcfg = TrainConfig {
        learning_rate: 1e200,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let out = train(&model, init, &tr, &va, &tcfg, |_| {}).unwrap();
    assert!(matches!(out.stop, StopReason::NonFinite { .. }), "{:?}", out.stop);
    assert!(out.params.is_finite());
}
