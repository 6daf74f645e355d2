use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ArgMatches;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sscnn_core::analysis::{
    autocorrelation_profile, component_controls, conditional_correlation, control_components,
    decomposition_distance_check, ControlChoice, ControlSet, ControlSettings, DecompositionReport,
};
use sscnn_core::data::{detect_date_column, load_csv, make_windows, Normalizer, SeriesTable, SplitFractions};
use sscnn_core::model::{normalizer_path, parameter_breakdown, Checkpoint, Model, ModelConfig, ModelParams};
use sscnn_core::train::{evaluate, train, StopReason};

use crate::args::{AnalyzeArgs, DateColumn, EvaluateArgs, Format, Mode, ParamsArgs, PredictArgs, TrainArgs};
use crate::failure::Failure;
use crate::settings::{analyze_settings, model_config, train_config, FileConfig};

type Outcome = Result<(), Failure>;

fn read_table(path: &Path, date: DateColumn) -> Result<SeriesTable, Failure> {
    let has_date = match date {
        DateColumn::Auto => detect_date_column(path)?,
        DateColumn::Yes => true,
        DateColumn::No => false,
    };
    Ok(load_csv(path, has_date)?)
}

fn ensure_free(path: &Path, force: bool) -> Outcome {
    if !force && path.exists() {
        return Err(Failure::collision(path));
    }
    Ok(())
}

/// Writes `bytes` to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, force: bool, bytes: &[u8]) -> Outcome {
    match path {
        Some(p) => {
            ensure_free(p, force)?;
            std::fs::write(p, bytes).map_err(|e| Failure::io(format!("{}: {e}", p.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn csv_bytes<F>(write: F) -> Result<Vec<u8>, Failure>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        write(&mut w).map_err(|e| Failure::io(e.to_string()))?;
        w.flush()?;
    }
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn history_path(args: &TrainArgs) -> PathBuf {
    args.out.clone().unwrap_or_else(|| {
        let mut s = args.checkpoint.as_os_str().to_owned();
        s.push(".history.csv");
        PathBuf::from(s)
    })
}

pub fn cmd_train(m: &ArgMatches, args: &TrainArgs) -> Outcome {
    let file = FileConfig::load(args.config.as_deref())?;
    let raw = read_table(&args.data.data, args.data.date_column)?;
    let cfg = model_config(m, &args.model, &file, raw.n_series());
    cfg.validate()?;
    let tcfg = train_config(m, &args.optim, &file);
    tcfg.validate()?;

    let history_out = history_path(args);
    let force = args.output.force;
    ensure_free(&args.checkpoint, force)?;
    ensure_free(&normalizer_path(&args.checkpoint), force)?;
    ensure_free(&history_out, force)?;

    let split = SplitFractions::default();
    let [train_range, _, _] = split.ranges(raw.len())?;
    let normalizer = Normalizer::fit(&raw, train_range)?;
    let table = Arc::new(normalizer.apply(&raw)?);
    let [train_set, val_set, test_set] = make_windows(table, cfg.t_in, cfg.t_out, split)?;

    let model = Model::new(cfg.clone())?;
    let init = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(tcfg.seed))?;
    let outcome = train(&model, init, &train_set, &val_set, &tcfg, |r| {
        eprintln!(
            "epoch {:>3}  train_mse {:.6}  val_mse {:.6}  val_mae {:.6}  {:.1}s",
            r.epoch, r.train_mse, r.val_mse, r.val_mae, r.seconds
        );
    })?;

    Checkpoint::new(cfg, &outcome.params, normalizer.clone(), split).save(&args.checkpoint)?;
    let mut history = Vec::new();
    outcome.history.write_csv(&mut history)?;
    std::fs::write(&history_out, history).map_err(|e| Failure::io(format!("{}: {e}", history_out.display())))?;

    if let StopReason::NonFinite { epoch, batch } = outcome.stop {
        return Err(Failure::non_finite(format!(
            "non-finite loss at epoch {epoch}, batch {batch}; last good parameters saved to {}",
            args.checkpoint.display()
        )));
    }
    if let Some(best) = outcome.history.best() {
        println!("best_epoch {} val_mse {:.6} val_mae {:.6}", best.epoch, best.val_mse, best.val_mae);
    }
    let test = evaluate(&model, &outcome.params, &test_set, Some(&normalizer))?;
    println!("test_mse {:.6} test_mae {:.6} windows {}", test.mse, test.mae, test.windows);
    Ok(())
}

struct Loaded {
    checkpoint: Checkpoint,
    params: ModelParams,
    model: Model,
    table: SeriesTable,
}

fn load_for_inference(data: &Path, date: DateColumn, checkpoint: &Path) -> Result<Loaded, Failure> {
    let checkpoint = Checkpoint::load(checkpoint)?;
    let params = checkpoint.params()?;
    let model = Model::new(checkpoint.config.clone())?;
    let raw = read_table(data, date)?;
    if raw.n_series() != checkpoint.config.n_series {
        return Err(Failure::usage(format!(
            "checkpoint expects {} series but the data has {}",
            checkpoint.config.n_series,
            raw.n_series()
        )));
    }
    let table = checkpoint.normalizer.apply(&raw)?;
    Ok(Loaded {
        checkpoint,
        params,
        model,
        table,
    })
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    mse: f64,
    mae: f64,
    mse_normalized: f64,
    mae_normalized: f64,
    windows: usize,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Outcome {
    let l = load_for_inference(&args.data.data, args.data.date_column, &args.checkpoint)?;
    let cfg = &l.checkpoint.config;
    let [_, _, test_set] = make_windows(Arc::new(l.table), cfg.t_in, cfg.t_out, l.checkpoint.split)?;
    let original = evaluate(&l.model, &l.params, &test_set, Some(&l.checkpoint.normalizer))?;
    let normalized = evaluate(&l.model, &l.params, &test_set, None)?;
    let report = EvaluationReport {
        mse: original.mse,
        mae: original.mae,
        mse_normalized: normalized.mse,
        mae_normalized: normalized.mae,
        windows: original.windows,
    };
    let bytes = match args.output.format {
        Format::Json => json_bytes(&report)?,
        Format::Csv => csv_bytes(|w| {
            w.write_record(["metric", "value"])?;
            for (k, v) in [
                ("mse", report.mse),
                ("mae", report.mae),
                ("mse_normalized", report.mse_normalized),
                ("mae_normalized", report.mae_normalized),
                ("windows", report.windows as f64),
            ] {
                w.write_record([k.to_string(), v.to_string()])?;
            }
            Ok(())
        })?,
    };
    emit(args.out.as_deref(), args.output.force, &bytes)
}

#[derive(Debug, Serialize)]
struct SeriesForecast {
    series: String,
    forecast: Vec<f64>,
}

pub fn cmd_predict(args: &PredictArgs) -> Outcome {
    let l = load_for_inference(&args.data.data, args.data.date_column, &args.checkpoint)?;
    let cfg = &l.checkpoint.config;
    if l.table.len() < cfg.t_in {
        return Err(Failure::io(format!(
            "data has {} steps but the model reads {}",
            l.table.len(),
            cfg.t_in
        )));
    }
    let window = l.table.block(l.table.len() - cfg.t_in, cfg.t_in)?;
    let forecast = l.checkpoint.normalizer.invert(&l.model.predict(&l.params, &window)?)?;
    let rows: Vec<SeriesForecast> = l
        .table
        .names()
        .iter()
        .enumerate()
        .map(|(s, name)| SeriesForecast {
            series: name.clone(),
            forecast: (0..cfg.t_out).map(|h| forecast.at2(s, h)).collect(),
        })
        .collect();
    let bytes = match args.output.format {
        Format::Json => json_bytes(&rows)?,
        Format::Csv => csv_bytes(|w| {
            let mut header = vec!["series".to_string()];
            header.extend((1..=cfg.t_out).map(|h| format!("h{h}")));
            w.write_record(&header)?;
            for r in &rows {
                let mut rec = vec![r.series.clone()];
                rec.extend(r.forecast.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
            Ok(())
        })?,
    };
    emit(args.out.as_deref(), args.output.force, &bytes)
}

/// One row of an analysis report in long format.
#[derive(Debug, Serialize)]
struct Row {
    series: String,
    stage: String,
    key: String,
    statistic: String,
    value: Option<f64>,
}

impl Row {
    fn new(series: &str, stage: &str, key: impl ToString, statistic: &str, value: Option<f64>) -> Self {
        Self {
            series: series.to_string(),
            stage: stage.to_string(),
            key: key.to_string(),
            statistic: statistic.to_string(),
            value,
        }
    }
}

fn control_label(choice: ControlChoice) -> String {
    let parts: Vec<&str> = [
        (choice.long_term, "lt"),
        (choice.seasonal, "se"),
        (choice.short_term, "st"),
    ]
    .into_iter()
    .filter_map(|(on, name)| on.then_some(name))
    .collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join("+")
    }
}

fn decomposition_rows(rows: &mut Vec<Row>, stage: &str, r: &DecompositionReport) {
    let stats = [
        ("trials", r.trials as f64),
        ("dim", r.dim as f64),
        ("violations", r.violations as f64),
        ("rejected", r.rejected as f64),
        ("mean_d12_sq", r.mean_d12_sq),
        ("mean_d13_sq", r.mean_d13_sq),
        ("std_error", r.std_error),
        ("passed", if r.passed { 1.0 } else { 0.0 }),
    ];
    for (name, v) in stats {
        rows.push(Row::new("", stage, "", name, Some(v)));
    }
}

pub fn cmd_analyze(m: &ArgMatches, args: &AnalyzeArgs) -> Outcome {
    let file = FileConfig::load(args.config.as_deref())?;
    let s = analyze_settings(m, args, &file);
    let mut rows = Vec::new();

    if args.mode == Mode::DecompCheck {
        for (stage, noise) in [("deterministic", false), ("mixture", true)] {
            let r = decomposition_distance_check(args.trials, args.dim, noise, args.seed)?;
            eprintln!(
                "decomp-check {stage}: {} (trials {}, violations {}, mean d12^2 {:.4}, mean d13^2 {:.4}, se {:.4})",
                if r.passed { "PASS" } else { "FAIL" },
                r.trials,
                r.violations,
                r.mean_d12_sq,
                r.mean_d13_sq,
                r.std_error
            );
            decomposition_rows(&mut rows, stage, &r);
        }
    } else {
        let Some(path) = args.data.as_deref() else {
            return Err(Failure::usage("--data is required for this mode"));
        };
        let table = read_table(path, args.date_column)?;
        let settings = ControlSettings::new(s.cycle, s.delta, s.history);
        let choice = ControlChoice::parse(&s.control)?;
        let label = control_label(choice);
        match args.mode {
            Mode::Stages => {
                for (name, y) in table.names().iter().zip(table.channels()) {
                    for st in control_components(y, &settings)? {
                        let stage = st.label.as_str();
                        for t in 0..y.len() {
                            rows.push(Row::new(name, stage, t, "mu", Some(st.mu[t])));
                            rows.push(Row::new(name, stage, t, "sigma", Some(st.sigma[t])));
                            rows.push(Row::new(name, stage, t, "residual", Some(st.residual[t])));
                            rows.push(Row::new(name, stage, t, "contribution", Some(st.contribution[t])));
                        }
                    }
                }
            }
            Mode::Autocorr => {
                for (name, y) in table.names().iter().zip(table.channels()) {
                    let (obs, z) = component_controls(y, &settings, choice)?;
                    let band = 1.0 / (obs.len() as f64).sqrt();
                    let profile = autocorrelation_profile(&obs, &z, s.max_lag)?;
                    for (i, rho) in profile.into_iter().enumerate() {
                        rows.push(Row::new(name, &label, i + 1, "rho", rho.value()));
                        rows.push(Row::new(name, &label, i + 1, "se_band", Some(band)));
                    }
                }
            }
            Mode::Crosscorr => {
                let controlled = table
                    .channels()
                    .iter()
                    .map(|y| component_controls(y, &settings, choice))
                    .collect::<Result<Vec<_>, _>>()?;
                let names = table.names();
                for i in 0..names.len() {
                    for j in i + 1..names.len() {
                        let (xi, zi) = &controlled[i];
                        let (xj, zj) = &controlled[j];
                        // both intercepts coincide; keep one
                        let mut cols = zi.columns().to_vec();
                        cols.extend(zj.columns().iter().skip(1).cloned());
                        let z = ControlSet::from_columns(cols)?;
                        let rho = conditional_correlation(xi, xj, &z)?;
                        let pair = format!("{}|{}", names[i], names[j]);
                        rows.push(Row::new("", &label, pair, "rho", rho.value()));
                    }
                }
                if names.len() < 2 {
                    eprintln!("crosscorr needs at least two series; the report is empty");
                }
            }
            Mode::DecompCheck => unreachable!(),
        }
    }

    let bytes = match args.output.format {
        Format::Json => json_bytes(&rows)?,
        Format::Csv => csv_bytes(|w| {
            w.write_record(["series", "stage", "key", "statistic", "value"])?;
            for r in &rows {
                let value = r.value.map(|v| v.to_string()).unwrap_or_default();
                w.write_record([&r.series, &r.stage, &r.key, &r.statistic, &value])?;
            }
            Ok(())
        })?,
    };
    emit(args.out.as_deref(), args.output.force, &bytes)
}

#[derive(Debug, Serialize)]
struct ParamsRow {
    t_in: usize,
    t_out: usize,
    layers: usize,
    channels: usize,
    cycle: usize,
    delta: usize,
    kernel: usize,
    embed: usize,
    selection: usize,
    fusion: usize,
    head: usize,
    total: usize,
}

pub fn cmd_params(m: &ArgMatches, args: &ParamsArgs) -> Outcome {
    let file = FileConfig::load(args.config.as_deref())?;
    let base = model_config(m, &args.model, &file, 1);
    let horizons = if args.sweep_t_out.is_empty() {
        vec![base.t_out]
    } else {
        args.sweep_t_out.clone()
    };
    let rows = horizons
        .into_iter()
        .map(|t_out| {
            let cfg = ModelConfig { t_out, ..base.clone() };
            cfg.validate()?;
            let b = parameter_breakdown(&cfg);
            Ok(ParamsRow {
                t_in: cfg.t_in,
                t_out,
                layers: cfg.layers,
                channels: cfg.channels,
                cycle: cfg.cycle,
                delta: cfg.short_window,
                kernel: cfg.kernel,
                embed: b.embed,
                selection: b.selection,
                fusion: b.fusion,
                head: b.head,
                total: b.total(),
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let bytes = match args.format {
        Format::Json => json_bytes(&rows)?,
        Format::Csv => csv_bytes(|w| {
            for r in &rows {
                w.serialize(r)?;
            }
            Ok(())
        })?,
    };
    emit(None, false, &bytes)
}

