use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SeriesTable;
use crate::error::{Error, Result};

/// Linear trend plus a sinusoid of period `cycle` plus AR(1) noise, sampled
/// hourly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_series: usize,
    pub length: usize,
    pub cycle: usize,
    pub slope: f64,
    pub amplitude: f64,
    pub phi: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_series: 1,
            length: 5000,
            cycle: 24,
            slope: 0.0005,
            amplitude: 1.0,
            phi: 0.6,
            noise_std: 0.3,
            seed: 0,
        }
    }
}

/// Series `k` is shifted by `k` steps of phase; each has its own noise stream.
pub fn synthetic_series(spec: &SyntheticSpec) -> Result<SeriesTable> {
    if spec.n_series == 0 || spec.length == 0 || spec.cycle == 0 {
        return Err(Error::Config("synthetic series needs positive sizes".into()));
    }
    if !(spec.noise_std >= 0.0 && spec.phi.abs() < 1.0) {
        return Err(Error::Config(format!(
            "need noise_std >= 0 and |phi| < 1, got {} and {}",
            spec.noise_std, spec.phi
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let omega = std::f64::consts::TAU / spec.cycle as f64;
    let mut values = Vec::with_capacity(spec.n_series);
    for k in 0..spec.n_series {
        let mut e = 0.0;
        let ch = (0..spec.length)
            .map(|t| {
                e = spec.phi * e + noise.sample(&mut rng);
                spec.slope * t as f64 + spec.amplitude * (omega * (t + k) as f64).sin() + e
            })
            .collect();
        values.push(ch);
    }
    let start = NaiveDate::from_ymd_opt(2020, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date");
    let stamps = (0..spec.length)
        .map(|t| (start + Duration::hours(t as i64)).format("%Y-%m-%d %H:%M:%S").to_string())
        .collect();
    let names = (0..spec.n_series).map(|k| format!("s{k}")).collect();
    SeriesTable::new(names, values, Some(stamps))
}
