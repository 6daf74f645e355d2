//! Series ingestion, z-score normalization, chronological splits and
//! sliding windows.

mod synthetic;

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub use synthetic::{synthetic_series, SyntheticSpec};

/// Smallest standard deviation used for scaling.
pub const STD_FLOOR: f64 = 1e-8;

/// Named real-valued channels over a common time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    date_header: Option<String>,
    timestamps: Option<Vec<String>>,
    names: Vec<String>,
    /// One vector per channel.
    values: Vec<Vec<f64>>,
}

impl SeriesTable {
    pub fn new(names: Vec<String>, values: Vec<Vec<f64>>, timestamps: Option<Vec<String>>) -> Result<Self> {
        if names.is_empty() || names.len() != values.len() {
            return Err(Error::Data(format!(
                "{} names for {} channels",
                names.len(),
                values.len()
            )));
        }
        let len = values[0].len();
        if len == 0 {
            return Err(Error::Data("series has no observations".into()));
        }
        if values.iter().any(|v| v.len() != len) {
            return Err(Error::Data("channels differ in length".into()));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != len {
                return Err(Error::Data(format!("{} timestamps for {len} observations", ts.len())));
            }
            check_increasing(ts)?;
        }
        if let Some((c, t)) = find_non_finite(&values) {
            return Err(Error::Data(format!("non-finite value in channel {c} at step {t}")));
        }
        Ok(Self {
            date_header: timestamps.as_ref().map(|_| "date".to_string()),
            timestamps,
            names,
            values,
        })
    }

    pub fn n_series(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// `N x len` block starting at `start`.
    pub fn block(&self, start: usize, len: usize) -> Result<Tensor> {
        if start + len > self.len() {
            return Err(Error::Data(format!(
                "block {start}..{} exceeds {} observations",
                start + len,
                self.len()
            )));
        }
        let mut data = Vec::with_capacity(self.n_series() * len);
        for ch in &self.values {
            data.extend_from_slice(&ch[start..start + len]);
        }
        Tensor::matrix(self.n_series(), len, data)
    }

    fn with_values(&self, values: Vec<Vec<f64>>) -> Self {
        Self {
            date_header: self.date_header.clone(),
            timestamps: self.timestamps.clone(),
            names: self.names.clone(),
            values,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = Vec::new();
        if let Some(h) = &self.date_header {
            header.push(h);
        }
        header.extend(self.names.iter().map(String::as_str));
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut row: Vec<String> = Vec::with_capacity(header.len());
            if let Some(ts) = &self.timestamps {
                row.push(ts[t].clone());
            }
            row.extend(self.values.iter().map(|ch| ch[t].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn find_non_finite(values: &[Vec<f64>]) -> Option<(usize, usize)> {
    values
        .iter()
        .enumerate()
        .find_map(|(c, ch)| ch.iter().position(|v| !v.is_finite()).map(|t| (c, t)))
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = ["%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S", "%Y/%m/%d %H:%M"];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0)))
}

/// Timestamps that all parse as dates must be strictly increasing; other
/// labels are kept as-is.
fn check_increasing(ts: &[String]) -> Result<()> {
    let parsed: Option<Vec<NaiveDateTime>> = ts.iter().map(|s| parse_timestamp(s)).collect();
    if let Some(p) = parsed {
        if let Some(i) = p.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "timestamps not strictly increasing at data row {}: {} then {}",
                i + 2,
                ts[i],
                ts[i + 1]
            )));
        }
    }
    Ok(())
}

/// Whether the first column looks like a date column: named `date`, or its
/// first value is not a number.
pub fn detect_date_column(path: &Path) -> Result<bool> {
    let mut r = csv::ReaderBuilder::new().from_path(path)?;
    let first_header = r.headers()?.get(0).unwrap_or("").trim().to_ascii_lowercase();
    if matches!(first_header.as_str(), "date" | "time" | "timestamp" | "datetime") {
        return Ok(true);
    }
    match r.records().next() {
        Some(rec) => Ok(rec?.get(0).is_some_and(|v| v.trim().parse::<f64>().is_err())),
        None => Ok(false),
    }
}

pub fn load_csv(path: &Path, has_date_column: bool) -> Result<SeriesTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    read_csv(f, has_date_column).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses a headed CSV; every non-date cell must be a finite real.
pub fn read_csv<R: Read>(reader: R, has_date_column: bool) -> Result<SeriesTable> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = r.headers()?.clone();
    let skip = usize::from(has_date_column);
    if headers.len() <= skip {
        return Err(Error::Data("no variate columns in header".into()));
    }
    let names: Vec<String> = headers.iter().skip(skip).map(|h| h.trim().to_string()).collect();
    let mut values = vec![Vec::new(); names.len()];
    let mut timestamps = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        if rec.len() != headers.len() {
            return Err(Error::Data(format!(
                "line {line}: expected {} fields, found {}",
                headers.len(),
                rec.len()
            )));
        }
        if has_date_column {
            timestamps.push(rec[0].trim().to_string());
        }
        for (c, cell) in rec.iter().skip(skip).enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| {
                let what = if cell.is_empty() { "missing value".to_string() } else { format!("cannot parse {cell:?}") };
                Error::Data(format!("line {line}, column {:?}: {what}", names[c]))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("line {line}, column {:?}: non-finite value", names[c])));
            }
            values[c].push(v);
        }
    }
    if values[0].is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    let mut table = SeriesTable::new(names, values, has_date_column.then_some(timestamps))?;
    if has_date_column {
        table.date_header = Some(headers[0].trim().to_string());
    }
    Ok(table)
}

/// Per-channel z-score statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose standard deviation was raised to [`STD_FLOOR`].
    pub floored: Vec<bool>,
}

impl Normalizer {
    /// Fits on the steps in `range` only.
    pub fn fit(table: &SeriesTable, range: Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > table.len() {
            return Err(Error::Data(format!(
                "cannot fit normalizer on steps {range:?} of {}",
                table.len()
            )));
        }
        let n = range.len() as f64;
        let (mut mean, mut std, mut floored) = (Vec::new(), Vec::new(), Vec::new());
        for ch in table.channels() {
            let xs = &ch[range.clone()];
            let m = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            floored.push(s < STD_FLOOR);
            std.push(s.max(STD_FLOOR));
        }
        Ok(Self { mean, std, floored })
    }

    pub fn n_series(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.n_series() {
            return Err(Error::Data(format!(
                "normalizer has {} channels, data has {n}",
                self.n_series()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, table: &SeriesTable) -> Result<SeriesTable> {
        self.check(table.n_series())?;
        let values = table
            .channels()
            .iter()
            .enumerate()
            .map(|(c, ch)| ch.iter().map(|x| (x - self.mean[c]) / self.std[c]).collect())
            .collect();
        Ok(table.with_values(values))
    }

    pub fn invert_table(&self, table: &SeriesTable) -> Result<SeriesTable> {
        self.check(table.n_series())?;
        let values = table
            .channels()
            .iter()
            .enumerate()
            .map(|(c, ch)| ch.iter().map(|z| z * self.std[c] + self.mean[c]).collect())
            .collect();
        Ok(table.with_values(values))
    }

    /// Z-scores an `N x T` block.
    pub fn normalize(&self, x: &Tensor) -> Result<Tensor> {
        self.rows(x, |c, v| (v - self.mean[c]) / self.std[c])
    }

    /// Inverse of [`Normalizer::normalize`] on an `N x T` block.
    pub fn invert(&self, z: &Tensor) -> Result<Tensor> {
        self.rows(z, |c, v| v * self.std[c] + self.mean[c])
    }

    fn rows(&self, x: &Tensor, f: impl Fn(usize, f64) -> f64) -> Result<Tensor> {
        let (n, t) = x.dims2()?;
        self.check(n)?;
        let data = x.data().iter().enumerate().map(|(k, &v)| f(k / t.max(1), v)).collect();
        Tensor::matrix(n, t, data)
    }
}

/// Chronological train / validation / test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions {parts:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }

    /// Step ranges of the three splits over `total` observations.
    pub fn ranges(&self, total: usize) -> Result<[Range<usize>; 3]> {
        self.validate()?;
        let a = (self.train * total as f64).round() as usize;
        let b = (((self.train + self.val) * total as f64).round() as usize).clamp(a, total);
        Ok([0..a, a..b, b..total])
    }
}

/// Sliding `(input, target)` windows fully inside one split.
#[derive(Debug, Clone)]
pub struct WindowSet {
    table: Arc<SeriesTable>,
    range: Range<usize>,
    t_in: usize,
    t_out: usize,
}

impl WindowSet {
    pub fn new(table: Arc<SeriesTable>, range: Range<usize>, t_in: usize, t_out: usize) -> Result<Self> {
        if t_in == 0 || t_out == 0 {
            return Err(Error::Config("window lengths must be at least 1".into()));
        }
        if range.end > table.len() || range.len() < t_in + t_out {
            return Err(Error::Data(format!(
                "split {range:?} holds {} steps, fewer than t_in + t_out = {}",
                range.len(),
                t_in + t_out
            )));
        }
        Ok(Self {
            table,
            range,
            t_in,
            t_out,
        })
    }

    pub fn len(&self) -> usize {
        self.range.len() - self.t_in - self.t_out + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    /// First step of the input of window `i`.
    pub fn origin(&self, i: usize) -> usize {
        self.range.start + i
    }

    /// `(N x T_in input, N x T_out target)` of window `i`.
    pub fn get(&self, i: usize) -> Result<(Tensor, Tensor)> {
        if i >= self.len() {
            return Err(Error::Data(format!("window {i} out of {}", self.len())));
        }
        let s = self.origin(i);
        Ok((self.table.block(s, self.t_in)?, self.table.block(s + self.t_in, self.t_out)?))
    }

    pub fn table(&self) -> &SeriesTable {
        &self.table
    }
}

/// Train, validation and test windows over an already normalized table.
pub fn make_windows(
    table: Arc<SeriesTable>,
    t_in: usize,
    t_out: usize,
    split: SplitFractions,
) -> Result<[WindowSet; 3]> {
    let [a, b, c] = split.ranges(table.len())?;
    let named = |r: Range<usize>, name: &str| {
        WindowSet::new(table.clone(), r, t_in, t_out).map_err(|e| Error::Data(format!("{name} split: {e}")))
    };
    Ok([named(a, "train")?, named(b, "validation")?, named(c, "test")?])
}
