//! Fixed-rate multivariate time series.
//!
//! A [`TimeSeriesBatch`] is the unit handed to causal discovery: a set of named
//! variables sampled on one clock. Values may be missing (`None`); the CSV form
//! writes those as empty cells.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Allowed deviation of timestamp spacing from `1 / rate_hz`, in seconds.
pub const SPACING_TOLERANCE_S: f64 = 1e-6;

/// Sample variance below which a variable is considered constant.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesBatch {
    variables: Vec<String>,
    rate_hz: f64,
    start_time: f64,
    timestamps: Vec<f64>,
    rows: Vec<Vec<Option<f64>>>,
}

impl TimeSeriesBatch {
    /// Builds a batch whose timestamps are `start_time + i / rate_hz`.
    pub fn new(
        variables: Vec<String>,
        rate_hz: f64,
        start_time: f64,
        rows: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        let timestamps = (0..rows.len())
            .map(|i| start_time + i as f64 / rate_hz)
            .collect();
        Self::with_timestamps(variables, rate_hz, timestamps, rows)
    }

    /// Builds a batch from fully observed columns.
    pub fn from_columns(
        variables: Vec<String>,
        rate_hz: f64,
        start_time: f64,
        columns: &[Vec<f64>],
    ) -> Result<Self> {
        if columns.len() != variables.len() {
            return Err(Error::InvalidArgument(format!(
                "{} columns for {} variables",
                columns.len(),
                variables.len()
            )));
        }
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument("columns differ in length".into()));
        }
        let rows = (0..n)
            .map(|t| columns.iter().map(|c| Some(c[t])).collect())
            .collect();
        Self::new(variables, rate_hz, start_time, rows)
    }

    /// Builds a batch with explicit timestamps, checking every invariant.
    pub fn with_timestamps(
        variables: Vec<String>,
        rate_hz: f64,
        timestamps: Vec<f64>,
        rows: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!("rate_hz must be > 0, got {rate_hz}")));
        }
        if timestamps.len() != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} timestamps for {} rows",
                timestamps.len(),
                rows.len()
            )));
        }
        for (i, name) in variables.iter().enumerate() {
            if variables[..i].contains(name) {
                return Err(Error::InvalidArgument(format!("duplicate variable `{name}`")));
            }
        }
        let period = 1.0 / rate_hz;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != variables.len() {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    variables.len()
                )));
            }
            if let Some(bad) = row.iter().flatten().find(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i} holds non-finite value {bad}")));
            }
            if !timestamps[i].is_finite() {
                return Err(Error::InvalidArgument(format!("row {i} has non-finite timestamp")));
            }
            if i > 0 && ((timestamps[i] - timestamps[i - 1]) - period).abs() > SPACING_TOLERANCE_S {
                return Err(Error::InvalidArgument(format!(
                    "timestamp spacing at row {i} is {} s, expected {period} s",
                    timestamps[i] - timestamps[i - 1]
                )));
            }
        }
        let start_time = timestamps.first().copied().unwrap_or(0.0);
        Ok(Self {
            variables,
            rate_hz,
            start_time,
            timestamps,
            rows,
        })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Covered time span, `rows / rate_hz`.
    pub fn duration_s(&self) -> f64 {
        self.rows.len() as f64 / self.rate_hz
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn has_missing(&self) -> bool {
        self.rows.iter().any(|r| r.iter().any(Option::is_none))
    }

    /// Fully observed column; fails on the first missing value.
    pub fn column(&self, index: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(row, r)| {
                r[index].ok_or_else(|| Error::MissingValue {
                    variable: self.variables[index].clone(),
                    row,
                })
            })
            .collect()
    }

    pub fn columns(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.variables.len()).map(|i| self.column(i)).collect()
    }

    fn select_rows(&self, keep: impl Iterator<Item = usize>, rate_hz: f64) -> Self {
        let (timestamps, rows): (Vec<_>, Vec<_>) = keep
            .map(|i| (self.timestamps[i], self.rows[i].clone()))
            .unzip();
        Self {
            variables: self.variables.clone(),
            rate_hz,
            start_time: timestamps.first().copied().unwrap_or(self.start_time),
            timestamps,
            rows,
        }
    }
}

/// Keeps every `factor`-th row starting at row 0.
pub fn subsample(batch: &TimeSeriesBatch, factor: usize) -> Result<TimeSeriesBatch> {
    if factor == 0 {
        return Err(Error::InvalidArgument("subsample factor must be >= 1".into()));
    }
    if factor > batch.len() {
        return Err(Error::EmptyResult(format!(
            "subsample factor {factor} exceeds row count {}",
            batch.len()
        )));
    }
    Ok(batch.select_rows(
        (0..batch.len()).step_by(factor),
        batch.rate_hz / factor as f64,
    ))
}

/// Leading `ceil(fraction * n)` rows.
pub fn slice_fraction(batch: &TimeSeriesBatch, fraction: f64) -> Result<TimeSeriesBatch> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    // 1e-9 keeps products like 0.4 * 1500 from rounding up to 601.
    let keep = ((fraction * batch.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    Ok(batch.select_rows(0..keep.min(batch.len()), batch.rate_hz))
}

/// Rescales every variable to sample mean 0 and sample standard deviation 1.
/// Missing values stay missing and are ignored by the moments.
pub fn standardize(batch: &TimeSeriesBatch) -> Result<TimeSeriesBatch> {
    let mut out = batch.clone();
    for (j, name) in batch.variables.iter().enumerate() {
        let observed: Vec<f64> = batch.rows.iter().filter_map(|r| r[j]).collect();
        let (mean, var) = mean_variance(&observed);
        if observed.len() < 2 || var <= DEGENERATE_VARIANCE {
            return Err(Error::DegenerateVariance {
                variable: name.clone(),
            });
        }
        let sd = var.sqrt();
        for row in &mut out.rows {
            if let Some(v) = row[j].as_mut() {
                *v = (*v - mean) / sd;
            }
        }
    }
    Ok(out)
}

/// Sample mean and unbiased variance (two-pass).
pub(crate) fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1) as f64)
}

/// Fills interior runs of at most `max_gap` missing values by linear
/// interpolation and cuts the batch at longer runs. Leading and trailing
/// missing runs are trimmed.
pub fn interpolate_gaps(batch: &TimeSeriesBatch, max_gap: usize) -> Vec<TimeSeriesBatch> {
    let mut segments = Vec::new();
    split_segments(batch, 0, batch.len(), max_gap, &mut segments);
    segments
        .into_iter()
        .map(|(lo, hi)| {
            let mut seg = batch.select_rows(lo..hi, batch.rate_hz);
            for j in 0..seg.variables.len() {
                fill_interior(&mut seg.rows, j);
            }
            seg
        })
        .collect()
}

/// Missing runs of column `j` within `rows[lo..hi]` as half-open ranges.
fn missing_runs(rows: &[Vec<Option<f64>>], j: usize, lo: usize, hi: usize) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut t = lo;
    while t < hi {
        if rows[t][j].is_none() {
            let start = t;
            while t < hi && rows[t][j].is_none() {
                t += 1;
            }
            runs.push((start, t));
        } else {
            t += 1;
        }
    }
    runs
}

fn split_segments(
    batch: &TimeSeriesBatch,
    lo: usize,
    hi: usize,
    max_gap: usize,
    out: &mut Vec<(usize, usize)>,
) {
    if lo >= hi {
        return;
    }
    let mut drop = vec![false; hi - lo];
    for j in 0..batch.variables.len() {
        for (s, e) in missing_runs(&batch.rows, j, lo, hi) {
            if s == lo || e == hi || e - s > max_gap {
                drop[s - lo..e - lo].iter_mut().for_each(|d| *d = true);
            }
        }
    }
    if !drop.contains(&true) {
        out.push((lo, hi));
        return;
    }
    // Dropping rows can expose new edge runs in the pieces, so recurse.
    let mut t = lo;
    while t < hi {
        if drop[t - lo] {
            t += 1;
            continue;
        }
        let start = t;
        while t < hi && !drop[t - lo] {
            t += 1;
        }
        split_segments(batch, start, t, max_gap, out);
    }
}

fn fill_interior(rows: &mut [Vec<Option<f64>>], j: usize) {
    for (s, e) in missing_runs(rows, j, 0, rows.len()) {
        let (Some(left), Some(right)) = (rows[s - 1][j], rows[e][j]) else {
            continue;
        };
        let span = (e - s + 1) as f64;
        for t in s..e {
            let w = (t - s + 1) as f64 / span;
            rows[t][j] = Some(left + w * (right - left));
        }
    }
}

/// Decimal rendering used by every CSV this crate writes (12 significant digits).
pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn to_csv_string(batch: &TimeSeriesBatch) -> String {
    let mut out = String::from("timestamp");
    for v in &batch.variables {
        out.push(',');
        out.push_str(v);
    }
    out.push('\n');
    for (t, row) in batch.timestamps.iter().zip(&batch.rows) {
        out.push_str(&fmt_num(*t));
        for v in row {
            out.push(',');
            if let Some(v) = v {
                let _ = write!(out, "{}", fmt_num(*v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(batch: &TimeSeriesBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(batch)).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<TimeSeriesBatch> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

/// Parses the batch CSV format. The rate is inferred from the first two
/// timestamps; batches with fewer than two rows get 1 Hz.
pub fn parse_csv(text: &str) -> Result<TimeSeriesBatch> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing header"))?;
    let mut cols = header.split(',');
    if cols.next().map(str::trim) != Some("timestamp") {
        return Err(Error::parse(1, "header must start with `timestamp`"));
    }
    let variables: Vec<String> = cols.map(|c| c.trim().to_string()).collect();
    if variables.iter().any(String::is_empty) {
        return Err(Error::parse(1, "empty variable name in header"));
    }

    let mut timestamps = Vec::new();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != variables.len() + 1 {
            return Err(Error::parse(
                lineno,
                format!("{} columns, header has {}", cells.len(), variables.len() + 1),
            ));
        }
        let t: f64 = cells[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad timestamp `{}`", cells[0])))?;
        let row = cells[1..]
            .iter()
            .map(|c| {
                let c = c.trim();
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::parse(lineno, format!("non-numeric cell `{c}`")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        timestamps.push(t);
        rows.push(row);
    }

    let rate_hz = if timestamps.len() >= 2 {
        let dt = timestamps[1] - timestamps[0];
        if dt <= 0.0 {
            return Err(Error::parse(3, "timestamps must be strictly increasing"));
        }
        1.0 / dt
    } else {
        1.0
    };
    TimeSeriesBatch::with_timestamps(variables, rate_hz, timestamps, rows)
}
