//! Dataset ingestion and partitioning: whitespace-separated sensor logs
//! (one row per sample, 1-based column selection), equal contiguous
//! device partitioning, and the seeded AR(1) fallback generator.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::lms::SampleSeries;

/// Read the selected 1-based columns of a whitespace/tab-separated numeric
/// log file into one series per column. Blank lines are skipped; any
/// malformed row is reported with its line number.
pub fn load_dataset(path: &Path, columns: &[usize]) -> Result<Vec<SampleSeries>> {
    if columns.is_empty() {
        return Err(Error::Config("empty column selection".into()));
    }
    if columns.contains(&0) {
        return Err(Error::Config("columns are 1-based; got column 0".into()));
    }
    let text = fs::read_to_string(path).map_err(|source| Error::Dataset {
        path: path.display().to_string(),
        line: 0,
        reason: format!("cannot read: {source}"),
    })?;
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        for (slot, &col) in columns.iter().enumerate() {
            let field = fields.get(col - 1).ok_or_else(|| Error::Dataset {
                path: path.display().to_string(),
                line: idx + 1,
                reason: format!("row has {} columns, requested column {col}", fields.len()),
            })?;
            let value: f64 = field.parse().map_err(|_| Error::Dataset {
                path: path.display().to_string(),
                line: idx + 1,
                reason: format!("non-numeric field {field:?} in column {col}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Dataset {
                    path: path.display().to_string(),
                    line: idx + 1,
                    reason: format!("non-finite value in column {col}"),
                });
            }
            series[slot].push(value);
        }
    }
    series
        .into_iter()
        .enumerate()
        .map(|(id, values)| SampleSeries::new(id, values))
        .collect()
}

/// Concatenate the input series in order and split the stream into
/// `n_devices` equal contiguous chunks, dropping the remainder from the
/// tail. Chunk order is the device order.
pub fn partition_devices(series: &[SampleSeries], n_devices: usize) -> Result<Vec<SampleSeries>> {
    if n_devices == 0 {
        return Err(Error::Config("need at least one device".into()));
    }
    let total: usize = series.iter().map(SampleSeries::len).sum();
    let chunk = total / n_devices;
    if chunk == 0 {
        return Err(Error::InsufficientData(format!(
            "{total} samples cannot cover {n_devices} devices"
        )));
    }
    let period = series
        .first()
        .map_or(crate::lms::DEFAULT_PERIOD_S, |s| s.period_s);
    let stream: Vec<f64> = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .collect();
    (0..n_devices)
        .map(|i| {
            let mut s = SampleSeries::new(i, stream[i * chunk..(i + 1) * chunk].to_vec())?;
            s.period_s = period;
            Ok(s)
        })
        .collect()
}

/// Seeded AR(1) series around a level: `y_t = mu + phi*(y_{t-1} - mu) + e_t`
/// with Gaussian innovations. Each device id gets an independent stream.
pub fn synthetic_ar1(
    device_id: usize,
    len: usize,
    phi: f64,
    noise_sigma: f64,
    mean: f64,
    seed: u64,
) -> SampleSeries {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (device_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let normal = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
    let mut values = Vec::with_capacity(len);
    let mut prev = mean;
    for _ in 0..len {
        prev = mean + phi * (prev - mean) + normal.sample(&mut rng);
        values.push(prev);
    }
    SampleSeries {
        device_id,
        values,
        period_s: crate::lms::DEFAULT_PERIOD_S,
    }
}
