//! Timing harness and CSV rows for the scaling sweeps.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use crate::Result;

pub const CSV_HEADER: [&str; 6] = ["suite", "params", "method", "median_ms", "repeats", "checksum"];

/// Minimum timed repetitions per case.
pub const MIN_REPEATS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub suite: String,
    /// Ordered `(name, value)` pairs, rendered as `n=64;m=3`.
    pub params: Vec<(String, usize)>,
    pub method: String,
    pub median_ms: f64,
    pub repeats: usize,
    /// First output element; keeps the timed work observable.
    pub checksum: f64,
}

impl BenchRow {
    pub fn params_string(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn param(&self, name: &str) -> Option<usize> {
        self.params.iter().find(|(k, _)| k == name).map(|&(_, v)| v)
    }
}

/// Runs `f` once untimed, then `repeats` times on a monotonic clock, and
/// returns the median in milliseconds together with the last output.
pub fn median_ms<R>(repeats: usize, mut f: impl FnMut() -> R) -> (f64, R) {
    let repeats = repeats.max(1);
    let mut out = black_box(f());
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        out = black_box(f());
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    (median(&mut samples), out)
}

pub fn median(samples: &mut [f64]) -> f64 {
    assert!(!samples.is_empty());
    samples.sort_by(f64::total_cmp);
    let mid = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        0.5 * (samples[mid - 1] + samples[mid])
    }
}

/// Orders rows by numeric parameter tuple, then method name.
pub fn sort_rows(rows: &mut [BenchRow]) {
    rows.sort_by(|a, b| a.params.cmp(&b.params).then_with(|| a.method.cmp(&b.method)));
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record([
            row.suite.clone(),
            row.params_string(),
            row.method.clone(),
            format!("{:.6}", row.median_ms),
            row.repeats.to_string(),
            format!("{:e}", row.checksum),
        ])?;
    }
    w.flush().map_err(|e| crate::Error::io("<csv output>", e))?;
    Ok(())
}

/// Looks up the median for one `(method, params)` cell.
pub fn find_median(rows: &[BenchRow], method: &str, params: &[(&str, usize)]) -> Option<f64> {
    rows.iter()
        .find(|r| r.method == method && params.iter().all(|&(k, v)| r.param(k) == Some(v)))
        .map(|r| r.median_ms)
}
