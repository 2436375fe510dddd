//! Hourly arrival-rate traces: CSV loading and a synthetic generator.
//!
//! File format: a `hour,lambda1,lambda2` header followed by one row per hour,
//! hours contiguous from 0, rates in jobs/hour. Lines starting with `#` are
//! ignored.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("no samples")]
    Empty,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub hour: u32,
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Piecewise-constant arrival rates, one pair per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    samples: Vec<TraceSample>,
}

impl Trace {
    /// Builds a trace from per-hour `(lambda1, lambda2)` pairs.
    pub fn from_rates<I>(rates: I) -> Result<Self, TraceError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let samples: Vec<TraceSample> = rates
            .into_iter()
            .enumerate()
            .map(|(hour, (lambda1, lambda2))| TraceSample {
                hour: hour as u32,
                lambda1,
                lambda2,
            })
            .collect();
        if samples.is_empty() {
            return Err(TraceError::Empty);
        }
        if let Some(bad) = samples
            .iter()
            .find(|s| !(s.lambda1 >= 0.0 && s.lambda2 >= 0.0) || !s.lambda1.is_finite() || !s.lambda2.is_finite())
        {
            return Err(TraceError::Invalid(format!(
                "hour {}: rates must be finite and non-negative",
                bad.hour
            )));
        }
        Ok(Self { samples })
    }

    /// A trace holding the same rates for `hours` hours.
    pub fn constant(hours: usize, lambda1: f64, lambda2: f64) -> Result<Self, TraceError> {
        Self::from_rates(std::iter::repeat_n((lambda1, lambda2), hours))
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn hours(&self) -> usize {
        self.samples.len()
    }

    /// Rates in force during `hour`.
    pub fn rates_at(&self, hour: usize) -> (f64, f64) {
        let s = &self.samples[hour.min(self.samples.len() - 1)];
        (s.lambda1, s.lambda2)
    }

    /// Time-averaged rates over `[start, end)` hours.
    pub fn mean_rates(&self, start: f64, end: f64) -> (f64, f64) {
        let end = end.min(self.samples.len() as f64);
        if end <= start {
            return (0.0, 0.0);
        }
        let (mut a1, mut a2) = (0.0, 0.0);
        let mut t = start;
        while t < end {
            let hour = t.floor() as usize;
            let next = ((hour + 1) as f64).min(end);
            let (l1, l2) = self.rates_at(hour);
            a1 += l1 * (next - t);
            a2 += l2 * (next - t);
            t = next;
        }
        (a1 / (end - start), a2 / (end - start))
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    parse_trace(File::open(path)?)
}

pub fn parse_trace<R: Read>(reader: R) -> Result<Trace, TraceError> {
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| TraceError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() {
        return Err(TraceError::Empty);
    }
    let expected = ["hour", "lambda1", "lambda2"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(TraceError::Malformed {
            line: 1,
            message: format!("expected header `hour,lambda1,lambda2`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut samples = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| TraceError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| TraceError::Malformed { line, message };
        if record.len() != 3 {
            return Err(bad(format!("expected 3 columns, found {}", record.len())));
        }
        let hour: u32 = record[0].parse().map_err(|_| bad(format!("bad hour `{}`", &record[0])))?;
        let rate = |i: usize| -> Result<f64, TraceError> {
            let v: f64 = record[i].parse().map_err(|_| bad(format!("bad rate `{}`", &record[i])))?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(bad(format!("negative or non-finite rate `{}`", &record[i])));
            }
            Ok(v)
        };
        let (lambda1, lambda2) = (rate(1)?, rate(2)?);
        if hour as usize != samples.len() {
            return Err(bad(format!("expected hour {}, found {hour}", samples.len())));
        }
        samples.push((lambda1, lambda2));
    }
    if samples.is_empty() {
        return Err(TraceError::Empty);
    }
    Trace::from_rates(samples)
}

/// Writes the trace as CSV, optionally preceded by a `# ...` comment line.
pub fn write_trace<W: Write>(writer: W, trace: &Trace, comment: Option<&str>) -> Result<(), TraceError> {
    let mut writer = writer;
    if let Some(c) = comment {
        writeln!(writer, "# {c}")?;
    }
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["hour", "lambda1", "lambda2"]).map_err(csv_io)?;
    for s in &trace.samples {
        csv.write_record([s.hour.to_string(), s.lambda1.to_string(), s.lambda2.to_string()])
            .map_err(csv_io)?;
    }
    csv.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> TraceError {
    TraceError::Io(std::io::Error::other(e))
}

/// Knobs of the synthetic workload: a base rate per class modulated by daily
/// and weekly sinusoids, log-normal noise with mean 1, and occasional
/// one-hour spikes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SyntheticParams {
    pub days: u32,
    pub base1: f64,
    pub base2: f64,
    pub daily_amp: f64,
    pub weekly_amp: f64,
    pub noise_cv: f64,
    pub spike_prob: f64,
    pub spike_mult: f64,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            days: 30,
            base1: 120.0,
            base2: 100.0,
            daily_amp: 0.3,
            weekly_amp: 0.1,
            noise_cv: 0.05,
            spike_prob: 0.005,
            spike_mult: 0.5,
            seed: 7,
        }
    }
}

pub fn gen_synthetic(p: &SyntheticParams) -> Result<Trace, TraceError> {
    let fractions = [p.daily_amp, p.weekly_amp, p.noise_cv, p.spike_prob, p.spike_mult];
    if fractions.iter().any(|f| !(*f >= 0.0)) || !(p.base1 >= 0.0 && p.base2 >= 0.0) {
        return Err(TraceError::Invalid("synthetic parameters must be non-negative".into()));
    }
    if p.spike_prob > 1.0 {
        return Err(TraceError::Invalid("spike probability must be <= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    // Log-normal factor with unit mean and coefficient of variation `noise_cv`.
    let sigma = (1.0 + p.noise_cv * p.noise_cv).ln().sqrt();
    let normal = Normal::new(-0.5 * sigma * sigma, sigma).map_err(|e| TraceError::Invalid(e.to_string()))?;
    let hours = p.days as usize * 24;
    let two_pi = std::f64::consts::TAU;
    let rates = (0..hours).map(|h| {
        let t = h as f64;
        let season = (1.0 + p.daily_amp * (two_pi * t / 24.0).sin()) * (1.0 + p.weekly_amp * (two_pi * t / 168.0).sin());
        let spike = if rng.random::<f64>() < p.spike_prob { 1.0 + p.spike_mult } else { 1.0 };
        let n1 = normal.sample(&mut rng).exp();
        let n2 = normal.sample(&mut rng).exp();
        (
            (p.base1 * season * n1 * spike).max(0.0),
            (p.base2 * season * n2 * spike).max(0.0),
        )
    });
    Trace::from_rates(rates.collect::<Vec<_>>())
}
