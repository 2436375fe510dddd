//! Overflow traffic characterised by its first two moments.
//!
//! A stream is summarised by the mean and variance of the number of servers it
//! would keep busy in an infinite group. Overflow from an Erlang group uses
//! Riordan's variance formula; blocking of a non-Poisson stream in a finite
//! group uses Hayward's transformation `B(n/Z, ρ/Z)`.

use alloc::vec::Vec;

use crate::loss::{erlang_b, erlang_b_int};
use crate::{Error, Result};

/// Mean and variance of an offered traffic stream, in Erlangs and Erlangs².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficStream {
    mean: f64,
    variance: f64,
}

impl TrafficStream {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::Domain("stream mean must be finite and >= 0"));
        }
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::Domain("stream variance must be finite and >= 0"));
        }
        Ok(Self { mean, variance })
    }

    /// Poisson traffic of `rho` Erlangs (variance equals mean).
    pub fn poisson(rho: f64) -> Result<Self> {
        Self::new(rho, rho)
    }

    pub fn zero() -> Self {
        Self {
            mean: 0.0,
            variance: 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Variance-to-mean ratio; 1 for an empty stream.
    pub fn peakedness(&self) -> f64 {
        if self.mean > 0.0 {
            self.variance / self.mean
        } else {
            1.0
        }
    }

    pub fn is_poisson(&self) -> bool {
        (self.peakedness() - 1.0).abs() <= 1e-9
    }
}

/// Traffic overflowing an `n`-server Erlang group offered the Poisson stream
/// `offered`: mean `ω = ρ·B(n, ρ)` and Riordan variance
/// `ω·(1 - ω + ρ / (n + 1 - ρ + ω))`.
///
/// The denominator is at least 1 because the carried load `ρ - ω` never
/// exceeds `n`.
pub fn overflow_stream(offered: TrafficStream, n: u32) -> Result<TrafficStream> {
    if !offered.is_poisson() {
        return Err(Error::Domain("Riordan's formula needs Poisson offered traffic"));
    }
    let rho = offered.mean();
    if rho == 0.0 {
        return Ok(TrafficStream::zero());
    }
    let omega = rho * erlang_b_int(n, rho);
    let variance = omega * (1.0 - omega + rho / (n as f64 + 1.0 - rho + omega));
    TrafficStream::new(omega, variance.max(0.0))
}

/// Superposition of independent streams: means and variances add.
pub fn superpose<'a, I>(streams: I) -> TrafficStream
where
    I: IntoIterator<Item = &'a TrafficStream>,
{
    streams
        .into_iter()
        .fold(TrafficStream::zero(), |acc, s| TrafficStream {
            mean: acc.mean + s.mean,
            variance: acc.variance + s.variance,
        })
}

/// Hayward's approximation of the blocking seen by `stream` on `n` servers.
/// Exact for Poisson traffic.
pub fn hayward_blocking(n: f64, stream: &TrafficStream) -> Result<f64> {
    let z = stream.peakedness();
    if !(z > 0.0) {
        return Err(Error::Domain("peakedness must be positive"));
    }
    erlang_b(n / z, stream.mean() / z)
}

/// Splits a total lost load between classes in proportion to each class's
/// overflow variance. The rounding residue goes to the largest share (with a
/// last-ulp correction on the smallest) so the parts sum back to `total_lost`
/// exactly.
pub fn split_losses(
    total_lost: f64,
    class_variances: &[f64],
    total_variance: f64,
) -> Result<Vec<f64>> {
    if !(total_lost >= 0.0) {
        return Err(Error::Domain("lost load must be >= 0"));
    }
    if class_variances.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("class variances must be >= 0"));
    }
    let summed: f64 = class_variances.iter().sum();
    if (summed - total_variance).abs() > 1e-9 * total_variance.abs().max(1.0) {
        return Err(Error::Domain(
            "total variance must equal the sum of class variances",
        ));
    }
    if total_lost == 0.0 {
        return Ok(alloc::vec![0.0; class_variances.len()]);
    }
    if total_variance == 0.0 || class_variances.is_empty() {
        return Err(Error::Domain("cannot split a positive loss over zero variance"));
    }
    let mut parts: Vec<f64> = class_variances
        .iter()
        .map(|v| total_lost * v / total_variance)
        .collect();
    let largest = parts
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > parts[best] { i } else { best });
    let others: f64 = parts
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != largest)
        .map(|(_, v)| v)
        .sum();
    parts[largest] = (total_lost - others).max(0.0);
    // The float sum can still be an ulp off. Nudge the smallest positive
    // share, whose ulp is finest, until it is exact.
    let finest = parts
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map_or(largest, |(i, _)| i);
    for _ in 0..64 {
        let sum: f64 = parts.iter().sum();
        if sum == total_lost {
            break;
        }
        let v = parts[finest];
        parts[finest] = if sum < total_lost { v.next_up() } else { v.next_down().max(0.0) };
    }
    Ok(parts)
}
