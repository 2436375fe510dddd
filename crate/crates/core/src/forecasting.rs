//! Holt (double exponential) smoothing of per-epoch arrival rates and the
//! empirical distribution of its relative forecast error.
//!
//! ```text
//! level' = α·x + (1 - α)·(level + trend)
//! trend' = β·(level' - level) + (1 - β)·trend
//! next   = max(0, level' + trend')
//! ```
//!
//! The first observation seeds the level and the second seeds the trend.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 0.5;
/// 30 days of 2-hour epochs.
pub const DEFAULT_WINDOW: usize = 360;
/// Error percentile used until enough history exists.
pub const DEFAULT_INFLATION: f64 = 0.11;
pub const DEFAULT_MIN_SAMPLES: usize = 50;
pub const DEFAULT_PERCENTILE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingState {
    level: f64,
    trend: f64,
    alpha: f64,
    beta: f64,
    seen: u32,
}

impl SmoothingState {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Domain("smoothing constants must lie in (0, 1]"));
        }
        Ok(Self {
            level: 0.0,
            trend: 0.0,
            alpha,
            beta,
            seen: 0,
        })
    }

    pub fn initialized(&self) -> bool {
        self.seen >= 2
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn trend(&self) -> f64 {
        self.trend
    }

    /// One-step-ahead forecast from the current state, or `None` before the
    /// first observation.
    pub fn forecast(&self) -> Option<f64> {
        match self.seen {
            0 => None,
            _ => Some((self.level + self.trend).max(0.0)),
        }
    }

    /// Absorbs one observation and returns the forecast for the next epoch.
    pub fn update(&mut self, observed: f64) -> f64 {
        let observed = observed.max(0.0);
        match self.seen {
            0 => {
                self.level = observed;
                self.trend = 0.0;
            }
            1 => {
                self.trend = observed - self.level;
                self.level = observed;
            }
            _ => {
                let prev = self.level;
                self.level = self.alpha * observed + (1.0 - self.alpha) * (self.level + self.trend);
                self.trend = self.beta * (self.level - prev) + (1.0 - self.beta) * self.trend;
            }
        }
        self.seen = self.seen.saturating_add(1);
        (self.level + self.trend).max(0.0)
    }
}

impl Default for SmoothingState {
    fn default() -> Self {
        Self::new(DEFAULT_ALPHA, DEFAULT_BETA).expect("default constants are valid")
    }
}

/// What [`ErrorHistory::record`] did with a (forecast, actual) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Recorded {
    Stored(f64),
    /// The actual rate was zero; nothing to learn from.
    SkippedIdle,
    /// The forecast was zero, so the relative error is undefined.
    SkippedZeroForecast,
}

/// Sliding window of relative forecast errors `ε = (actual - forecast) / forecast`.
///
/// Positive values mean the forecast was too low, so the upper percentile
/// of `ε` is the inflation factor needed to cover that fraction of epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorHistory {
    errors: VecDeque<f64>,
    capacity: usize,
    min_samples: usize,
    fallback: f64,
}

impl ErrorHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            errors: VecDeque::with_capacity(capacity.min(4096)),
            capacity: capacity.max(1),
            min_samples: DEFAULT_MIN_SAMPLES,
            fallback: DEFAULT_INFLATION,
        }
    }

    /// Sets the cold-start rule for [`ErrorHistory::inflation`]: `fallback`
    /// is used until `min_samples` errors are stored.
    pub fn with_cold_start(mut self, min_samples: usize, fallback: f64) -> Self {
        self.min_samples = min_samples;
        self.fallback = fallback;
        self
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.errors.iter().copied()
    }

    pub fn record(&mut self, forecast: f64, actual: f64) -> Recorded {
        if !(actual > 0.0) {
            return Recorded::SkippedIdle;
        }
        if !(forecast > 0.0) {
            return Recorded::SkippedZeroForecast;
        }
        let eps = (actual - forecast) / forecast;
        if self.errors.len() == self.capacity {
            self.errors.pop_front();
        }
        self.errors.push_back(eps);
        Recorded::Stored(eps)
    }

    /// Nearest-rank `x`-quantile of the stored errors.
    pub fn percentile(&self, x: f64) -> Option<f64> {
        if self.errors.is_empty() || !(x > 0.0 && x < 1.0) {
            return None;
        }
        let mut sorted: Vec<f64> = self.errors.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let rank = crate::math::ceil_count(x * sorted.len() as f64).clamp(1, sorted.len() as u32);
        Some(sorted[rank as usize - 1])
    }

    /// The inflation factor to apply at level `x`, honouring the cold-start
    /// fallback.
    pub fn inflation(&self, x: f64) -> f64 {
        if self.errors.len() < self.min_samples.max(1) {
            return self.fallback;
        }
        self.percentile(x).unwrap_or(self.fallback)
    }
}

impl Default for ErrorHistory {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW)
    }
}
