//! Erlang-B blocking for M/GI/n/n loss systems.
//!
//! Integer server counts use the forward recursion
//! `B(k) = ρ·B(k-1) / (k + ρ·B(k-1))`, which never overflows. Fractional
//! counts (needed once Hayward's transformation scales `n` by the peakedness)
//! go through the upper incomplete gamma function,
//! `B(n, ρ) = ρ^n e^{-ρ} / Γ(n+1, ρ)`, evaluated as a reciprocal in log space.

use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

const MAX_ITER: usize = 20_000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Blocking probability of an Erlang loss system, optionally with the full
/// occupancy distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub servers: f64,
    pub blocking: f64,
    /// `p_0..=p_n`; only present for integer server counts.
    pub distribution: Option<Vec<f64>>,
}

fn check_args(n: f64, rho: f64) -> Result<()> {
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::Domain("server count must be finite and >= 0"));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::Domain("offered load must be finite and >= 0"));
    }
    Ok(())
}

/// Erlang-B blocking probability `B(n, ρ)` for a possibly fractional `n`.
///
/// `B(0, ρ) = 1` and `B(n, 0) = 0` for `n > 0`.
pub fn erlang_b(n: f64, rho: f64) -> Result<f64> {
    check_args(n, rho)?;
    if math::trunc(n) == n && n <= u32::MAX as f64 {
        Ok(erlang_b_int(n as u32, rho))
    } else {
        erlang_b_gamma(n, rho)
    }
}

/// Integer-`n` Erlang-B by forward recursion. `rho` must be `>= 0`.
pub fn erlang_b_int(n: u32, rho: f64) -> f64 {
    let mut b = 1.0;
    for k in 1..=n {
        let rb = rho * b;
        b = rb / (k as f64 + rb);
    }
    b
}

/// Erlang-B through the upper incomplete gamma function, valid for any real
/// `n >= 0`. [`erlang_b`] only takes this route for fractional `n`; it is
/// public so callers can cross-check the two routes.
pub fn erlang_b_gamma(n: f64, rho: f64) -> Result<f64> {
    check_args(n, rho)?;
    if n == 0.0 {
        return Ok(1.0);
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let a = n + 1.0;
    let x = rho;
    if x >= a + 1.0 {
        // Γ(a, x) = x^a e^{-x} / f with f the continued fraction, so B = f / x.
        let f = upper_gamma_fraction(a, x)?;
        Ok((f / x).min(1.0))
    } else {
        // Γ(a, x) = Γ(a)·(1 - P(a, x)); 1/B = Γ(a, x)·x^{-n}·e^{x}.
        let p = lower_regularized_series(a, x)?;
        let ln_inv_b = math::lgamma(a) + math::ln_1p(-p) - n * math::ln(x) + x;
        Ok(math::exp(-ln_inv_b).min(1.0))
    }
}

/// Regularized lower incomplete gamma `P(a, x)` by its power series; intended
/// for `x < a + 1`.
fn lower_regularized_series(a: f64, x: f64) -> Result<f64> {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            let ln_prefactor = -x + a * math::ln(x) - math::lgamma(a);
            return Ok((math::exp(ln_prefactor) * sum).min(1.0));
        }
    }
    Err(Error::NoConvergence("incomplete gamma series"))
}

/// Modified Lentz evaluation of
/// `f = b0 + a1/(b1 + a2/(b2 + ...))`, `b_k = x + 2k + 1 - a`, `a_k = k(a - k)`,
/// for which `Γ(a, x) = x^a e^{-x} / f`. Intended for `x >= a + 1`.
fn upper_gamma_fraction(a: f64, x: f64) -> Result<f64> {
    let b0 = x + 1.0 - a;
    let mut f = if b0.abs() < TINY { TINY } else { b0 };
    let mut c = f;
    let mut d = 0.0;
    for k in 1..=MAX_ITER {
        let kf = k as f64;
        let ak = kf * (a - kf);
        let bk = b0 + 2.0 * kf;
        d = bk + ak * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = bk + ak / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok(f);
        }
    }
    Err(Error::NoConvergence("incomplete gamma continued fraction"))
}

/// Stationary occupancy distribution of the M/GI/n/n birth-death chain,
/// `p_k ∝ ρ^k / k!`, computed by direct normalization. Its last entry is
/// the blocking probability.
pub fn stationary_distribution(n: u32, rho: f64) -> Result<LossEvaluation> {
    check_args(n as f64, rho)?;
    let mut weights = Vec::with_capacity(n as usize + 1);
    let mut w = 1.0_f64;
    weights.push(w);
    for k in 1..=n {
        w = w * rho / k as f64;
        if w > 1e250 {
            for v in weights.iter_mut() {
                *v *= 1e-250;
            }
            w *= 1e-250;
        }
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    for v in weights.iter_mut() {
        *v /= total;
    }
    let blocking = weights[n as usize];
    Ok(LossEvaluation {
        servers: n as f64,
        blocking,
        distribution: Some(weights),
    })
}

/// Smallest integer `n` with `B(n, ρ) < τ`. Zero load needs no servers.
pub fn min_servers_for_blocking(rho: f64, tau: f64) -> Result<u32> {
    check_args(0.0, rho)?;
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Domain("blocking target must lie in (0, 1]"));
    }
    if rho == 0.0 {
        return Ok(0);
    }
    // B(0) = 1 >= τ always, so the answer is at least 1.
    let mut lo = 0u32;
    let mut hi = 1u32;
    while erlang_b_int(hi, rho) >= tau {
        lo = hi;
        hi = hi
            .checked_mul(2)
            .ok_or(Error::Domain("blocking target unreachable"))?;
    }
    // Invariant: B(lo) >= τ > B(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if erlang_b_int(mid, rho) < tau {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
