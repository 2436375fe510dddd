//! Allocation policies.
//!
//! * [`optimize_exhaustive`] scores every `(n1, n2)` with `n1 + n2 <= S`; it
//!   is quadratic in `S` and guarded by [`EXHAUSTIVE_LIMIT`].
//! * [`optimize_hill_climb`] is the on-line optimiser: steepest-ascent over
//!   single-server moves between the premium, shared and off pools, restarted
//!   from all-off, all-premium and load-proportional splits.
//! * [`penalty_capping`] sizes the premium pool for a blocking target and
//!   then the shared pool in isolation.
//! * [`percentile_allocation`] / [`percentile_pair`] provision each queue for
//!   its forecast inflated by a forecast-error percentile.
//! * [`always_on`] runs everything as one shared pool.

use crate::economics::{revenue_isolated, revenue_overflow, Allocation, EconomicParams, Load, RevenueBreakdown};
use crate::loss::{erlang_b_int, min_servers_for_blocking};
use crate::math::{ceil_count, round};
use crate::{Error, Result};

/// Largest farm [`optimize_exhaustive`] accepts.
pub const EXHAUSTIVE_LIMIT: u32 = 500;

/// Premium blocking target used by Penalty Capping (0.001%).
pub const DEFAULT_TAU: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Isolated,
    Overflow,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Isolated => "isolated",
            Model::Overflow => "overflow",
        }
    }

    pub fn evaluate(&self, alloc: &Allocation, load: &Load, params: &EconomicParams) -> Result<RevenueBreakdown> {
        match self {
            Model::Isolated => revenue_isolated(alloc, load, params),
            Model::Overflow => revenue_overflow(alloc, load, params),
        }
    }
}

impl core::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isolated" => Ok(Model::Isolated),
            "overflow" => Ok(Model::Overflow),
            _ => Err(Error::Domain("model must be `isolated` or `overflow`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub model: Model,
    /// Premium blocking target for Penalty Capping.
    pub tau: f64,
    /// Forecast-error percentile for the Percentile policies.
    pub percentile_x: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            model: Model::Overflow,
            tau: DEFAULT_TAU,
            percentile_x: crate::forecasting::DEFAULT_PERCENTILE,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Domain("tau must lie in (0, 1)"));
        }
        if !(self.percentile_x > 0.0 && self.percentile_x < 1.0) {
            return Err(Error::Domain("percentile must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// An allocation together with its evaluated revenue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solution {
    pub allocation: Allocation,
    pub breakdown: RevenueBreakdown,
}

impl Solution {
    fn evaluate(alloc: Allocation, load: &Load, params: &EconomicParams, model: Model) -> Result<Self> {
        Ok(Self {
            allocation: alloc,
            breakdown: model.evaluate(&alloc, load, params)?,
        })
    }

    pub fn revenue(&self) -> f64 {
        self.breakdown.revenue
    }

    /// Higher revenue wins; ties go to fewer running servers, then fewer
    /// premium servers.
    fn beats(&self, other: &Solution) -> bool {
        let (a, b) = (self.revenue(), other.revenue());
        if a != b {
            return a > b;
        }
        let (x, y) = (&self.allocation, &other.allocation);
        (x.running(), x.n1) < (y.running(), y.n1)
    }
}

/// Number of ways to split `servers` among the premium, shared and off pools.
pub fn count_allocations(servers: u32) -> u64 {
    let s = servers as u64;
    (s + 2) * (s + 1) / 2
}

pub fn optimize_exhaustive(servers: u32, load: &Load, params: &EconomicParams, model: Model) -> Result<Solution> {
    if servers > EXHAUSTIVE_LIMIT {
        return Err(Error::SearchTooLarge {
            servers,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut best = Solution::evaluate(Allocation::new(0, 0, servers)?, load, params, model)?;
    for running in 0..=servers {
        for n1 in 0..=running {
            let cand = Solution::evaluate(Allocation::new(n1, running - n1, servers)?, load, params, model)?;
            if cand.beats(&best) {
                best = cand;
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pool {
    Premium,
    Shared,
    Off,
}

/// Neighbour order, which also breaks ties between equally good moves.
const MOVES: [(Pool, Pool); 6] = [
    (Pool::Premium, Pool::Shared),
    (Pool::Shared, Pool::Premium),
    (Pool::Off, Pool::Premium),
    (Pool::Off, Pool::Shared),
    (Pool::Premium, Pool::Off),
    (Pool::Shared, Pool::Off),
];

fn apply_move(alloc: &Allocation, from: Pool, to: Pool) -> Option<Allocation> {
    let (mut n1, mut n2) = (alloc.n1, alloc.n2);
    match from {
        Pool::Premium => n1 = n1.checked_sub(1)?,
        Pool::Shared => n2 = n2.checked_sub(1)?,
        Pool::Off if alloc.n_off() == 0 => return None,
        Pool::Off => {}
    }
    match to {
        Pool::Premium => n1 += 1,
        Pool::Shared => n2 += 1,
        Pool::Off => {}
    }
    Some(Allocation {
        n1,
        n2,
        total: alloc.total,
    })
}

/// Outcome of one hill-climbing run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClimbRun {
    pub start: Allocation,
    pub solution: Solution,
    pub steps: u64,
}

/// Steepest ascent from `start`: move to the best strictly improving
/// neighbour until none exists.
pub fn hill_climb_from(start: Allocation, load: &Load, params: &EconomicParams, model: Model) -> Result<ClimbRun> {
    let mut current = Solution::evaluate(start, load, params, model)?;
    let mut steps = 0u64;
    loop {
        let mut best: Option<Solution> = None;
        for (from, to) in MOVES {
            if let Some(next) = apply_move(&current.allocation, from, to) {
                let cand = Solution::evaluate(next, load, params, model)?;
                if best.is_none_or(|b| cand.revenue() > b.revenue()) {
                    best = Some(cand);
                }
            }
        }
        match best {
            Some(b) if b.revenue() > current.revenue() => {
                current = b;
                steps += 1;
            }
            _ => break,
        }
    }
    Ok(ClimbRun {
        start,
        solution: current,
        steps,
    })
}

/// The three restart points: all off, all premium, and `⌈ρ_i⌉` per pool
/// (scaled down proportionally if it does not fit).
pub fn restart_points(servers: u32, load: &Load) -> [Allocation; 3] {
    let proportional = fit_pair(servers, ceil_count(load.rho1), ceil_count(load.rho2));
    [
        Allocation {
            n1: 0,
            n2: 0,
            total: servers,
        },
        Allocation {
            n1: servers,
            n2: 0,
            total: servers,
        },
        proportional,
    ]
}

/// Best-of-three-restarts hill climbing.
pub fn optimize_hill_climb(servers: u32, load: &Load, params: &EconomicParams, model: Model) -> Result<Solution> {
    let mut best: Option<Solution> = None;
    for start in restart_points(servers, load) {
        let run = hill_climb_from(start, load, params, model)?;
        if best.is_none_or(|b| run.solution.beats(&b)) {
            best = Some(run.solution);
        }
    }
    Ok(best.expect("three restarts always run"))
}

/// Scales `(n1, n2)` down proportionally so that it fits in `servers`.
pub fn fit_pair(servers: u32, n1: u32, n2: u32) -> Allocation {
    let wanted = n1 as u64 + n2 as u64;
    if wanted <= servers as u64 {
        return Allocation {
            n1,
            n2,
            total: servers,
        };
    }
    let scaled1 = round(servers as f64 * n1 as f64 / wanted as f64) as u32;
    let scaled1 = scaled1.min(servers);
    Allocation {
        n1: scaled1,
        n2: servers - scaled1,
        total: servers,
    }
}

/// Penalty Capping: the smallest premium pool whose blocking stays below
/// `tau`, then the shared-pool size that maximises the basic-class revenue
/// with the premium overflow `ω1` added to its load, treating that pool as an
/// isolated Erlang system.
pub fn penalty_capping(servers: u32, load: &Load, params: &EconomicParams, tau: f64) -> Result<Allocation> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain("tau must lie in (0, 1)"));
    }
    let n1 = min_servers_for_blocking(load.rho1, tau)?.min(servers);
    let omega1 = load.rho1 * erlang_b_int(n1, load.rho1);
    let shared_load = Load::new(0.0, load.rho2 + omega1, load.mu)?;
    let n2 = best_shared_pool(servers - n1, &shared_load, params)?;
    Allocation::new(n1, n2, servers)
}

/// Basic-class revenue of an isolated pool of `n` servers.
pub fn shared_pool_revenue(n: u32, load: &Load, params: &EconomicParams) -> Result<f64> {
    let alloc = Allocation { n1: 0, n2: n, total: n };
    Ok(revenue_isolated(&alloc, load, params)?.revenue2)
}

/// Argmax of [`shared_pool_revenue`] over `0..=max`: binary search for the
/// first non-positive forward difference. Valid because that revenue is
/// either concave or monotonically decreasing in `n`.
pub fn best_shared_pool(max: u32, load: &Load, params: &EconomicParams) -> Result<u32> {
    let gain = |n: u32| -> Result<f64> { Ok(shared_pool_revenue(n + 1, load, params)? - shared_pool_revenue(n, load, params)?) };
    let (mut lo, mut hi) = (0u32, max);
    // Smallest n in [lo, hi) with gain(n) <= 0, or `max` if none.
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if gain(mid)? <= 0.0 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// Servers for one queue: `⌈ρ̂·(1 + Δ)⌉`.
pub fn percentile_allocation(forecast_rho: f64, delta: f64) -> u32 {
    if !(forecast_rho > 0.0) {
        return 0;
    }
    ceil_count(forecast_rho + delta.max(-1.0) * forecast_rho)
}

/// The Percentile policy: each queue sized independently, then fitted to the
/// farm.
pub fn percentile_pair(servers: u32, forecast: &Load, delta1: f64, delta2: f64) -> Allocation {
    fit_pair(
        servers,
        percentile_allocation(forecast.rho1, delta1),
        percentile_allocation(forecast.rho2, delta2),
    )
}

/// Hill climbing on loads inflated by the forecast-error percentiles.
/// The returned breakdown is evaluated at the inflated loads.
pub fn percentile_optimal(
    servers: u32,
    forecast: &Load,
    delta1: f64,
    delta2: f64,
    params: &EconomicParams,
    model: Model,
) -> Result<Solution> {
    optimize_hill_climb(servers, &forecast.inflated(delta1, delta2), params, model)
}

/// Every server on, in a single shared pool.
pub fn always_on(servers: u32) -> Allocation {
    Allocation {
        n1: 0,
        n2: servers,
        total: servers,
    }
}
