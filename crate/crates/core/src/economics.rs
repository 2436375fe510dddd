//! Expected revenue per hour for a given split of the server farm.
//!
//! `R = R1 + R2` with `R1 = (c1/μ)·T1 - cost(P1) - D` and
//! `R2 = (c2/μ)·T2 - cost(P2)`, where `cost(P) = r·(P/1000)·PUE·(1 + indirect)`
//! turns watts into dollars per hour. Two traffic models are available:
//! isolated pools (two independent Erlang loss systems) and overflow, where
//! premium jobs blocked in pool 1 are offered to the shared pool 2.

use crate::loss::erlang_b_int;
use crate::overflow::{hayward_blocking, overflow_stream, split_losses, superpose, TrafficStream};
use crate::{Error, Result};

/// Prices, penalty and power figures. Defaults are the reference settings:
/// 0.03/0.085 $/server-hour charges, 0.2 $ penalty, 0.1 $/kWh,
/// 59 W idle / 83.5 W busy, PUE 1.7, 70% CPU demand per job.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EconomicParams {
    /// Premium charge, $ per server-hour.
    pub c1: f64,
    /// Basic charge, $ per server-hour.
    pub c2: f64,
    /// Penalty per lost premium job, $.
    pub d: f64,
    /// Electricity price, $ per kWh.
    pub r: f64,
    /// Idle server power, W.
    pub e1: f64,
    /// Busy server power at full CPU, W.
    pub e2: f64,
    pub pue: f64,
    /// Average CPU share a running job uses.
    pub cpu_util: f64,
    /// Indirect costs as a multiple of the electricity bill.
    pub indirect_multiplier: f64,
    /// Round the expected busy-server count up before pricing its power.
    pub ceiling_busy: bool,
}

impl Default for EconomicParams {
    fn default() -> Self {
        Self {
            c1: 0.03,
            c2: 0.085,
            d: 0.2,
            r: 0.1,
            e1: 59.0,
            e2: 83.5,
            pue: 1.7,
            cpu_util: 0.7,
            indirect_multiplier: 0.0,
            ceiling_busy: false,
        }
    }
}

impl EconomicParams {
    pub fn validate(&self) -> Result<()> {
        let money = [self.c1, self.c2, self.d, self.r, self.indirect_multiplier];
        if money.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("charges, penalty, price and indirect multiplier must be >= 0"));
        }
        if !(self.e1 > 0.0 && self.e2 >= self.e1 && self.e2.is_finite()) {
            return Err(Error::Domain("power figures need e2 >= e1 > 0"));
        }
        if !(self.pue >= 1.0 && self.pue.is_finite()) {
            return Err(Error::Domain("PUE must be >= 1"));
        }
        if !(self.cpu_util > 0.0 && self.cpu_util <= 1.0) {
            return Err(Error::Domain("CPU utilisation must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Power of a server running a job at the configured CPU share.
    pub fn busy_power(&self) -> f64 {
        self.e1 + self.cpu_util * (self.e2 - self.e1)
    }

    /// $/hour for a sustained draw of `watts` at the servers.
    pub fn energy_cost(&self, watts: f64) -> f64 {
        self.r * (watts / 1000.0) * self.pue * (1.0 + self.indirect_multiplier)
    }
}

/// Servers in the premium pool (`n1`) and shared pool (`n2`) out of `total`;
/// the rest are switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Allocation {
    pub n1: u32,
    pub n2: u32,
    pub total: u32,
}

impl Allocation {
    pub fn new(n1: u32, n2: u32, total: u32) -> Result<Self> {
        if n1 as u64 + n2 as u64 > total as u64 {
            return Err(Error::Domain("allocation exceeds the server count"));
        }
        Ok(Self { n1, n2, total })
    }

    pub fn n_off(&self) -> u32 {
        self.total - self.n1 - self.n2
    }

    pub fn running(&self) -> u32 {
        self.n1 + self.n2
    }
}

/// Offered loads per class (Erlangs) and the common service rate (jobs/hour).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Load {
    pub rho1: f64,
    pub rho2: f64,
    pub mu: f64,
}

impl Load {
    pub fn new(rho1: f64, rho2: f64, mu: f64) -> Result<Self> {
        if !(rho1 >= 0.0 && rho2 >= 0.0) || !rho1.is_finite() || !rho2.is_finite() {
            return Err(Error::Domain("offered loads must be finite and >= 0"));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Domain("service rate must be > 0"));
        }
        Ok(Self { rho1, rho2, mu })
    }

    pub fn from_rates(lambda1: f64, lambda2: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::Domain("service rate must be > 0"));
        }
        Self::new(lambda1 / mu, lambda2 / mu, mu)
    }

    pub fn lambda1(&self) -> f64 {
        self.rho1 * self.mu
    }

    pub fn lambda2(&self) -> f64 {
        self.rho2 * self.mu
    }

    /// Both loads multiplied by `1 + delta`, clamped at zero.
    pub fn inflated(&self, delta1: f64, delta2: f64) -> Self {
        Self {
            rho1: (self.rho1 * (1.0 + delta1)).max(0.0),
            rho2: (self.rho2 * (1.0 + delta2)).max(0.0),
            mu: self.mu,
        }
    }
}

/// Everything the revenue model says about one allocation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RevenueBreakdown {
    /// Total net revenue, $/hour.
    pub revenue: f64,
    pub revenue1: f64,
    pub revenue2: f64,
    /// Accepted jobs per hour.
    pub throughput1: f64,
    pub throughput2: f64,
    /// Mean server power attributed to each pool, W.
    pub power1: f64,
    pub power2: f64,
    /// Penalties, $/hour.
    pub penalty: f64,
    /// Lost load per class, Erlangs.
    pub lost1: f64,
    pub lost2: f64,
}

/// Mean power of `n_on` powered servers of which `busy` (on average) run jobs.
pub fn power_draw(n_on: u32, busy: f64, params: &EconomicParams) -> Result<f64> {
    if !(busy >= 0.0) {
        return Err(Error::Domain("busy server count must be >= 0"));
    }
    let busy = if params.ceiling_busy { crate::math::ceil_tol(busy) } else { busy };
    Ok(n_on as f64 * params.e1 + busy * (params.busy_power() - params.e1))
}

/// Revenue with the two pools kept apart: each class sees its own Erlang
/// loss system.
pub fn revenue_isolated(alloc: &Allocation, load: &Load, params: &EconomicParams) -> Result<RevenueBreakdown> {
    let mu = load.mu;
    let p1 = erlang_b_int(alloc.n1, load.rho1);
    let p2 = erlang_b_int(alloc.n2, load.rho2);
    let throughput1 = load.lambda1() * (1.0 - p1);
    let throughput2 = load.lambda2() * (1.0 - p2);
    let penalty = params.d * load.lambda1() * p1;
    let power1 = power_draw(alloc.n1, throughput1 / mu, params)?;
    let power2 = power_draw(alloc.n2, throughput2 / mu, params)?;
    let revenue1 = params.c1 / mu * throughput1 - params.energy_cost(power1) - penalty;
    let revenue2 = params.c2 / mu * throughput2 - params.energy_cost(power2);
    Ok(RevenueBreakdown {
        revenue: revenue1 + revenue2,
        revenue1,
        revenue2,
        throughput1,
        throughput2,
        power1,
        power2,
        penalty,
        lost1: load.rho1 * p1,
        lost2: load.rho2 * p2,
    })
}

/// Revenue when premium jobs blocked in pool 1 overflow into pool 2.
///
/// The premium overflow (Riordan moments) and the Poisson basic stream are
/// superposed, the shared pool's loss comes from Hayward's approximation, and
/// the loss is attributed to classes by variance share. A class is never
/// charged more loss than it offers to the shared pool; any such excess moves
/// to the other class.
pub fn revenue_overflow(alloc: &Allocation, load: &Load, params: &EconomicParams) -> Result<RevenueBreakdown> {
    let mu = load.mu;
    let premium = overflow_stream(TrafficStream::poisson(load.rho1)?, alloc.n1)?;
    let basic = TrafficStream::poisson(load.rho2)?;
    let shared = superpose([&premium, &basic]);

    let total_lost = if shared.mean() > 0.0 {
        shared.mean() * hayward_blocking(alloc.n2 as f64, &shared)?
    } else {
        0.0
    };
    let (lost1, lost2) = if alloc.n2 == 0 {
        // An empty shared pool blocks everything offered to it.
        (premium.mean(), basic.mean())
    } else {
        let parts = split_losses(total_lost, &[premium.variance(), basic.variance()], shared.variance())?;
        cap_losses(parts[0], parts[1], premium.mean(), basic.mean())
    };

    let throughput1 = (load.lambda1() - lost1 * mu).max(0.0);
    let throughput2 = (load.lambda2() - lost2 * mu).max(0.0);
    let penalty = params.d * (lost1 * mu);

    // Premium occupancy beyond n1 runs on pool-2 servers.
    let busy1 = throughput1 / mu;
    let spill = (busy1 - alloc.n1 as f64).max(0.0);
    let power1 = power_draw(alloc.n1, busy1.min(alloc.n1 as f64), params)?;
    let power2 = power_draw(alloc.n2, throughput2 / mu + spill, params)?;

    let revenue1 = params.c1 / mu * throughput1 - params.energy_cost(power1) - penalty;
    let revenue2 = params.c2 / mu * throughput2 - params.energy_cost(power2);
    Ok(RevenueBreakdown {
        revenue: revenue1 + revenue2,
        revenue1,
        revenue2,
        throughput1,
        throughput2,
        power1,
        power2,
        penalty,
        lost1,
        lost2,
    })
}

fn cap_losses(lost1: f64, lost2: f64, offered1: f64, offered2: f64) -> (f64, f64) {
    if lost1 > offered1 {
        (offered1, (lost2 + lost1 - offered1).min(offered2))
    } else if lost2 > offered2 {
        ((lost1 + lost2 - offered2).min(offered1), offered2)
    } else {
        (lost1, lost2)
    }
}
