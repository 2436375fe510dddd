//! Discrete-event simulation of the two-pool farm.
//!
//! Arrivals of each class form a Poisson process whose rate is piecewise
//! constant per trace hour. Premium jobs try pool 1 and, in overflow mode,
//! spill into pool 2; basic jobs only use pool 2. Jobs that find no idle
//! admissible server are lost. The policy is consulted at every epoch
//! boundary and the new allocation applies immediately, except that a busy
//! server scheduled to go off (or to change pool) keeps running its job and
//! only then switches.
//!
//! Every class draws interarrival and service times from its own random
//! streams, and a service time is drawn for each arrival whether or not it is
//! admitted, so two runs with the same seed see the same jobs regardless of
//! the policy.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use farmrev_core::forecasting::{ErrorHistory, SmoothingState};
use farmrev_core::policies::{self, Model, PolicyConfig};
use farmrev_core::{Allocation, EconomicParams, Load};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, LogNormal};
use serde::Serialize;
use thiserror::Error;

use crate::trace::Trace;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("policy failed at epoch {epoch}: {source}")]
    Policy {
        epoch: usize,
        source: farmrev_core::Error,
    },
}

/// Job length distribution, always with mean `1/μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ServiceDistribution {
    Exponential,
    Deterministic,
    /// Log-normal with shape `sigma` (the standard deviation of the log).
    Lognormal { sigma: f64 },
}

impl ServiceDistribution {
    pub fn name(&self) -> String {
        match self {
            ServiceDistribution::Exponential => "exponential".into(),
            ServiceDistribution::Deterministic => "deterministic".into(),
            ServiceDistribution::Lognormal { sigma } => format!("lognormal({sigma})"),
        }
    }
}

impl std::str::FromStr for ServiceDistribution {
    type Err = String;

    /// `exponential`, `deterministic`, `lognormal` (σ = 1) or `lognormal:σ`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exponential" => Ok(Self::Exponential),
            "deterministic" => Ok(Self::Deterministic),
            "lognormal" => Ok(Self::Lognormal { sigma: 1.0 }),
            _ => match s.strip_prefix("lognormal:") {
                Some(sigma) => match sigma.parse::<f64>() {
                    Ok(sigma) if sigma > 0.0 && sigma.is_finite() => Ok(Self::Lognormal { sigma }),
                    _ => Err(format!("bad lognormal shape `{sigma}`")),
                },
                None => Err(format!(
                    "unknown service distribution `{s}` (exponential, deterministic, lognormal[:sigma])"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub total_servers: u32,
    /// Hours between policy invocations.
    pub epoch_length: f64,
    /// Service rate, jobs/hour; known to the policies.
    pub mu: f64,
    pub service: ServiceDistribution,
    #[serde(serialize_with = "model_name")]
    pub routing: Model,
    pub seed: u64,
    /// Hours excluded by [`Summary::from_epochs`].
    pub warmup: f64,
}

fn model_name<S: serde::Serializer>(m: &Model, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(m.name())
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            total_servers: 1000,
            epoch_length: 2.0,
            mu: 0.4,
            service: ServiceDistribution::Exponential,
            routing: Model::Overflow,
            seed: 1,
            warmup: 24.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.epoch_length > 0.0) || !self.epoch_length.is_finite() {
            return Err(SimError::Config("epoch length must be positive".into()));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(SimError::Config("service rate must be positive".into()));
        }
        if !(self.warmup >= 0.0) {
            return Err(SimError::Config("warmup must be >= 0".into()));
        }
        if let ServiceDistribution::Lognormal { sigma } = self.service {
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(SimError::Config("lognormal shape must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Arrival rates (jobs/hour) and service rate seen by a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandEstimate {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
}

impl DemandEstimate {
    pub fn load(&self) -> Result<Load, farmrev_core::Error> {
        Load::from_rates(self.lambda1, self.lambda2, self.mu)
    }
}

/// Rates observed during one epoch: arrivals divided by `epoch_length`.
pub fn measure_rates(stats: &EpochStats, epoch_length: f64, mu: f64) -> DemandEstimate {
    DemandEstimate {
        lambda1: stats.arrivals1 as f64 / epoch_length,
        lambda2: stats.arrivals2 as f64 / epoch_length,
        mu,
    }
}

/// Allocation policies the simulator can drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Hill climbing on the last epoch's measured rates under the configured model.
    Optimal,
    /// Hill climbing under the isolated model, with premium jobs never
    /// allowed into pool 2.
    Isolated,
    PenaltyCapping,
    Percentile,
    PercentileOptimal,
    AlwaysOn,
    Fixed(Allocation),
}

pub const POLICY_NAMES: [&str; 7] = [
    "optimal",
    "isolated",
    "penalty-capping",
    "percentile",
    "percentile-optimal",
    "always-on",
    "fixed",
];

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Optimal => "optimal",
            Policy::Isolated => "isolated",
            Policy::PenaltyCapping => "penalty-capping",
            Policy::Percentile => "percentile",
            Policy::PercentileOptimal => "percentile-optimal",
            Policy::AlwaysOn => "always-on",
            Policy::Fixed(_) => "fixed",
        }
    }

    /// Parses a policy name; `fixed` needs an allocation and is not accepted here.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "optimal" => Policy::Optimal,
            "isolated" => Policy::Isolated,
            "penalty-capping" => Policy::PenaltyCapping,
            "percentile" => Policy::Percentile,
            "percentile-optimal" => Policy::PercentileOptimal,
            "always-on" => Policy::AlwaysOn,
            _ => return None,
        })
    }

    /// Routing used when this policy runs on a farm configured with `routing`.
    pub fn routing(&self, routing: Model) -> Model {
        match self {
            Policy::Isolated => Model::Isolated,
            _ => routing,
        }
    }

    /// Model the policy optimises under.
    pub fn model(&self, config: &PolicyConfig) -> Model {
        match self {
            Policy::Isolated => Model::Isolated,
            _ => config.model,
        }
    }

    /// One-shot decision for a known demand, as used by `solve`.
    pub fn decide(
        &self,
        servers: u32,
        load: &Load,
        delta: (f64, f64),
        params: &EconomicParams,
        config: &PolicyConfig,
    ) -> Result<Allocation, farmrev_core::Error> {
        let model = self.model(config);
        Ok(match self {
            Policy::Optimal | Policy::Isolated => policies::optimize_hill_climb(servers, load, params, model)?.allocation,
            Policy::PenaltyCapping => policies::penalty_capping(servers, load, params, config.tau)?,
            Policy::Percentile => policies::percentile_pair(servers, load, delta.0, delta.1),
            Policy::PercentileOptimal => {
                policies::percentile_optimal(servers, load, delta.0, delta.1, params, model)?.allocation
            }
            Policy::AlwaysOn => policies::always_on(servers),
            Policy::Fixed(a) => Allocation::new(a.n1, a.n2, servers)?,
        })
    }

    fn uses_forecasts(&self) -> bool {
        matches!(self, Policy::Percentile | Policy::PercentileOptimal)
    }
}

/// Per-class Holt forecaster with its error history.
#[derive(Debug, Clone)]
struct Forecaster {
    smoothing: SmoothingState,
    history: ErrorHistory,
    pending: Option<f64>,
}

impl Forecaster {
    fn new() -> Self {
        Self {
            smoothing: SmoothingState::default(),
            history: ErrorHistory::default(),
            pending: None,
        }
    }

    /// Absorbs the rate measured over the last epoch and returns the forecast
    /// for the next one.
    fn observe(&mut self, measured: f64) -> f64 {
        if let Some(f) = self.pending {
            self.history.record(f, measured);
        }
        let next = self.smoothing.update(measured);
        self.pending = Some(next);
        next
    }
}

/// What happened during one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Epoch start, hours since the trace origin.
    pub start: f64,
    /// Hours; shorter than the epoch length only for a trailing partial epoch.
    pub duration: f64,
    pub n1: u32,
    pub n2: u32,
    pub arrivals1: u64,
    pub arrivals2: u64,
    pub accepted1: u64,
    pub accepted2: u64,
    pub lost1: u64,
    pub lost2: u64,
    /// Premium jobs admitted to pool 2.
    pub overflowed1: u64,
    /// Server-hours spent running jobs, per pool.
    pub busy_hours1: f64,
    pub busy_hours2: f64,
    /// Powered server-hours with no job, per pool.
    pub idle_hours1: f64,
    pub idle_hours2: f64,
    pub energy_kwh: f64,
    pub charges: f64,
    pub energy_cost: f64,
    pub penalties: f64,
    pub indirect_cost: f64,
    pub net_revenue: f64,
    /// Revenue the analytic model predicts for this allocation at the trace's
    /// mean rates over the epoch, $ over the epoch.
    pub analytic_revenue: f64,
}

impl EpochStats {
    pub fn allocation(&self, total: u32) -> Allocation {
        Allocation {
            n1: self.n1,
            n2: self.n2,
            total,
        }
    }
}

/// Totals over the epochs that start at or after the warmup.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Summary {
    pub epochs: usize,
    pub hours: f64,
    pub arrivals1: u64,
    pub arrivals2: u64,
    pub lost1: u64,
    pub lost2: u64,
    pub loss_pct1: f64,
    pub loss_pct2: f64,
    pub energy_kwh: f64,
    pub charges: f64,
    pub penalties: f64,
    pub net_revenue: f64,
    pub analytic_revenue: f64,
    pub mean_servers_on: f64,
}

impl Summary {
    pub fn from_epochs(epochs: &[EpochStats], warmup: f64) -> Self {
        let mut s = Summary::default();
        let mut server_hours = 0.0;
        for e in epochs.iter().filter(|e| e.start >= warmup) {
            s.epochs += 1;
            s.hours += e.duration;
            s.arrivals1 += e.arrivals1;
            s.arrivals2 += e.arrivals2;
            s.lost1 += e.lost1;
            s.lost2 += e.lost2;
            s.energy_kwh += e.energy_kwh;
            s.charges += e.charges;
            s.penalties += e.penalties;
            s.net_revenue += e.net_revenue;
            s.analytic_revenue += e.analytic_revenue;
            server_hours += (e.n1 + e.n2) as f64 * e.duration;
        }
        let pct = |lost: u64, arrivals: u64| {
            if arrivals == 0 {
                0.0
            } else {
                100.0 * lost as f64 / arrivals as f64
            }
        };
        s.loss_pct1 = pct(s.lost1, s.arrivals1);
        s.loss_pct2 = pct(s.lost2, s.arrivals2);
        if s.hours > 0.0 {
            s.mean_servers_on = server_hours / s.hours;
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
struct Departure {
    time: f64,
    seq: u64,
    pool: usize,
    class: usize,
}

impl PartialEq for Departure {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Departure {}

impl PartialOrd for Departure {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Departure {
    // Reversed so the max-heap pops the earliest departure.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

const ARRIVAL_STREAM: [u64; 2] = [0, 1];
const SERVICE_STREAM: [u64; 2] = [2, 3];

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Farm<'a> {
    trace: &'a Trace,
    servers: u32,
    routing: Model,
    /// `busy[pool][class]`
    busy: [[u32; 2]; 2],
    target: [u32; 2],
    departures: BinaryHeap<Departure>,
    seq: u64,
}

impl Farm<'_> {
    fn pool_busy(&self, p: usize) -> u32 {
        self.busy[p][0] + self.busy[p][1]
    }

    /// Servers pool `p` may use right now: its target, minus anything still
    /// held by the other pool's draining jobs.
    fn capacity(&self, p: usize) -> u32 {
        let q = 1 - p;
        let held = self.target[q].max(self.pool_busy(q));
        self.target[p].min(self.servers.saturating_sub(held))
    }

    fn powered(&self, p: usize) -> u32 {
        self.pool_busy(p).max(self.capacity(p))
    }

    fn admit(&mut self, class: usize) -> Option<usize> {
        let pools: &[usize] = match (class, self.routing) {
            (0, Model::Overflow) => &[0, 1],
            (0, Model::Isolated) => &[0],
            _ => &[1],
        };
        pools.iter().copied().find(|&p| self.pool_busy(p) < self.capacity(p))
    }

    fn next_arrival(&self, from: f64, class: usize, rng: &mut ChaCha8Rng) -> f64 {
        let mut t = from;
        loop {
            let hour = t.floor() as usize;
            if hour >= self.trace.hours() {
                return f64::INFINITY;
            }
            let (l1, l2) = self.trace.rates_at(hour);
            let rate = if class == 0 { l1 } else { l2 };
            let hour_end = (hour + 1) as f64;
            if rate > 0.0 {
                let gap: f64 = rng.sample::<f64, _>(Exp1) / rate;
                if t + gap < hour_end {
                    return t + gap;
                }
            }
            t = hour_end;
        }
    }
}

#[derive(Default)]
struct Tally {
    busy_hours: [f64; 2],
    powered_hours: [f64; 2],
    class_hours: [f64; 2],
}

fn draw_service(dist: ServiceDistribution, mu: f64, lognormal: Option<&LogNormal<f64>>, rng: &mut ChaCha8Rng) -> f64 {
    match dist {
        ServiceDistribution::Exponential => rng.sample::<f64, _>(Exp1) / mu,
        ServiceDistribution::Deterministic => 1.0 / mu,
        ServiceDistribution::Lognormal { .. } => lognormal.expect("built for lognormal").sample(rng),
    }
}

/// Runs `policy` over `trace` and returns one record per epoch.
pub fn run_simulation(
    trace: &Trace,
    policy: &Policy,
    config: &PolicyConfig,
    econ: &EconomicParams,
    sim: &SimConfig,
) -> Result<Vec<EpochStats>, SimError> {
    sim.validate()?;
    config.validate().map_err(|e| SimError::Config(e.to_string()))?;
    econ.validate().map_err(|e| SimError::Config(e.to_string()))?;
    if let Policy::Fixed(a) = policy {
        Allocation::new(a.n1, a.n2, sim.total_servers).map_err(|e| SimError::Config(e.to_string()))?;
    }

    let lognormal = match sim.service {
        ServiceDistribution::Lognormal { sigma } => {
            let m = (1.0 / sim.mu).ln() - 0.5 * sigma * sigma;
            Some(LogNormal::new(m, sigma).map_err(|e| SimError::Config(e.to_string()))?)
        }
        _ => None,
    };
    let routing = policy.routing(sim.routing);
    let replay_model = routing;
    let mut farm = Farm {
        trace,
        servers: sim.total_servers,
        routing,
        busy: [[0; 2]; 2],
        target: [0; 2],
        departures: BinaryHeap::new(),
        seq: 0,
    };
    let mut arrival_rng = ARRIVAL_STREAM.map(|id| stream(sim.seed, id));
    let mut service_rng = SERVICE_STREAM.map(|id| stream(sim.seed, id));
    let mut next_arrival = [0usize, 1].map(|c| farm.next_arrival(0.0, c, &mut arrival_rng[c]));

    let mut forecasters = [Forecaster::new(), Forecaster::new()];
    let horizon = trace.hours() as f64;
    let cpu_delta = econ.cpu_util * (econ.e2 - econ.e1);
    let mut epochs: Vec<EpochStats> = Vec::new();
    let mut t = 0.0;

    for k in 0.. {
        let start = k as f64 * sim.epoch_length;
        if start >= horizon {
            break;
        }
        let end = (start + sim.epoch_length).min(horizon);

        // Demand seen by the policy: the first hour's rates to bootstrap, the
        // last epoch's measurement afterwards.
        let estimate = match epochs.last() {
            None => {
                let (l1, l2) = trace.rates_at(0);
                DemandEstimate {
                    lambda1: l1,
                    lambda2: l2,
                    mu: sim.mu,
                }
            }
            Some(last) => measure_rates(last, last.duration, sim.mu),
        };
        let policy_err = |source| SimError::Policy { epoch: k, source };
        let forecast = if policy.uses_forecasts() && !epochs.is_empty() {
            DemandEstimate {
                lambda1: forecasters[0].observe(estimate.lambda1),
                lambda2: forecasters[1].observe(estimate.lambda2),
                mu: sim.mu,
            }
        } else {
            estimate
        };
        let delta = (
            forecasters[0].history.inflation(config.percentile_x),
            forecasters[1].history.inflation(config.percentile_x),
        );
        let load = forecast.load().map_err(policy_err)?;
        let alloc = policy
            .decide(sim.total_servers, &load, delta, econ, config)
            .map_err(policy_err)?;
        farm.target = [alloc.n1, alloc.n2];

        let mut stats = EpochStats {
            epoch: k,
            start,
            duration: end - start,
            n1: alloc.n1,
            n2: alloc.n2,
            ..Default::default()
        };
        let mut tally = Tally::default();

        loop {
            let t_dep = farm.departures.peek().map_or(f64::INFINITY, |d| d.time);
            let class = if next_arrival[1] < next_arrival[0] { 1 } else { 0 };
            let t_arr = next_arrival[class];
            let t_next = t_dep.min(t_arr).min(end);

            let dt = t_next - t;
            if dt > 0.0 {
                for p in 0..2 {
                    tally.busy_hours[p] += farm.pool_busy(p) as f64 * dt;
                    tally.powered_hours[p] += farm.powered(p) as f64 * dt;
                }
                for c in 0..2 {
                    tally.class_hours[c] += (farm.busy[0][c] + farm.busy[1][c]) as f64 * dt;
                }
            }
            t = t_next;
            if t_next >= end {
                break;
            }

            if t_dep <= t_arr {
                let d = farm.departures.pop().expect("peeked");
                farm.busy[d.pool][d.class] -= 1;
            } else {
                let service = draw_service(sim.service, sim.mu, lognormal.as_ref(), &mut service_rng[class]);
                if class == 0 {
                    stats.arrivals1 += 1;
                } else {
                    stats.arrivals2 += 1;
                }
                match farm.admit(class) {
                    Some(pool) => {
                        farm.busy[pool][class] += 1;
                        farm.seq += 1;
                        farm.departures.push(Departure {
                            time: t + service,
                            seq: farm.seq,
                            pool,
                            class,
                        });
                        if class == 0 {
                            stats.accepted1 += 1;
                            if pool == 1 {
                                stats.overflowed1 += 1;
                            }
                        } else {
                            stats.accepted2 += 1;
                        }
                    }
                    None => {
                        if class == 0 {
                            stats.lost1 += 1;
                        } else {
                            stats.lost2 += 1;
                        }
                    }
                }
                next_arrival[class] = farm.next_arrival(t, class, &mut arrival_rng[class]);
            }
        }

        stats.busy_hours1 = tally.busy_hours[0];
        stats.busy_hours2 = tally.busy_hours[1];
        stats.idle_hours1 = tally.powered_hours[0] - tally.busy_hours[0];
        stats.idle_hours2 = tally.powered_hours[1] - tally.busy_hours[1];
        let powered: f64 = tally.powered_hours.iter().sum();
        let busy: f64 = tally.busy_hours.iter().sum();
        stats.energy_kwh = econ.pue * (econ.e1 * powered + cpu_delta * busy) / 1000.0;
        stats.charges = econ.c1 * tally.class_hours[0] + econ.c2 * tally.class_hours[1];
        stats.energy_cost = econ.r * stats.energy_kwh;
        stats.penalties = econ.d * stats.lost1 as f64;
        stats.indirect_cost = econ.indirect_multiplier * stats.energy_cost;
        stats.net_revenue = stats.charges - stats.energy_cost - stats.penalties - stats.indirect_cost;

        let (m1, m2) = trace.mean_rates(start, end);
        let true_load = Load::from_rates(m1, m2, sim.mu).map_err(policy_err)?;
        stats.analytic_revenue = replay_model.evaluate(&alloc, &true_load, econ).map_err(policy_err)?.revenue * stats.duration;

        epochs.push(stats);
    }
    Ok(epochs)
}
