use std::io::Write;
use std::path::Path;

use farmrev_core::policies::{self, Model, PolicyConfig};
use farmrev_core::{Allocation, EconomicParams, Load, RevenueBreakdown};
use rayon::prelude::*;

use super::config::Resolver;
use super::manifest::{file_digest, sidecar, RunManifest};
use super::{CliError, EconArgs, GenTraceArgs, LoadArgs, PolicyArgs, SimulateArgs, SolveArgs, SweepArgs};
use crate::sim::{run_simulation, EpochStats, Policy, ServiceDistribution, SimConfig, Summary};
use crate::trace::{gen_synthetic, write_trace, SyntheticParams};

const SOLVE_COLUMNS: [&str; 14] = [
    "policy", "model", "n1", "n2", "n_off", "R", "R1", "R2", "T1", "T2", "D", "P_kW", "L1", "L2",
];

const SWEEP_PARAMS: [&str; 13] = [
    "d",
    "r",
    "c1",
    "c2",
    "e1",
    "e2",
    "pue",
    "cpu_util",
    "indirect_multiplier",
    "rho1",
    "rho2",
    "mu",
    "tau",
];

const DEFAULT_SIM_POLICIES: &str = "optimal,penalty-capping,percentile,always-on,isolated";

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn econ_params(r: &mut Resolver, a: &EconArgs) -> Result<EconomicParams, CliError> {
    let def = EconomicParams::default();
    let p = EconomicParams {
        c1: r.get("c1", a.c1, def.c1)?,
        c2: r.get("c2", a.c2, def.c2)?,
        d: r.get("d", a.d, def.d)?,
        r: r.get("r", a.r, def.r)?,
        e1: r.get("e1", a.e1, def.e1)?,
        e2: r.get("e2", a.e2, def.e2)?,
        pue: r.get("pue", a.pue, def.pue)?,
        cpu_util: r.get("cpu_util", a.cpu_util, def.cpu_util)?,
        indirect_multiplier: r.get("indirect_multiplier", a.indirect_multiplier, def.indirect_multiplier)?,
        ceiling_busy: r.get("ceiling_power", a.ceiling_power.then_some(true), def.ceiling_busy)?,
    };
    p.validate().map_err(usage)?;
    Ok(p)
}

fn policy_config(r: &mut Resolver, a: &PolicyArgs) -> Result<PolicyConfig, CliError> {
    let def = PolicyConfig::default();
    let model: String = r.get("model", a.model.clone(), def.model.name().to_string())?;
    let cfg = PolicyConfig {
        model: model.parse().map_err(usage)?,
        tau: r.get("tau", a.tau, def.tau)?,
        percentile_x: r.get("percentile_x", a.percentile_x, def.percentile_x)?,
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

/// Operating point shared by `solve` and `sweep`.
#[derive(Debug, Clone, Copy)]
struct Point {
    servers: u32,
    rho1: f64,
    rho2: f64,
    mu: f64,
    delta: f64,
    econ: EconomicParams,
    config: PolicyConfig,
}

fn point(r: &mut Resolver, load: &LoadArgs, econ: &EconArgs, policy: &PolicyArgs) -> Result<Point, CliError> {
    let p = Point {
        servers: r.get("S", load.servers, 1000)?,
        rho1: r.get("rho1", load.rho1, 300.0)?,
        rho2: r.get("rho2", load.rho2, 250.0)?,
        mu: r.get("mu", load.mu, 0.4)?,
        delta: r.get("delta", load.delta, farmrev_core::forecasting::DEFAULT_INFLATION)?,
        econ: econ_params(r, econ)?,
        config: policy_config(r, policy)?,
    };
    Load::new(p.rho1, p.rho2, p.mu).map_err(usage)?;
    if !(p.delta >= -1.0) {
        return Err(usage("delta must be >= -1"));
    }
    Ok(p)
}

/// A policy as named on the command line for `solve` and `sweep`.
#[derive(Debug, Clone, Copy)]
enum SolvePolicy {
    Exhaustive,
    Sim(Policy),
}

impl SolvePolicy {
    fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "exhaustive" => Ok(SolvePolicy::Exhaustive),
            _ => Policy::from_name(name).map(SolvePolicy::Sim).ok_or_else(|| {
                usage(format!(
                    "unknown policy `{name}` (optimal, isolated, penalty-capping, percentile, percentile-optimal, always-on, exhaustive)"
                ))
            }),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            SolvePolicy::Exhaustive => "exhaustive",
            SolvePolicy::Sim(p) => p.name(),
        }
    }
}

/// Runs one policy and evaluates the chosen allocation at the true loads.
fn solve_point(policy: SolvePolicy, model: Model, p: &Point) -> Result<(Model, Allocation, RevenueBreakdown), CliError> {
    let load = Load::new(p.rho1, p.rho2, p.mu)?;
    let config = PolicyConfig { model, ..p.config };
    let (model, alloc) = match policy {
        SolvePolicy::Exhaustive => (model, policies::optimize_exhaustive(p.servers, &load, &p.econ, model)?.allocation),
        SolvePolicy::Sim(sp) => (
            sp.model(&config),
            sp.decide(p.servers, &load, (p.delta, p.delta), &p.econ, &config)?,
        ),
    };
    let breakdown = model.evaluate(&alloc, &load, &p.econ)?;
    Ok((model, alloc, breakdown))
}

fn solve_fields(policy: SolvePolicy, model: Model, a: &Allocation, b: &RevenueBreakdown) -> Vec<String> {
    vec![
        policy.name().to_string(),
        model.name().to_string(),
        a.n1.to_string(),
        a.n2.to_string(),
        a.n_off().to_string(),
        b.revenue.to_string(),
        b.revenue1.to_string(),
        b.revenue2.to_string(),
        b.throughput1.to_string(),
        b.throughput2.to_string(),
        b.penalty.to_string(),
        ((b.power1 + b.power2) / 1000.0).to_string(),
        b.lost1.to_string(),
        b.lost2.to_string(),
    ]
}

/// CSV text: manifest comment, header, rows.
fn render_csv(manifest: &RunManifest, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut buf = manifest.comment_line().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let fail = |e: csv::Error| CliError::Runtime(e.to_string());
        w.write_record(header).map_err(fail)?;
        for row in rows {
            w.write_record(row).map_err(fail)?;
        }
        w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(buf)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub(super) fn solve(a: SolveArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut r = Resolver::new(a.config.config.as_deref())?;
    let name: String = r.get("policy", a.policy.clone(), "optimal".to_string())?;
    let policy = SolvePolicy::parse(&name)?;
    let p = point(&mut r, &a.load, &a.econ, &a.policy_args)?;
    let mut manifest = RunManifest::new("solve", r.into_resolved());

    let (model, alloc, breakdown) = solve_point(policy, p.config.model, &p)?;
    let csv = render_csv(&manifest, &SOLVE_COLUMNS, &[solve_fields(policy, model, &alloc, &breakdown)])?;
    match &a.out {
        Some(path) => {
            write_file(path, &csv)?;
            manifest.outputs.push(path.clone());
            manifest.write(&sidecar(path))?;
        }
        None => stdout
            .write_all(&csv)
            .map_err(|e| CliError::Runtime(format!("cannot write output: {e}")))?,
    }
    Ok(())
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect()
}

/// Values `from, from + step, ..., <= to`, rounded to 12 decimals to keep
/// accumulated float error out of the output.
fn sweep_values(from: f64, to: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !from.is_finite() || !to.is_finite() || !(step > 0.0) || !step.is_finite() {
        return Err(usage("sweep needs finite bounds and a positive step"));
    }
    if to < from {
        return Err(usage(format!("empty sweep range [{from}, {to}]")));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| ((from + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

fn with_param(p: &Point, param: &str, v: f64) -> Point {
    let mut q = *p;
    match param {
        "d" => q.econ.d = v,
        "r" => q.econ.r = v,
        "c1" => q.econ.c1 = v,
        "c2" => q.econ.c2 = v,
        "e1" => q.econ.e1 = v,
        "e2" => q.econ.e2 = v,
        "pue" => q.econ.pue = v,
        "cpu_util" => q.econ.cpu_util = v,
        "indirect_multiplier" => q.econ.indirect_multiplier = v,
        "rho1" => q.rho1 = v,
        "rho2" => q.rho2 = v,
        "mu" => q.mu = v,
        "tau" => q.config.tau = v,
        _ => unreachable!("checked against SWEEP_PARAMS"),
    }
    q
}

pub(super) fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let mut r = Resolver::new(a.config.config.as_deref())?;
    let param: String = r.get("param", a.param.clone(), "d".to_string())?;
    if !SWEEP_PARAMS.contains(&param.as_str()) {
        return Err(usage(format!("cannot sweep `{param}` (one of {})", SWEEP_PARAMS.join(", "))));
    }
    let from = r.get("from", a.from, 0.0)?;
    let to = r.get("to", a.to, 5.0)?;
    let step = r.get("step", a.step, 0.1)?;
    let values = sweep_values(from, to, step)?;
    let policy_list: String = r.get("policies", a.policies.clone(), "optimal".to_string())?;
    let policies = split_list(&policy_list)
        .into_iter()
        .map(SolvePolicy::parse)
        .collect::<Result<Vec<_>, _>>()?;
    let model_list: String = r.get("models", a.models.clone(), "overflow".to_string())?;
    let models = split_list(&model_list)
        .into_iter()
        .map(|m| m.parse::<Model>().map_err(usage))
        .collect::<Result<Vec<_>, _>>()?;
    if policies.is_empty() || models.is_empty() {
        return Err(usage("need at least one policy and one model"));
    }
    let base = point(&mut r, &a.load, &a.econ, &a.policy_args)?;
    for &v in &values {
        let q = with_param(&base, &param, v);
        q.econ.validate().map_err(usage)?;
        q.config.validate().map_err(usage)?;
        Load::new(q.rho1, q.rho2, q.mu).map_err(usage)?;
    }
    let mut manifest = RunManifest::new("sweep", r.into_resolved());

    let mut jobs: Vec<(f64, SolvePolicy, Model)> = Vec::new();
    for &v in &values {
        for &p in &policies {
            jobs.extend(models.iter().map(|&m| (v, p, m)));
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(v, policy, model)| {
            let q = with_param(&base, &param, v);
            let (model, alloc, b) = solve_point(policy, model, &q)?;
            let mut row = vec![v.to_string()];
            row.extend(solve_fields(policy, model, &alloc, &b));
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut header = vec![param.as_str()];
    header.extend(SOLVE_COLUMNS);
    let csv = render_csv(&manifest, &header, &rows)?;
    write_file(&a.out, &csv)?;
    manifest.outputs.push(a.out.clone());
    manifest.write(&sidecar(&a.out))
}

fn parse_sim_policy(name: &str, servers: u32) -> Result<Policy, CliError> {
    if let Some(rest) = name.strip_prefix("fixed:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let parse = |s: &str| s.parse::<u32>().map_err(|_| usage(format!("bad fixed allocation `{name}`")));
        if parts.len() != 2 {
            return Err(usage(format!("fixed allocation must be `fixed:N1:N2`, got `{name}`")));
        }
        let alloc = Allocation::new(parse(parts[0])?, parse(parts[1])?, servers).map_err(usage)?;
        return Ok(Policy::Fixed(alloc));
    }
    Policy::from_name(name).ok_or_else(|| {
        usage(format!(
            "unknown policy `{name}` (optimal, isolated, penalty-capping, percentile, percentile-optimal, always-on, fixed:N1:N2)"
        ))
    })
}

fn policy_label(p: &Policy) -> String {
    match p {
        Policy::Fixed(a) => format!("fixed:{}:{}", a.n1, a.n2),
        other => other.name().to_string(),
    }
}

fn epoch_fields(e: &EpochStats) -> Vec<String> {
    vec![
        e.epoch.to_string(),
        e.start.to_string(),
        e.duration.to_string(),
        e.n1.to_string(),
        e.n2.to_string(),
        e.arrivals1.to_string(),
        e.arrivals2.to_string(),
        e.accepted1.to_string(),
        e.accepted2.to_string(),
        e.lost1.to_string(),
        e.lost2.to_string(),
        e.overflowed1.to_string(),
        e.busy_hours1.to_string(),
        e.busy_hours2.to_string(),
        e.idle_hours1.to_string(),
        e.idle_hours2.to_string(),
        e.energy_kwh.to_string(),
        e.charges.to_string(),
        e.energy_cost.to_string(),
        e.penalties.to_string(),
        e.indirect_cost.to_string(),
        e.net_revenue.to_string(),
        e.analytic_revenue.to_string(),
    ]
}

const EPOCH_COLUMNS: [&str; 24] = [
    "policy",
    "epoch",
    "start_h",
    "duration_h",
    "n1",
    "n2",
    "arrivals1",
    "arrivals2",
    "accepted1",
    "accepted2",
    "lost1",
    "lost2",
    "overflowed1",
    "busy_hours1",
    "busy_hours2",
    "idle_hours1",
    "idle_hours2",
    "energy_kwh",
    "charges",
    "energy_cost",
    "penalties",
    "indirect_cost",
    "net_revenue",
    "analytic_revenue",
];

const SUMMARY_COLUMNS: [&str; 15] = [
    "policy",
    "epochs",
    "hours",
    "arrivals1",
    "arrivals2",
    "lost1",
    "lost2",
    "loss_pct1",
    "loss_pct2",
    "energy_kwh",
    "charges",
    "penalties",
    "net_revenue",
    "analytic_revenue",
    "mean_servers_on",
];

fn summary_fields(s: &Summary) -> Vec<String> {
    vec![
        s.epochs.to_string(),
        s.hours.to_string(),
        s.arrivals1.to_string(),
        s.arrivals2.to_string(),
        s.lost1.to_string(),
        s.lost2.to_string(),
        s.loss_pct1.to_string(),
        s.loss_pct2.to_string(),
        s.energy_kwh.to_string(),
        s.charges.to_string(),
        s.penalties.to_string(),
        s.net_revenue.to_string(),
        s.analytic_revenue.to_string(),
        s.mean_servers_on.to_string(),
    ]
}

pub(super) fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut r = Resolver::new(a.config.config.as_deref())?;
    let def = SimConfig::default();
    let servers = r.get("S", a.servers, def.total_servers)?;
    let service: String = r.get("service", a.service.clone(), "exponential".to_string())?;
    let routing: String = r.get("routing", a.routing.clone(), def.routing.name().to_string())?;
    let sim = SimConfig {
        total_servers: servers,
        epoch_length: r.get("epoch_length", a.epoch_length, def.epoch_length)?,
        mu: r.get("mu", a.mu, def.mu)?,
        service: service.parse::<ServiceDistribution>().map_err(usage)?,
        routing: routing.parse::<Model>().map_err(usage)?,
        seed: r.get("seed", a.seed, def.seed)?,
        warmup: r.get("warmup", a.warmup, def.warmup)?,
    };
    sim.validate().map_err(usage)?;
    let policy_list: String = r.get("policies", a.policies.clone(), DEFAULT_SIM_POLICIES.to_string())?;
    let policies = split_list(&policy_list)
        .into_iter()
        .map(|n| parse_sim_policy(n, servers))
        .collect::<Result<Vec<_>, _>>()?;
    if policies.is_empty() {
        return Err(usage("need at least one policy"));
    }
    let econ = econ_params(&mut r, &a.econ)?;
    let config = policy_config(&mut r, &a.policy_args)?;

    let bytes = std::fs::read(&a.trace)
        .map_err(|e| CliError::Runtime(format!("cannot read trace {}: {e}", a.trace.display())))?;
    let trace = crate::trace::parse_trace(bytes.as_slice())
        .map_err(|e| CliError::Runtime(format!("{}: {e}", a.trace.display())))?;
    r.record("trace_sha256", &file_digest(&bytes));
    let mut manifest = RunManifest::new("simulate", r.into_resolved());

    let runs = policies
        .par_iter()
        .map(|p| run_simulation(&trace, p, &config, &econ, &sim).map_err(|e| CliError::Runtime(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;

    let mut epoch_rows = Vec::new();
    let mut summary_rows = Vec::new();
    for (p, epochs) in policies.iter().zip(&runs) {
        let label = policy_label(p);
        for e in epochs {
            let mut row = vec![label.clone()];
            row.extend(epoch_fields(e));
            epoch_rows.push(row);
        }
        let mut row = vec![label];
        row.extend(summary_fields(&Summary::from_epochs(epochs, sim.warmup)));
        summary_rows.push(row);
    }

    let epochs_path = a.out_dir.join("epochs.csv");
    let summary_path = a.out_dir.join("summary.csv");
    write_file(&epochs_path, &render_csv(&manifest, &EPOCH_COLUMNS, &epoch_rows)?)?;
    write_file(&summary_path, &render_csv(&manifest, &SUMMARY_COLUMNS, &summary_rows)?)?;
    manifest.outputs = vec![epochs_path, summary_path];
    manifest.write(&a.out_dir.join("manifest.json"))
}

pub(super) fn gen_trace(a: GenTraceArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut r = Resolver::new(a.config.config.as_deref())?;
    let def = SyntheticParams::default();
    let p = SyntheticParams {
        days: r.get("days", a.days, def.days)?,
        base1: r.get("base1", a.base1, def.base1)?,
        base2: r.get("base2", a.base2, def.base2)?,
        daily_amp: r.get("daily_amp", a.daily_amp, def.daily_amp)?,
        weekly_amp: r.get("weekly_amp", a.weekly_amp, def.weekly_amp)?,
        noise_cv: r.get("noise_cv", a.noise_cv, def.noise_cv)?,
        spike_prob: r.get("spike_prob", a.spike_prob, def.spike_prob)?,
        spike_mult: r.get("spike_mult", a.spike_mult, def.spike_mult)?,
        seed: r.get("seed", a.seed, def.seed)?,
    };
    if p.days == 0 {
        return Err(usage("days must be at least 1"));
    }
    let trace = gen_synthetic(&p).map_err(usage)?;
    let mut manifest = RunManifest::new("gen-trace", r.into_resolved());
    let comment = manifest.comment_line();
    let comment = comment.trim_start_matches("# ").trim_end();
    let mut buf = Vec::new();
    write_trace(&mut buf, &trace, Some(comment)).map_err(|e| CliError::Runtime(e.to_string()))?;
    match &a.out {
        Some(path) => {
            write_file(path, &buf)?;
            manifest.outputs.push(path.clone());
            manifest.write(&sidecar(path))?;
        }
        None => stdout
            .write_all(&buf)
            .map_err(|e| CliError::Runtime(format!("cannot write output: {e}")))?,
    }
    Ok(())
}
