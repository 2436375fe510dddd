//! Acceptance checks. Prints one PASS/FAIL line per criterion. Failures are
//! reported, not fatal, unless `FARMREV_ACCEPTANCE_STRICT` is set, in which
//! case any failure makes the process exit with status 1.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use farmrev::sim::{run_simulation, Policy, ServiceDistribution, SimConfig, Summary};
use farmrev::trace::{gen_synthetic, SyntheticParams, Trace};
use farmrev_core::economics::{revenue_isolated, revenue_overflow};
use farmrev_core::forecasting::{ErrorHistory, SmoothingState};
use farmrev_core::loss::{erlang_b, erlang_b_gamma, erlang_b_int};
use farmrev_core::overflow::{overflow_stream, TrafficStream};
use farmrev_core::policies::{count_allocations, optimize_exhaustive, optimize_hill_climb, Model, PolicyConfig, Solution};
use farmrev_core::{min_servers_for_blocking, stationary_distribution, Allocation, EconomicParams, Load};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Verdict {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
            notes: Vec::new(),
        }
    }

    fn with_notes(mut self, notes: Vec<String>) -> Self {
        self.notes = notes;
        self
    }
}

type Criterion = (u8, &'static str, Duration, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "Erlang-B matches the birth-death oracle", Duration::from_secs(1), erlang_b_oracle),
        (2, "fractional Erlang-B consistency", Duration::from_secs(5), fractional_erlang_b),
        (3, "overflow variance against Monte Carlo", Duration::from_secs(60), overflow_variance),
        (4, "Hayward losses against simulation", Duration::from_secs(120), hayward_validation),
        (5, "hill climbing reaches the exhaustive optimum", Duration::from_secs(120), optimizer_optimality),
        (6, "d-sweep allocation shape", Duration::from_secs(30), d_sweep_shape),
        (7, "r-sweep allocation shape", Duration::from_secs(30), r_sweep_shape),
        (8, "isolated revenue concavity", Duration::from_secs(10), isolated_concavity),
        (9, "percentile coverage", Duration::from_secs(30), percentile_coverage),
        (10, "trace-driven policy comparison", Duration::from_secs(300), policy_comparison),
        (11, "anchor constants", Duration::from_secs(1), anchor_constants),
        (12, "simulate is reproducible", Duration::from_secs(60), reproducibility),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let verdict = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = verdict.pass && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time {
            format!("{:.2}s", elapsed.as_secs_f64())
        } else {
            format!("{:.2}s, over the {}s budget", elapsed.as_secs_f64(), budget.as_secs())
        };
        println!(
            "AC{id:<2} {} {name}: {} ({timing})",
            if pass { "PASS" } else { "FAIL" },
            verdict.detail
        );
        for note in verdict.notes {
            println!("       {note}");
        }
    }
    println!("acceptance: {} of 12 criteria passed", 12 - failed);
    if failed > 0 && std::env::var_os("FARMREV_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

fn erlang_b_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    for n in 0..=100u32 {
        for rho in [0.1, 1.0, 10.0, 50.0, 99.0] {
            let oracle = common::birth_death_blocking(n, rho);
            let fast = erlang_b(n as f64, rho).unwrap();
            let dist = stationary_distribution(n, rho).unwrap().blocking;
            worst = worst.max((fast - oracle).abs()).max((dist - oracle).abs());
        }
    }
    Verdict::new(worst <= 1e-12, format!("max |B - oracle| = {worst:.2e} over n <= 100"))
}

/// `1/B(x, ρ) = ρ ∫_0^∞ e^{-ρt} (1+t)^x dt`, by composite Simpson on [0, 120].
fn erlang_b_quadrature(x: f64, rho: f64) -> f64 {
    let (upper, steps) = (120.0, 2_400_000usize);
    let h = upper / steps as f64;
    let f = |t: f64| (-rho * t).exp() * (1.0 + t).powf(x);
    let mut sum = f(0.0) + f(upper);
    for i in 1..steps {
        sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 / (rho * sum * h / 3.0)
}

fn fractional_erlang_b() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut at = (0, 0.0);
    let loads: Vec<f64> = (1..=600).map(|k| k as f64 * 0.5).chain([0.01, 0.1, 0.25]).collect();
    for n in 0..=200u32 {
        for &rho in &loads {
            let diff = (erlang_b_gamma(n as f64, rho).unwrap() - erlang_b_int(n, rho)).abs();
            if diff > worst {
                worst = diff;
                at = (n, rho);
            }
        }
    }
    let half = erlang_b(0.5, 0.5).unwrap();
    let quad = erlang_b_quadrature(0.5, 0.5);
    let pass = worst <= 1e-8 && (half - quad).abs() <= 1e-6;
    Verdict::new(
        pass,
        format!(
            "max |gamma - recursion| = {worst:.2e} (n={}, rho={}); B(0.5, 0.5) = {half:.12} vs quadrature {quad:.12}",
            at.0, at.1
        ),
    )
}

/// Time-average mean and variance of the number of busy servers in an
/// infinite group fed by the overflow of an `n`-server Erlang group.
fn simulate_overflow_occupancy(rho: f64, n: u32, arrivals: u64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut primary, mut secondary) = (0u32, 0u64);
    let (mut t, mut area, mut area2) = (0.0f64, 0.0f64, 0.0f64);
    let mut seen = 0u64;
    let warmup = 10_000u64;
    let mut t0 = 0.0;
    while seen < arrivals + warmup {
        let total = rho + primary as f64 + secondary as f64;
        let dt = -rng.random::<f64>().ln_1p_neg() / total;
        if seen >= warmup {
            let m = secondary as f64;
            area += m * dt;
            area2 += m * m * dt;
        } else {
            t0 = t + dt;
        }
        t += dt;
        let u = rng.random::<f64>() * total;
        if u < rho {
            seen += 1;
            if primary < n {
                primary += 1;
            } else {
                secondary += 1;
            }
        } else if u < rho + primary as f64 {
            primary -= 1;
        } else {
            secondary -= 1;
        }
    }
    let span = t - t0;
    let mean = area / span;
    (mean, area2 / span - mean * mean)
}

trait Ln1pNeg {
    fn ln_1p_neg(self) -> f64;
}

impl Ln1pNeg for f64 {
    /// `ln(1 - u)`, for drawing exponentials from a uniform on [0, 1).
    fn ln_1p_neg(self) -> f64 {
        (-self).ln_1p()
    }
}

fn overflow_variance() -> Verdict {
    let cases = [(1.0, 1u32), (5.0, 3), (10.0, 8)];
    let results: Vec<(f64, u32, f64, f64, f64, f64)> = cases
        .par_iter()
        .enumerate()
        .map(|(i, &(rho, n))| {
            let analytic = overflow_stream(TrafficStream::poisson(rho).unwrap(), n).unwrap();
            let (mean, var) = simulate_overflow_occupancy(rho, n, 2_000_000, 100 + i as u64);
            (rho, n, analytic.mean(), analytic.variance(), mean, var)
        })
        .collect();
    let mut pass = true;
    let mut notes = Vec::new();
    for &(rho, n, m, v, sm, sv) in &results {
        let rel = (sv - v).abs() / v;
        pass &= rel <= 0.05;
        notes.push(format!(
            "rho={rho} n={n}: variance {v:.5} vs simulated {sv:.5} ({:.2}%), mean {m:.5} vs {sm:.5}",
            100.0 * rel
        ));
    }
    Verdict::new(pass, "Riordan variance within 5% at 2e6 arrivals per case").with_notes(notes)
}

struct GridPoint {
    n1: u32,
    n2: u32,
    rho1: f64,
    rho2: f64,
}

fn hayward_validation() -> Verdict {
    let mu = 0.4;
    let econ = EconomicParams::default();
    let mut grid = Vec::new();
    for n1 in [10, 20] {
        for n2 in [20, 30] {
            for rho1 in [8.0, 15.0] {
                for rho2 in [10.0, 18.0] {
                    grid.push(GridPoint { n1, n2, rho1, rho2 });
                }
            }
        }
    }
    let rows: Vec<(bool, String)> = grid
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let load = Load::new(g.rho1, g.rho2, mu).unwrap();
            let alloc = Allocation::new(g.n1, g.n2, 60).unwrap();
            let b = revenue_overflow(&alloc, &load, &econ).unwrap();
            let (a1, a2) = (b.lost1 * mu, b.lost2 * mu);
            let (l1, l2) = (load.lambda1(), load.lambda2());
            let batch = 500.0;
            let hours = (1.0e6 / (l1 + l2) + batch).ceil() as usize;
            let trace = Trace::constant(hours, l1, l2).unwrap();
            let sim = SimConfig {
                total_servers: 60,
                epoch_length: batch,
                mu,
                service: ServiceDistribution::Exponential,
                routing: Model::Overflow,
                seed: 1000 + i as u64,
                warmup: batch,
            };
            let stats = run_simulation(&trace, &Policy::Fixed(alloc), &PolicyConfig::default(), &econ, &sim).unwrap();
            let s = Summary::from_epochs(&stats, sim.warmup);
            let (s1, s2) = (s.lost1 as f64 / s.hours, s.lost2 as f64 / s.hours);
            let (x1, x2) = common::overflow_exact(g.n1, g.n2, l1, l2, mu);
            let rel = |sim: f64, model: f64| (sim - model).abs() / model;
            let (r1, r2, rt) = (rel(s1, a1), rel(s2, a2), rel(s1 + s2, a1 + a2));
            let ok = r1 <= 0.15 && r2 <= 0.15 && rt <= 0.10;
            let line = format!(
                "{} n=({},{}) rho=({},{}): premium {a1:.3e} vs sim {s1:.3e} ({:.0}%, {} losses), basic {a2:.3e} vs {s2:.3e} ({:.0}%, {}), total {:.0}%; exact chain {x1:.3e} / {x2:.3e}",
                if ok { "ok  " } else { "MISS" },
                g.n1,
                g.n2,
                g.rho1,
                g.rho2,
                100.0 * r1,
                s.lost1,
                100.0 * r2,
                s.lost2,
                100.0 * rt
            );
            (ok, line)
        })
        .collect();
    let passed = rows.iter().filter(|r| r.0).count();
    Verdict::new(
        passed == rows.len(),
        format!("{passed}/{} grid points within 15% per class and 10% in total", rows.len()),
    )
    .with_notes(rows.into_iter().map(|r| r.1).collect())
}

fn same_revenue(a: &Solution, b: &Solution) -> bool {
    (a.revenue() - b.revenue()).abs() <= 1e-9 * b.revenue().abs().max(1.0)
}

fn optimizer_optimality() -> Verdict {
    let mu = 0.4;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases: Vec<(u32, Load, EconomicParams)> = (0..100)
        .map(|_| {
            let s = rng.random_range(1..=60u32);
            let top = 1.2 * s as f64 / 2.0;
            let load = Load::new(rng.random_range(0.0..=top), rng.random_range(0.0..=top), mu).unwrap();
            let econ = EconomicParams {
                d: rng.random_range(0.0..=5.0),
                r: rng.random_range(0.0..=4.0),
                ..Default::default()
            };
            (s, load, econ)
        })
        .collect();
    let outcome: Vec<(bool, bool, String)> = cases
        .par_iter()
        .map(|(s, load, econ)| {
            let mut hits = [false; 2];
            let mut miss = String::new();
            for (k, model) in [Model::Isolated, Model::Overflow].into_iter().enumerate() {
                let hc = optimize_hill_climb(*s, load, econ, model).unwrap();
                let ex = optimize_exhaustive(*s, load, econ, model).unwrap();
                hits[k] = same_revenue(&hc, &ex);
                if !hits[k] {
                    miss = format!(
                        "{} miss: S={s} rho1={:.4} rho2={:.4} d={:.4} r={:.4}: hill climb ({},{}) {:.9} vs exhaustive ({},{}) {:.9}",
                        model.name(),
                        load.rho1,
                        load.rho2,
                        econ.d,
                        econ.r,
                        hc.allocation.n1,
                        hc.allocation.n2,
                        hc.revenue(),
                        ex.allocation.n1,
                        ex.allocation.n2,
                        ex.revenue()
                    );
                }
            }
            (hits[0], hits[1], miss)
        })
        .collect();
    let isolated = outcome.iter().filter(|o| o.0).count();
    let overflow = outcome.iter().filter(|o| o.1).count();
    let notes = outcome.iter().filter(|o| !o.2.is_empty()).map(|o| o.2.clone()).collect();
    Verdict::new(
        isolated == 100 && overflow >= 97,
        format!("isolated {isolated}/100, overflow {overflow}/100 match the exhaustive optimum"),
    )
    .with_notes(notes)
}

fn desk_load() -> Load {
    Load::new(30.0, 25.0, 0.4).unwrap()
}

fn sweep(values: impl Iterator<Item = f64>, set: impl Fn(f64) -> EconomicParams + Sync, exhaustive: bool) -> Vec<(f64, Solution)> {
    let values: Vec<f64> = values.collect();
    values
        .par_iter()
        .map(|&v| {
            let econ = set(v);
            let sol = if exhaustive {
                optimize_exhaustive(100, &desk_load(), &econ, Model::Overflow).unwrap()
            } else {
                optimize_hill_climb(100, &desk_load(), &econ, Model::Overflow).unwrap()
            };
            (v, sol)
        })
        .collect()
}

fn d_shape(points: &[(f64, Solution)]) -> (bool, Option<f64>) {
    let first_positive = points.iter().position(|(_, s)| s.allocation.n1 > 0);
    let Some(k) = first_positive else {
        return (false, None);
    };
    let threshold_ok = k > 0;
    let nondecreasing = points[k..].windows(2).all(|w| w[1].1.allocation.n1 >= w[0].1.allocation.n1);
    (threshold_ok && nondecreasing, Some(points[k].0))
}

fn d_sweep_shape() -> Verdict {
    let values = || (0..=50).map(|i| (i as f64 * 0.1 * 1e12).round() / 1e12);
    let set = |d: f64| EconomicParams { d, ..Default::default() };
    let hill = sweep(values(), set, false);
    let exact = sweep(values(), set, true);
    let (hill_ok, hill_d) = d_shape(&hill);
    let (exact_ok, exact_d) = d_shape(&exact);
    let n1s = |pts: &[(f64, Solution)]| pts.iter().map(|(_, s)| s.allocation.n1.to_string()).collect::<Vec<_>>().join(" ");
    Verdict::new(
        hill_ok && exact_ok,
        format!("n1 = 0 below d* then nondecreasing; d* = {hill_d:?} (hill climbing), {exact_d:?} (exhaustive)"),
    )
    .with_notes(vec![format!("hill climbing n1: {}", n1s(&hill)), format!("exhaustive n1:    {}", n1s(&exact))])
}

fn r_shape(points: &[(f64, Solution)]) -> (bool, Option<f64>, bool) {
    let totals: Vec<u32> = points.iter().map(|(_, s)| s.allocation.running()).collect();
    let nonincreasing = totals.windows(2).all(|w| w[1] <= w[0]);
    let lambda1 = desk_load().lambda1();
    let off_from = points.iter().position(|(_, s)| s.allocation.running() == 0);
    let (regime, exact) = match off_from {
        Some(k) => {
            let tail = &points[k..];
            let all_off = tail.iter().all(|(_, s)| s.allocation.running() == 0);
            let exact = tail.iter().all(|(r, s)| {
                let econ = EconomicParams { r: *r, ..Default::default() };
                s.revenue() == -econ.d * lambda1
            });
            (all_off, exact)
        }
        None => (false, false),
    };
    (nonincreasing && regime, off_from.map(|k| points[k].0), exact)
}

fn r_sweep_shape() -> Verdict {
    let values = || (0..=40).map(|i| (i as f64 * 0.1 * 1e12).round() / 1e12);
    let set = |r: f64| EconomicParams { r, ..Default::default() };
    let hill = sweep(values(), set, false);
    let exact = sweep(values(), set, true);
    let (hill_ok, hill_r, hill_exact) = r_shape(&hill);
    let (exact_ok, exact_r, exact_exact) = r_shape(&exact);
    let totals = |pts: &[(f64, Solution)]| pts.iter().map(|(_, s)| s.allocation.running().to_string()).collect::<Vec<_>>().join(" ");
    Verdict::new(
        hill_ok && exact_ok && hill_exact && exact_exact,
        format!(
            "servers on nonincreasing, all off from r = {hill_r:?} (hill climbing), {exact_r:?} (exhaustive); revenue there == -d*lambda1: {}",
            hill_exact && exact_exact
        ),
    )
    .with_notes(vec![format!("hill climbing n1+n2: {}", totals(&hill)), format!("exhaustive n1+n2:    {}", totals(&exact))])
}

fn isolated_concavity() -> Verdict {
    let load = desk_load();
    let econ = EconomicParams::default();
    let s = 100u32;
    let mut table = vec![vec![f64::NAN; s as usize + 1]; s as usize + 1];
    for n1 in 0..=s {
        for n2 in 0..=(s - n1) {
            table[n1 as usize][n2 as usize] = revenue_isolated(&Allocation::new(n1, n2, s).unwrap(), &load, &econ).unwrap().revenue;
        }
    }
    let mut worst = f64::NEG_INFINITY;
    let s = s as usize;
    for n1 in 0..=s {
        for n2 in 0..=(s - n1) {
            if n1 + 2 + n2 <= s {
                worst = worst.max(table[n1 + 2][n2] - 2.0 * table[n1 + 1][n2] + table[n1][n2]);
            }
            if n2 + 2 + n1 <= s {
                worst = worst.max(table[n1][n2 + 2] - 2.0 * table[n1][n2 + 1] + table[n1][n2]);
            }
        }
    }
    Verdict::new(worst <= 1e-9, format!("largest second difference {worst:.3e}"))
}

/// Coverage of `(1 + Δ)·forecast` and the overall 95th-percentile error for
/// one class, with forecasts made once per `step` hours.
fn coverage(trace: &Trace, class: usize, step: f64) -> (f64, f64) {
    let mut smoothing = SmoothingState::default();
    let mut history = ErrorHistory::default();
    let mut all = ErrorHistory::new(usize::MAX >> 1);
    let mut forecast: Option<f64> = None;
    let (mut n, mut over) = (0u32, 0u32);
    let epochs = (trace.hours() as f64 / step) as usize;
    for k in 0..epochs {
        let (l1, l2) = trace.mean_rates(k as f64 * step, (k + 1) as f64 * step);
        let actual = if class == 1 { l1 } else { l2 };
        if let Some(f) = forecast {
            let delta = history.inflation(0.95);
            n += 1;
            if actual > (1.0 + delta) * f {
                over += 1;
            }
            history.record(f, actual);
            all.record(f, actual);
        }
        forecast = Some(smoothing.update(actual));
    }
    (over as f64 / n as f64, all.percentile(0.95).unwrap())
}

fn percentile_coverage() -> Verdict {
    let trace = gen_synthetic(&SyntheticParams::default()).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for class in [1, 2] {
        let (frac, p95) = coverage(&trace, class, 1.0);
        pass &= (0.02..=0.08).contains(&frac) && (0.05..=0.25).contains(&p95);
        parts.push(format!("class {class}: {:.1}% above, p95 error {p95:.3}", 100.0 * frac));
    }
    let mut notes = Vec::new();
    for class in [1, 2] {
        let (frac, p95) = coverage(&trace, class, 2.0);
        notes.push(format!(
            "for reference, 2-hour epochs: class {class}: {:.1}% above, p95 error {p95:.3}",
            100.0 * frac
        ));
    }
    Verdict::new(pass, format!("hourly forecasts, {}", parts.join("; "))).with_notes(notes)
}

fn policy_comparison() -> Verdict {
    let trace = gen_synthetic(&SyntheticParams {
        base1: 24.0,
        base2: 20.0,
        ..Default::default()
    })
    .unwrap();
    let econ = EconomicParams {
        indirect_multiplier: 2.0,
        ..Default::default()
    };
    let sim = SimConfig {
        total_servers: 200,
        seed: 42,
        ..Default::default()
    };
    let arms = [Policy::Optimal, Policy::PenaltyCapping, Policy::Percentile, Policy::AlwaysOn, Policy::Isolated];
    let summaries: Vec<Summary> = arms
        .par_iter()
        .map(|p| {
            let stats = run_simulation(&trace, p, &PolicyConfig::default(), &econ, &sim).unwrap();
            Summary::from_epochs(&stats, sim.warmup)
        })
        .collect();
    let [opt, cap, pct, on, _iso] = [0, 1, 2, 3, 4].map(|i| summaries[i]);
    let ranking = opt.net_revenue >= cap.net_revenue
        && opt.net_revenue >= pct.net_revenue
        && cap.net_revenue >= on.net_revenue
        && pct.net_revenue >= on.net_revenue;
    let fewer_lost = cap.lost1 < opt.lost1 && pct.lost1 < opt.lost1;
    let low_loss = opt.loss_pct1 < 5.0 && opt.loss_pct2 < 5.0;
    let notes = arms
        .iter()
        .zip(&summaries)
        .map(|(p, s)| {
            format!(
                "{:16} net ${:9.2} (analytic ${:9.2}), lost {}/{} premium ({:.2}%), {}/{} basic ({:.2}%), {:.0} kWh",
                p.name(),
                s.net_revenue,
                s.analytic_revenue,
                s.lost1,
                s.arrivals1,
                s.loss_pct1,
                s.lost2,
                s.arrivals2,
                s.loss_pct2,
                s.energy_kwh
            )
        })
        .collect();
    Verdict::new(
        ranking && fewer_lost && low_loss,
        format!(
            "(a) revenue ranking {}; (b) heuristics lose fewer premium jobs {}; (c) optimal loss {:.2}% / {:.2}% below 5% {}",
            ranking, fewer_lost, opt.loss_pct1, opt.loss_pct2, low_loss
        ),
    )
    .with_notes(notes)
}

fn anchor_constants() -> Verdict {
    let busy = EconomicParams::default().busy_power();
    let count = count_allocations(1000);
    let servers = min_servers_for_blocking(10.0, 0.01).unwrap();
    Verdict::new(
        busy == 76.15 && count == 501_501 && servers == 18,
        format!("busy power {busy} W, count_allocations(1000) = {count}, min servers for (10, 0.01) = {servers}"),
    )
}

fn farmrev(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_farmrev"))
        .args(args)
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn reproducibility() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let trace = p("trace.csv");
    let mut ok = farmrev(&["gen-trace", "--days", "7", "--base1", "24", "--base2", "20", "--seed", "7", "--out", &trace]);
    for run in ["a", "b"] {
        ok &= farmrev(&[
            "simulate", "--trace", &trace, "--S", "200", "--seed", "42", "--indirect-multiplier", "2", "--out-dir", &p(run),
        ]);
    }
    if !ok {
        return Verdict::new(false, "farmrev exited with an error");
    }
    let same = |name: &str| {
        let a = std::fs::read(Path::new(&p("a")).join(name)).unwrap();
        let b = std::fs::read(Path::new(&p("b")).join(name)).unwrap();
        a == b && !a.is_empty()
    };
    let identical = same("epochs.csv") && same("summary.csv");
    Verdict::new(identical, format!("two runs with --seed 42 byte-identical: {identical}"))
}
