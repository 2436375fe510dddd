//! Oracles shared by the integration tests. Written independently of the
//! library code they check.

#![allow(dead_code, clippy::needless_range_loop)]

/// Erlang-B from the birth-death stationary distribution `p_k ∝ ρ^k / k!`.
pub fn birth_death_blocking(n: u32, rho: f64) -> f64 {
    let mut term = 1.0;
    let mut total = 1.0;
    for k in 1..=n {
        term *= rho / k as f64;
        total += term;
    }
    term / total
}

/// Exact loss rates (jobs/hour) of the routed two-pool system with
/// exponential service, from the balance equations of the Markov chain on
/// (premium jobs in pool 1, premium jobs in pool 2, basic jobs in pool 2).
pub fn overflow_exact(n1: u32, n2: u32, lambda1: f64, lambda2: f64, mu: f64) -> (f64, f64) {
    let (n1, n2) = (n1 as usize, n2 as usize);
    let mut index = vec![vec![vec![usize::MAX; n2 + 1]; n2 + 1]; n1 + 1];
    let mut states = Vec::new();
    for k in 0..=n1 {
        for a in 0..=n2 {
            for b in 0..=(n2 - a) {
                index[k][a][b] = states.len();
                states.push((k, a, b));
            }
        }
    }
    // Incoming transitions and total outflow rate per state.
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); states.len()];
    let mut outflow = vec![0.0; states.len()];
    for (s, &(k, a, b)) in states.iter().enumerate() {
        let mut add = |to: usize, rate: f64| {
            if rate > 0.0 {
                incoming[to].push((s, rate));
                outflow[s] += rate;
            }
        };
        if k < n1 {
            add(index[k + 1][a][b], lambda1);
        } else if a + b < n2 {
            add(index[k][a + 1][b], lambda1);
        }
        if a + b < n2 {
            add(index[k][a][b + 1], lambda2);
        }
        if k > 0 {
            add(index[k - 1][a][b], k as f64 * mu);
        }
        if a > 0 {
            add(index[k][a - 1][b], a as f64 * mu);
        }
        if b > 0 {
            add(index[k][a][b - 1], b as f64 * mu);
        }
    }
    let mut pi = vec![1.0 / states.len() as f64; states.len()];
    for _ in 0..200_000 {
        let mut change: f64 = 0.0;
        for s in 0..states.len() {
            if outflow[s] == 0.0 {
                continue;
            }
            let v = incoming[s].iter().map(|&(from, rate)| pi[from] * rate).sum::<f64>() / outflow[s];
            change = change.max((v - pi[s]).abs() / v.max(1e-300));
            pi[s] = v;
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        if change < 1e-11 {
            break;
        }
    }
    let (mut lost1, mut lost2) = (0.0, 0.0);
    for (s, &(k, a, b)) in states.iter().enumerate() {
        if a + b == n2 {
            lost2 += pi[s] * lambda2;
            if k == n1 {
                lost1 += pi[s] * lambda1;
            }
        }
    }
    (lost1, lost2)
}

/// `|a - b| <= tol · max(|b|, floor)`.
pub fn rel_close(a: f64, b: f64, tol: f64, floor: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(floor)
}

/// Ratio estimate `Σ lost / Σ offered` over batches, with its batch-means
/// standard error. Loss events are correlated in time, so per-job binomial
/// errors would be too optimistic.
pub fn batch_ratio(batches: &[(u64, u64)]) -> (f64, f64) {
    let n = batches.len() as f64;
    let lost: f64 = batches.iter().map(|b| b.0 as f64).sum();
    let offered: f64 = batches.iter().map(|b| b.1 as f64).sum();
    let p = lost / offered;
    let mean_offered = offered / n;
    let var = batches
        .iter()
        .map(|&(l, o)| (l as f64 - p * o as f64).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (p, (var / n).sqrt() / mean_offered)
}
