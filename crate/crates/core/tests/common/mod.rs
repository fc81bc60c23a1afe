//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use robust_cp::CriterionSpec;

fn cost(values: &[f64], a: f64, spec: CriterionSpec) -> f64 {
    values.iter().map(|v| spec.loss(v - a)).sum()
}

/// Location minimizer by direct search: ℓ2 by the normal equation, ℓ1 by
/// scanning the data points, Huber by golden section followed by bisection
/// of both ends of the minimizing set.
pub fn oracle_location(values: &[f64], spec: CriterionSpec) -> f64 {
    assert!(!values.is_empty());
    match spec {
        CriterionSpec::SquaredError => values.iter().sum::<f64>() / values.len() as f64,
        CriterionSpec::AbsoluteDeviation => {
            let costs: Vec<f64> = values.iter().map(|&a| cost(values, a, spec)).collect();
            let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
            let tol = 1e-12 * (1.0 + min);
            let at_min: Vec<f64> = values
                .iter()
                .zip(&costs)
                .filter(|(_, c)| **c <= min + tol)
                .map(|(v, _)| *v)
                .collect();
            let lo = at_min.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = at_min.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (lo + hi)
        }
        CriterionSpec::Huber(_) => {
            let f = |a: f64| cost(values, a, spec);
            let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (a0, b0) = (lo, hi);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..300 {
                let c = hi - g * (hi - lo);
                let d = lo + g * (hi - lo);
                if f(c) <= f(d) {
                    hi = d;
                } else {
                    lo = c;
                }
            }
            let star = 0.5 * (lo + hi);
            let fmin = f(star);
            let flat = |a: f64| f(a) <= fmin + 1e-11 * (1.0 + fmin);
            let edge = |mut inside: f64, mut outside: f64| {
                if flat(outside) {
                    return outside;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (inside + outside);
                    if flat(mid) {
                        inside = mid;
                    } else {
                        outside = mid;
                    }
                }
                inside
            };
            0.5 * (edge(star, a0) + edge(star, b0))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleStump {
    pub d_interval: (f64, f64),
    pub alpha: f64,
    pub beta: f64,
    pub value: f64,
}

/// Enumerates every split between distinct covariate values, fits both
/// sides with [`oracle_location`] and keeps the first minimal split.
pub fn brute_force_stump(x: &[f64], y: &[f64], spec: CriterionSpec) -> OracleStump {
    let mut uniq: Vec<f64> = x.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    assert!(uniq.len() >= 2);
    let fits: Vec<OracleStump> = uniq
        .windows(2)
        .map(|w| {
            let left: Vec<f64> = x
                .iter()
                .zip(y)
                .filter(|(xi, _)| **xi <= w[0])
                .map(|(_, v)| *v)
                .collect();
            let right: Vec<f64> = x
                .iter()
                .zip(y)
                .filter(|(xi, _)| **xi > w[0])
                .map(|(_, v)| *v)
                .collect();
            let alpha = oracle_location(&left, spec);
            let beta = oracle_location(&right, spec);
            OracleStump {
                d_interval: (w[0], w[1]),
                alpha,
                beta,
                value: (cost(&left, alpha, spec) + cost(&right, beta, spec)) / x.len() as f64,
            }
        })
        .collect();
    let min = fits.iter().map(|f| f.value).fold(f64::INFINITY, f64::min);
    *fits
        .iter()
        .find(|f| f.value <= min + 1e-10 * (1.0 + min))
        .unwrap()
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// P(max_{1≤i≤n} S_i < 0) and P(S_n < 0) for a two-point step walk, by
/// dynamic programming over the number of up-steps.
pub fn walk_dp(up: f64, down: f64, p_up: f64, n: usize) -> (f64, f64) {
    let pos = |i: usize, k: usize| k as f64 * up + (i - k) as f64 * down;
    // alive[k]: probability of k up-steps so far with every partial sum < 0
    let mut alive = vec![1.0];
    for i in 1..=n {
        let mut next = vec![0.0; i + 1];
        for (k, &w) in alive.iter().enumerate() {
            next[k + 1] += w * p_up;
            next[k] += w * (1.0 - p_up);
        }
        for (k, w) in next.iter_mut().enumerate() {
            if pos(i, k) >= 0.0 {
                *w = 0.0;
            }
        }
        alive = next;
    }
    let p_max: f64 = alive.iter().sum();
    let mut p_end = 0.0;
    let mut binom = 1.0;
    for k in 0..=n {
        if k > 0 {
            binom *= (n - k + 1) as f64 / k as f64;
        }
        if pos(n, k) < 0.0 {
            p_end += binom * p_up.powi(k as i32) * (1.0 - p_up).powi((n - k) as i32);
        }
    }
    (p_max, p_end)
}
