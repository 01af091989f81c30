#![allow(dead_code)]

use std::collections::BTreeMap;

use evoagent::benchmarks::Genome;
use evoagent::ea::Individual;

pub fn pool(fitness: &[f64]) -> Vec<Individual> {
    fitness
        .iter()
        .enumerate()
        .map(|(i, &f)| Individual::evaluated(Genome(vec![i as f64]), f))
        .collect()
}

/// Exact probability of every ordered (better, second) index pair when `k`
/// members are drawn with replacement and the best two kept, earlier draws
/// winning ties. Enumerates all `n^k` draw sequences.
pub fn best_two_of_k(fitness: &[f64], k: usize) -> BTreeMap<(usize, usize), f64> {
    let n = fitness.len();
    let total = n.pow(k as u32);
    let mut out = BTreeMap::new();
    for code in 0..total {
        let mut c = code;
        let mut draw = Vec::with_capacity(k);
        for _ in 0..k {
            draw.push(c % n);
            c /= n;
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| fitness[draw[a]].total_cmp(&fitness[draw[b]]));
        *out.entry((draw[order[0]], draw[order[1]])).or_insert(0.0) += 1.0 / total as f64;
    }
    out
}

/// Largest deviation, in binomial standard deviations, between observed
/// pair counts and the exact probabilities.
pub fn max_sigma(
    counts: &BTreeMap<(usize, usize), u64>,
    exact: &BTreeMap<(usize, usize), f64>,
    draws: u64,
) -> f64 {
    let mut worst = 0.0f64;
    if counts.keys().any(|pair| !exact.contains_key(pair)) {
        return f64::INFINITY;
    }
    for (pair, &p) in exact {
        let c = counts.get(pair).copied().unwrap_or(0) as f64;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        let z = (c - draws as f64 * p).abs() / sd.max(f64::MIN_POSITIVE);
        worst = worst.max(z);
    }
    worst
}
