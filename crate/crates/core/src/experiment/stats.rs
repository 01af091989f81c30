//! Descriptive statistics over repeated runs.
//!
//! Quartiles use inclusive linear interpolation: the `p` quantile of a sorted
//! sample `x[0..n]` is read at fractional rank `(n - 1) p`.

use super::RunResult;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Welch's unequal-variance t statistic and its Welch–Satterthwaite degrees
/// of freedom. No significance verdict is attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchT {
    pub t: f64,
    pub df: f64,
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Option<SummaryStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(SummaryStats {
        count: values.len(),
        mean,
        sd,
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

/// `None` when either sample has fewer than two values or both are constant.
pub fn welch_t(a: &[f64], b: &[f64]) -> Option<WelchT> {
    let (sa, sb) = (summarize(a)?, summarize(b)?);
    if sa.count < 2 || sb.count < 2 {
        return None;
    }
    let va = sa.sd * sa.sd / sa.count as f64;
    let vb = sb.sd * sb.sd / sb.count as f64;
    let se2 = va + vb;
    if se2 == 0.0 {
        return None;
    }
    let t = (sa.mean - sb.mean) / se2.sqrt();
    let df = se2 * se2 / (va * va / (sa.count as f64 - 1.0) + vb * vb / (sb.count as f64 - 1.0));
    Some(WelchT { t, df })
}

/// Best-fitness and migrant-latency summaries for one group of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub fitness: SummaryStats,
    /// Over the per-run mean migrant latency, runs without migrants skipped.
    pub latency: Option<SummaryStats>,
    pub t_vs_reference: Option<WelchT>,
}

pub fn summarize_runs(
    results: &[RunResult],
    reference: Option<&[RunResult]>,
) -> Option<RunSummary> {
    let fits: Vec<f64> = results.iter().map(|r| r.best_fitness).collect();
    let lats: Vec<f64> = results
        .iter()
        .filter_map(|r| r.migrant_latency_mean())
        .collect();
    let t_vs_reference = reference.and_then(|refs| {
        let other: Vec<f64> = refs.iter().map(|r| r.best_fitness).collect();
        welch_t(&fits, &other)
    });
    Some(RunSummary {
        fitness: summarize(&fits)?,
        latency: summarize(&lats),
        t_vs_reference,
    })
}
