//! Aggregation of per-episode metrics into means, spreads, and 95%
//! confidence intervals, plus baseline-vs-variant comparison tables.

/// Mean, sample standard deviation, and normal-approximation 95% CI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

/// Aggregates a metric column. Uses the sample standard deviation (N - 1
/// denominator); a single value has zero spread and a point interval.
/// Panics on an empty column.
pub fn aggregate(values: &[f64]) -> Aggregate {
    assert!(!values.is_empty(), "aggregate requires at least one value");
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        let sum_sq: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (sum_sq / (n - 1) as f64).sqrt()
    };
    let half = 1.96 * std / (n as f64).sqrt();
    Aggregate {
        mean,
        std,
        ci_low: mean - half,
        ci_high: mean + half,
        n: n as u64,
    }
}

/// Aggregates for every metric of one run, in a fixed report order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub metrics: Vec<(&'static str, Aggregate)>,
}

impl RunSummary {
    pub fn get(&self, metric: &str) -> Option<&Aggregate> {
        self.metrics
            .iter()
            .find(|(name, _)| *name == metric)
            .map(|(_, agg)| agg)
    }
}

/// One metric's row of a baseline-vs-variant comparison. Percentage deltas
/// are relative to the baseline magnitude, so an improvement is positive
/// even when both means are negative; they are absent when the baseline
/// value is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: &'static str,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub variant_mean: f64,
    pub variant_std: f64,
    pub delta_mean: f64,
    pub pct_delta_mean: Option<f64>,
    pub delta_std: f64,
    pub pct_delta_std: Option<f64>,
}

fn pct(delta: f64, base: f64) -> Option<f64> {
    if base == 0.0 {
        None
    } else {
        Some(delta / base.abs() * 100.0)
    }
}

/// Lines up two summaries metric by metric. Panics if the metric sets
/// differ (summaries from this crate always agree).
pub fn compare(baseline: &RunSummary, variant: &RunSummary) -> Vec<ComparisonRow> {
    assert_eq!(
        baseline.metrics.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
        variant.metrics.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
        "comparison requires matching metric sets"
    );
    baseline
        .metrics
        .iter()
        .zip(&variant.metrics)
        .map(|((metric, base), (_, var))| {
            let delta_mean = var.mean - base.mean;
            let delta_std = var.std - base.std;
            ComparisonRow {
                metric,
                baseline_mean: base.mean,
                baseline_std: base.std,
                variant_mean: var.mean,
                variant_std: var.std,
                delta_mean,
                pct_delta_mean: pct(delta_mean, base.mean),
                delta_std,
                pct_delta_std: pct(delta_std, base.std),
            }
        })
        .collect()
}
