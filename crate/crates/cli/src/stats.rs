//! Summary statistics over per-run metric traces.

use dwrl::IterationMetrics;

/// Scalar summaries of one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    pub mean_over_iterations: f64,
    pub max: f64,
    pub final_return: f64,
}

impl RunStats {
    pub fn of(metrics: &[IterationMetrics]) -> Self {
        let (mean, max) = dwrl::trainer::summarize_trace(metrics);
        RunStats {
            mean_over_iterations: mean,
            max,
            final_return: metrics.last().map(|m| m.mean_episode_return).unwrap_or(f64::NAN),
        }
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// `(ours - baseline) / |baseline|`, with the denominator floored at 1e-6.
pub fn improvement_ratio(ours: f64, baseline: f64) -> f64 {
    (ours - baseline) / baseline.abs().max(1e-6)
}

/// Method row of a summary table: mean ± std across seeds of each statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub seeds: usize,
    pub mean: (f64, f64),
    pub max: (f64, f64),
    pub final_return: (f64, f64),
}

impl MethodSummary {
    pub fn from_runs(method: &str, runs: &[RunStats]) -> Self {
        let col = |f: fn(&RunStats) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
        MethodSummary {
            method: method.to_string(),
            seeds: runs.len(),
            mean: col(|r| r.mean_over_iterations),
            max: col(|r| r.max),
            final_return: col(|r| r.final_return),
        }
    }
}

pub const SUMMARY_HEADER: &str =
    "method,seeds,mean_reward,mean_reward_std,max_reward,max_reward_std,final_reward,final_reward_std";

pub fn summary_csv(rows: &[MethodSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.method, r.seeds, r.mean.0, r.mean.1, r.max.0, r.max.1, r.final_return.0, r.final_return.1
        ));
    }
    out
}

/// Seed-averaged curve: `(iteration, mean return, std)` per iteration index
/// present in every run.
pub fn mean_curve(runs: &[Vec<IterationMetrics>]) -> Vec<(usize, f64, f64)> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let vals: Vec<f64> = runs.iter().map(|r| r[i].mean_episode_return).collect();
            let (m, s) = mean_std(&vals);
            (runs[0][i].iteration, m, s)
        })
        .collect()
}

pub fn curve_csv(curve: &[(usize, f64, f64)]) -> String {
    let mut out = String::from("iteration,mean_episode_return,std\n");
    for (it, m, s) in curve {
        out.push_str(&format!("{it},{m},{s}\n"));
    }
    out
}
