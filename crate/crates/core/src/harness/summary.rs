//! Aggregation over seeds: means, standard errors, and trend slopes.

use serde::Serialize;

use super::config::Method;
use super::{ExperimentReport, MethodRun};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation over `√n`; zero for a single value.
pub fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "slope needs paired samples");
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return f64::NAN;
    }
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx
}

/// Slope of the running meta-regret against the task count `1..=N`.
pub fn curve_slope(curve: &[f64]) -> f64 {
    let xs: Vec<f64> = (1..=curve.len()).map(|i| i as f64).collect();
    least_squares_slope(&xs, curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        Self { mean: mean(xs), se: standard_error(xs) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub method: Method,
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub error: String,
}

/// One method at one horizon, over the seeds that completed.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seeds: usize,
    pub failed_seeds: Vec<u64>,
    /// Meta-regret after the last task.
    pub meta_regret: Stat,
    /// Running meta-regret per task count, mean and standard error over seeds.
    pub curve_mean: Vec<f64>,
    pub curve_se: Vec<f64>,
    /// Per-seed least-squares slope of the running meta-regret against `N`.
    pub slope: Stat,
    pub d_bar: Stat,
    pub d_star_pairwise: Stat,
    pub increments: Stat,
    pub hindsight_unconverged: usize,
    /// Tasks whose measured regret exceeded the per-task regret bound (learning methods only).
    pub bound_violations: usize,
}

/// Final meta-regret of one method across the horizon sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub method: Method,
    pub horizons: Vec<usize>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// Slope of `ln(mean meta-regret)` on `ln T`; absent when a mean is not positive.
    pub loglog_slope: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub partial: bool,
    pub failures: Vec<Failure>,
    pub suite_hashes: Vec<String>,
    pub methods: Vec<MethodSummary>,
    pub sweeps: Vec<SweepSummary>,
}

fn summarize_method(method: Method, horizon: usize, runs: &[&MethodRun]) -> Option<MethodSummary> {
    let ok: Vec<_> = runs.iter().filter_map(|r| r.report.as_ref().ok()).collect();
    if ok.is_empty() {
        return None;
    }
    let curves: Vec<Vec<f64>> = ok.iter().map(|r| r.cumulative_meta_regret()).collect();
    let len = curves[0].len();
    let column = |i: usize| curves.iter().map(|c| c[i]).collect::<Vec<_>>();
    let pick = |f: &dyn Fn(&crate::meta::MetaReport) -> f64| Stat::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
    let outcomes = ok.iter().flat_map(|r| &r.outcomes);
    Some(MethodSummary {
        method,
        horizon,
        seeds: ok.len(),
        failed_seeds: runs.iter().filter(|r| r.report.is_err()).map(|r| r.seed).collect(),
        meta_regret: pick(&|r| r.meta_regret),
        curve_mean: (0..len).map(|i| mean(&column(i))).collect(),
        curve_se: (0..len).map(|i| standard_error(&column(i))).collect(),
        slope: Stat::of(&curves.iter().map(|c| curve_slope(c)).collect::<Vec<_>>()),
        d_bar: pick(&|r| r.d_bar),
        d_star_pairwise: pick(&|r| r.d_star_pairwise),
        increments: pick(&|r| f64::from(r.increments)),
        hindsight_unconverged: outcomes.clone().filter(|o| !o.hindsight.converged).count(),
        bound_violations: outcomes
            .filter(|o| o.eta > 0.0 && !(o.policy_regret <= o.regret_bound && o.surrogate_regret <= o.regret_bound))
            .count(),
    })
}

pub fn summarize(report: &ExperimentReport) -> ExperimentSummary {
    let horizons = report.config.horizon_list();
    let mut methods = report.config.methods.clone();
    methods.sort();
    methods.dedup();

    let mut summaries = Vec::new();
    for &t in &horizons {
        for &m in &methods {
            let runs: Vec<&MethodRun> = report.runs_for(m, t).collect();
            summaries.extend(summarize_method(m, t, &runs));
        }
    }
    let sweeps = if horizons.len() > 1 {
        methods
            .iter()
            .map(|&m| {
                let rows: Vec<&MethodSummary> = summaries.iter().filter(|s| s.method == m).collect();
                let hs: Vec<usize> = rows.iter().map(|s| s.horizon).collect();
                let means: Vec<f64> = rows.iter().map(|s| s.meta_regret.mean).collect();
                let loglog_slope = (hs.len() > 1 && means.iter().all(|&v| v > 0.0)).then(|| {
                    let xs: Vec<f64> = hs.iter().map(|&t| (t as f64).ln()).collect();
                    let ys: Vec<f64> = means.iter().map(|v| v.ln()).collect();
                    least_squares_slope(&xs, &ys)
                });
                SweepSummary {
                    method: m,
                    horizons: hs,
                    se: rows.iter().map(|s| s.meta_regret.se).collect(),
                    mean: means,
                    loglog_slope,
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    ExperimentSummary {
        partial: report.partial(),
        failures: report
            .runs
            .iter()
            .filter_map(|r| {
                r.report.as_ref().err().map(|e| Failure { method: r.method, seed: r.seed, horizon: r.horizon, error: e.clone() })
            })
            .collect(),
        suite_hashes: report.suites.iter().map(|s| s.hash()).collect(),
        methods: summaries,
        sweeps,
    }
}
