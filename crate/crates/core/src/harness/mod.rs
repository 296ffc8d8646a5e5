//! Experiment orchestration: task-suite generation, multi-seed runs of every method,
//! and persistence.

pub mod config;
pub mod output;
pub mod suite;
pub mod summary;

use rayon::prelude::*;

use crate::bench::{run_independent, run_non_adaptive_suite};
use crate::dac::horizon;
use crate::error::{Error, Result};
use crate::meta::{compute_constants, max_pairwise_distance, run_moc1, run_moc2, ConstantsBundle, MetaReport};
use crate::oc::TaskSpec;

pub use config::{BRule, DStar, DStarKeyword, ExperimentConfig, Horizons, Method};
pub use suite::{generate_suite_artifact, generate_task_suite, parse_suite, SuiteArtifact, TaskArtifact};

/// Parses and validates an experiment configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml(text)
}

/// One method on one stored suite.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub seed: u64,
    pub horizon: usize,
    pub suite_hash: String,
    /// Step scale M-OC-1 used, when it ran.
    pub d_star: Option<f64>,
    pub report: std::result::Result<MetaReport, String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub suites: Vec<SuiteArtifact>,
    /// Ordered by horizon, then seed, then method.
    pub runs: Vec<MethodRun>,
}

impl ExperimentReport {
    /// True when some method failed on some suite.
    pub fn partial(&self) -> bool {
        self.runs.iter().any(|r| r.report.is_err())
    }

    pub fn runs_for(&self, method: Method, horizon: usize) -> impl Iterator<Item = &MethodRun> {
        self.runs.iter().filter(move |r| r.method == method && r.horizon == horizon)
    }
}

/// Constants for a suite of horizon `t`.
pub fn constants_for(cfg: &ExperimentConfig, t: usize) -> Result<ConstantsBundle> {
    let bounds = cfg.bounds();
    compute_constants(&bounds, horizon(t, bounds.gamma)?, cfg.dimension_parameter())
}

/// M-OC-1's step scale: the configured value, or the largest pairwise distance among
/// the suite's hindsight optima (never below `ε`).
fn resolve_d_star(cfg: &ExperimentConfig, reference: Option<&MetaReport>, tasks: &[TaskSpec], consts: &ConstantsBundle) -> Result<f64> {
    match cfg.d_star {
        DStar::Value(v) => Ok(v),
        DStar::Keyword(DStarKeyword::Empirical) => {
            let owned;
            let report = match reference {
                Some(r) => r,
                None => {
                    owned = run_non_adaptive_suite(tasks, consts)?;
                    &owned
                }
            };
            let stars: Vec<_> = report.m_stars().into_iter().cloned().collect();
            Ok(max_pairwise_distance(&stars)?.max(cfg.epsilon))
        }
    }
}

/// Runs every configured method on one suite. Methods see identical tasks.
pub fn run_methods(cfg: &ExperimentConfig, artifact: &SuiteArtifact) -> Result<Vec<MethodRun>> {
    if artifact.n != cfg.n || artifact.m != cfg.m {
        return Err(Error::InvalidConfiguration(format!(
            "suite is {}×{} but the configuration says n = {}, m = {}",
            artifact.n, artifact.m, cfg.n, cfg.m
        )));
    }
    let tasks = artifact.tasks()?;
    let t = artifact.horizon;
    let consts = constants_for(cfg, t)?;
    let hash = artifact.hash();
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();

    let mut results: Vec<MethodRun> = Vec::with_capacity(methods.len());
    for method in methods {
        let mut d_star = None;
        let report = match method {
            Method::NonAdaptive => run_non_adaptive_suite(&tasks, &consts),
            Method::IndependentOc => run_independent(&tasks, &consts),
            Method::Moc1 => {
                let reference = results
                    .iter()
                    .find_map(|r| r.report.as_ref().ok().filter(|_| r.method == Method::NonAdaptive));
                resolve_d_star(cfg, reference, &tasks, &consts).and_then(|d| {
                    d_star = Some(d);
                    run_moc1(&tasks, d, &consts)
                })
            }
            Method::Moc2 => run_moc2(&tasks, cfg.epsilon, cfg.zeta_for(t), &consts),
        };
        let report = report.and_then(|r| r.with_comparator(&tasks, cfg.comparator, consts.bounds.kappa));
        if let Err(e) = &report {
            log::error!("{method} failed on suite seed {} (T = {t}): {e}", artifact.seed);
        }
        results.push(MethodRun {
            method,
            seed: artifact.seed,
            horizon: t,
            suite_hash: hash.clone(),
            d_star,
            report: report.map_err(|e| e.to_string()),
        });
    }
    Ok(results)
}

/// Generates one suite per `(T, seed)` and runs every method on each.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut suites = Vec::new();
    for t in cfg.horizon_list() {
        for &seed in &cfg.seeds {
            suites.push(generate_suite_artifact(cfg, seed, t)?);
        }
    }
    run_suites(cfg, suites)
}

/// Reruns a configuration on the suites stored in `dir`.
pub fn replay(cfg: &ExperimentConfig, dir: &std::path::Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    run_suites(cfg, output::load_suites(dir, cfg)?)
}

/// Runs every method on stored suites; suites run in parallel, results keep input order.
pub fn run_suites(cfg: &ExperimentConfig, suites: Vec<SuiteArtifact>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let per_suite: Vec<Result<Vec<MethodRun>>> = suites.par_iter().map(|s| run_methods(cfg, s)).collect();
    let mut runs = Vec::new();
    for r in per_suite {
        runs.extend(r?);
    }
    Ok(ExperimentReport { config: cfg.clone(), suites, runs })
}
