//! The acceptance battery: oracle checks, bound checks, and trend reproduction.
//! Shared by the `check` subcommand and the acceptance test target.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bench::independent_config;
use crate::dac::{DacDomain, DacParams};
use crate::error::Result;
use crate::harness::output::{load_suites, results_csv, write_suites};
use crate::harness::summary::{curve_slope, least_squares_slope, mean, standard_error};
use crate::harness::{constants_for, generate_task_suite, run_experiment, run_suites, ExperimentConfig, ExperimentReport, Horizons, Method};
use crate::lds::{synthesize_stabilizer, DisturbanceKind, DisturbanceSource, SystemMatrices};
use crate::meta::{compute_constants, hindsight_optimum};
use crate::oc::{run_oc, TaskSpec};
use crate::surrogate::{surrogate_cost_g, surrogate_grad, QuadraticCost, StageCost, SurrogateContext};

pub const GRADIENT_REL_TOL: f64 = 1e-6;
pub const GRADIENT_SECONDS: f64 = 5.0;
pub const PROJECTION_TOL: f64 = 1e-12;
pub const GRID_STEP: f64 = 1e-4;
pub const GRID_MATCH_TOL: f64 = 1e-3;
pub const OPTIMALITY_REL_TOL: f64 = 1e-6;
pub const TASKS_SECONDS: f64 = 120.0;
pub const HORIZONS_SECONDS: f64 = 600.0;
pub const SLOPE_RANGE: (f64, f64) = (0.3, 0.7);
pub const SWEEP_HORIZONS: [usize; 5] = [25, 50, 100, 200, 400];

#[derive(Debug, Clone)]
pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {verdict} {}: {} ({:.1} s)", self.id, self.title, self.detail, self.seconds)
    }
}

fn criterion(id: u8, title: &'static str, start: Instant, outcome: Result<(bool, String)>) -> Criterion {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Criterion { id, title, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn ball_sample(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> DVector<f64> {
    let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = g.norm();
    if norm == 0.0 {
        return g;
    }
    g * (radius * rng.random::<f64>().powf(1.0 / dim as f64) / norm)
}

/// Random point of the domain; about a quarter of the blocks land on their sphere.
fn feasible_sample(rng: &mut ChaCha8Rng, dom: &DacDomain) -> DacParams {
    let size = dom.m() * dom.n();
    let mut flat = Vec::with_capacity(size * dom.h());
    for k in 1..=dom.h() {
        let mut v = ball_sample(rng, size, dom.radius(k));
        if rng.random::<f64>() < 0.25 && v.norm() > 0.0 {
            v *= dom.radius(k) / v.norm() * (1.0 - 1e-12);
        }
        flat.extend(v.iter());
    }
    DacParams::from_flat(dom.h(), dom.m(), dom.n(), &flat).expect("shape matches the domain")
}

/// A task drawn like the experiment suites, with its certified gain.
fn section_six_task(cfg: &ExperimentConfig, seed: u64, horizon: usize) -> Result<(TaskSpec, DMatrix<f64>)> {
    let cfg = ExperimentConfig { tasks: 1, ..cfg.clone() };
    let (mut tasks, _) = generate_task_suite(&cfg, seed, horizon)?;
    let task = tasks.remove(0);
    let k = synthesize_stabilizer(&task.sys, &cfg.bounds())?.k;
    Ok((task, k))
}

/// 1. Adjoint gradient against central differences on random instances with `H = 5`.
pub fn gradient_check() -> Criterion {
    let start = Instant::now();
    let outcome = (|| {
        let cfg = ExperimentConfig::default();
        let bounds = cfg.bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = 5;
        let mut worst: f64 = 0.0;
        for i in 0..100u64 {
            let (task, k) = section_six_task(&cfg, 1000 + i, 25)?;
            let dom = DacDomain::from_bounds(h, 1, 2, &bounds)?;
            let log: Vec<DVector<f64>> = (0..25).map(|_| ball_sample(&mut rng, 2, bounds.kappa_w)).collect();
            let ctx = SurrogateContext::new(&task.sys, &k, &log, h)?;
            let m = feasible_sample(&mut rng, &dom);
            let t = rng.random_range(1..=25i64);
            let cost = task.costs[t as usize - 1].as_ref();
            let grad = DVector::from_vec(surrogate_grad(&ctx, &m, cost, t)?.to_flat());
            let flat = m.to_flat();
            let step = 1e-5;
            let mut fd = DVector::zeros(flat.len());
            for j in 0..flat.len() {
                let mut plus = flat.clone();
                let mut minus = flat.clone();
                plus[j] += step;
                minus[j] -= step;
                let gp = surrogate_cost_g(&ctx, &DacParams::from_flat(h, 1, 2, &plus)?, cost, t)?;
                let gm = surrogate_cost_g(&ctx, &DacParams::from_flat(h, 1, 2, &minus)?, cost, t)?;
                fd[j] = (gp - gm) / (2.0 * step);
            }
            let rel = (&grad - &fd).norm() / fd.norm().max(1e-12);
            worst = worst.max(rel);
        }
        let secs = start.elapsed().as_secs_f64();
        Ok((
            worst <= GRADIENT_REL_TOL && secs < GRADIENT_SECONDS,
            format!("worst relative error {worst:.2e} (≤ {GRADIENT_REL_TOL:.0e}) over 100 instances, {secs:.2} s (< {GRADIENT_SECONDS} s)"),
        ))
    })();
    criterion(1, "gradient vs central differences", start, outcome)
}

/// 2. Idempotence, per-block feasibility, and non-expansiveness of the projection.
pub fn projection_check() -> Criterion {
    let start = Instant::now();
    let outcome = (|| {
        let bounds = ExperimentConfig::default().bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut worst_idem: f64 = 0.0;
        let mut worst_feas: f64 = 0.0;
        let mut worst_expand: f64 = 0.0;
        for pair in 0..1000 {
            let (h, m, n) = if pair % 2 == 0 { (5, 1, 2) } else { (3, 2, 3) };
            let dom = DacDomain::from_bounds(h, m, n, &bounds)?;
            let scale = [0.1, 1.0, 10.0][pair % 3];
            let draw = |rng: &mut ChaCha8Rng| {
                let flat: Vec<f64> = (0..h * m * n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
                DacParams::from_flat(h, m, n, &flat)
            };
            let (x, y) = (draw(&mut rng)?, draw(&mut rng)?);
            let (px, py) = (dom.project(&x)?, dom.project(&y)?);
            worst_idem = worst_idem.max(dom.project(&px)?.distance(&px)?);
            for p in [&px, &py] {
                for k in 1..=h {
                    let r = bounds.kappa.powi(3) * bounds.kappa_b * (1.0 - bounds.gamma).powi(k as i32);
                    worst_feas = worst_feas.max(p.block(k).norm() - r);
                }
            }
            worst_expand = worst_expand.max(px.distance(&py)? - x.distance(&y)?);
        }
        let passed = worst_idem <= PROJECTION_TOL && worst_feas <= PROJECTION_TOL && worst_expand <= PROJECTION_TOL;
        Ok((
            passed,
            format!(
                "idempotence {worst_idem:.1e}, feasibility excess {worst_feas:.1e}, expansion {worst_expand:.1e} (all ≤ {PROJECTION_TOL:.0e}) over 1000 pairs"
            ),
        ))
    })();
    criterion(2, "projection properties", start, outcome)
}

/// 3. Hindsight solver against a fine grid (scalar case) and against random feasible
/// points on experiment-sized instances.
pub fn hindsight_check() -> Criterion {
    let start = Instant::now();
    let outcome = (|| {
        let sys = SystemMatrices::new(DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 1.0))?;
        let bounds = crate::lds::SystemBounds { kappa: 1.0, ..Default::default() };
        let k = synthesize_stabilizer(&sys, &bounds)?.k;
        let src = DisturbanceSource::new(DisturbanceKind::Sinusoidal, 1.0, 3, 1)?;
        let log = src.emit_sequence(40);
        let cost: Arc<dyn StageCost> =
            Arc::new(QuadraticCost::diagonal(&[1.0], &[0.1])?.with_state_target(DVector::from_element(1, 0.4))?);
        let costs = vec![cost; 40];
        let ctx = SurrogateContext::new(&sys, &k, &log, 1)?;
        let dom = DacDomain::from_bounds(1, 1, 1, &bounds)?;
        let sol = hindsight_optimum(&ctx, &costs, &dom)?;
        let r = dom.radius(1);
        let steps = (2.0 * r / GRID_STEP).round() as i64;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=steps {
            let mv = (-r + i as f64 * GRID_STEP).clamp(-r, r);
            let m = DacParams::from_flat(1, 1, 1, &[mv])?;
            let f: f64 = costs.iter().enumerate().map(|(t, c)| surrogate_cost_g(&ctx, &m, c.as_ref(), t as i64 + 1)).sum::<Result<f64>>()?;
            if f < best.0 {
                best = (f, mv);
            }
        }
        let scalar_gap = (sol.params.to_flat()[0] - best.1).abs();

        let cfg = ExperimentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let consts = constants_for(&cfg, 25)?;
        let mut worst: f64 = f64::NEG_INFINITY;
        for (i, kind) in [DisturbanceKind::SeededRandomWalk, DisturbanceKind::UniformBall, DisturbanceKind::Sinusoidal].into_iter().enumerate() {
            let cfg = ExperimentConfig { disturbance: kind, ..cfg.clone() };
            let (task, _) = section_six_task(&cfg, 300 + i as u64, 25)?;
            let oc = independent_config(&task, 1, &consts)?;
            let record = run_oc(&task, &oc)?;
            let ctx = record.context(&task.sys)?;
            let sol = hindsight_optimum(&ctx, &task.costs, &oc.domain)?;
            for _ in 0..100 {
                let m = feasible_sample(&mut rng, &oc.domain);
                let f: f64 = task
                    .costs
                    .iter()
                    .enumerate()
                    .map(|(t, c)| surrogate_cost_g(&ctx, &m, c.as_ref(), t as i64 + 1))
                    .sum::<Result<f64>>()?;
                worst = worst.max((sol.objective - f) / f.abs().max(1e-300));
            }
        }
        Ok((
            scalar_gap <= GRID_MATCH_TOL && worst <= OPTIMALITY_REL_TOL,
            format!(
                "scalar |M* − grid| = {scalar_gap:.1e} (≤ {GRID_MATCH_TOL:.0e}); worst (F(M*) − F(M))/F(M) = {worst:.1e} (≤ {OPTIMALITY_REL_TOL:.0e}) over 300 points"
            ),
        ))
    })();
    criterion(3, "hindsight solver optimality", start, outcome)
}

pub fn tasks_config() -> ExperimentConfig {
    ExperimentConfig::default()
}

pub fn horizons_config() -> ExperimentConfig {
    ExperimentConfig { tasks: 15, horizons: Horizons::Sweep(SWEEP_HORIZONS.to_vec()), ..ExperimentConfig::default() }
}

fn finished(report: &ExperimentReport, method: Method, horizon: usize) -> Vec<&crate::meta::MetaReport> {
    report.runs_for(method, horizon).filter_map(|r| r.report.as_ref().ok()).collect()
}

/// 4. Meta-regret trend over tasks at `T = 25`: M-OC-1 below independent OC and
/// decreasing; the baselines flat within two standard errors.
pub fn tasks_trend(report: &ExperimentReport, seconds: f64) -> Criterion {
    let start = Instant::now();
    let outcome = (|| {
        let t = report.config.horizon_list()[0];
        let finals = |m| finished(report, m, t).iter().map(|r| r.meta_regret).collect::<Vec<_>>();
        let slopes = |m| finished(report, m, t).iter().map(|r| curve_slope(&r.cumulative_meta_regret())).collect::<Vec<_>>();
        let (moc, ind) = (finals(Method::Moc1), finals(Method::IndependentOc));
        let a = mean(&moc) < mean(&ind);
        let curves: Vec<Vec<f64>> = finished(report, Method::Moc1, t).iter().map(|r| r.cumulative_meta_regret()).collect();
        let n = curves.first().map_or(0, Vec::len);
        let mean_curve: Vec<f64> = (0..n).map(|i| mean(&curves.iter().map(|c| c[i]).collect::<Vec<_>>())).collect();
        let moc_slope = curve_slope(&mean_curve);
        let b = moc_slope < 0.0;
        let flat = |m| {
            let s = slopes(m);
            let (mu, se) = (mean(&s), standard_error(&s));
            (mu.abs() <= 2.0 * se, mu, se)
        };
        let (c_na, na_mu, na_se) = flat(Method::NonAdaptive);
        let (c_ind, ind_mu, ind_se) = flat(Method::IndependentOc);
        let complete = !report.partial() && moc.len() == report.config.seeds.len();
        Ok((
            a && b && c_na && c_ind && complete && seconds < TASKS_SECONDS,
            format!(
                "(a) M-OC-1 {:.4} vs independent {:.4} {}; (b) M-OC-1 slope {moc_slope:+.3e} {}; (c) non-adaptive slope {na_mu:+.2e} ± {na_se:.1e} {}, independent {ind_mu:+.2e} ± {ind_se:.1e} {}; {:.1} s (< {TASKS_SECONDS} s){}",
                mean(&moc),
                mean(&ind),
                ok(a),
                ok(b),
                ok(c_na),
                ok(c_ind),
                seconds,
                if complete { "" } else { "; some runs failed" }
            ),
        ))
    })();
    Criterion { seconds: seconds + start.elapsed().as_secs_f64(), ..criterion(4, "meta-regret over tasks", start, outcome) }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

/// 5. Meta-regret trend over the horizon: independent OC grows like `T^{1/2}` on a
/// log-log fit, and M-OC-1 beats it at the shortest horizon.
pub fn horizons_trend(report: &ExperimentReport, seconds: f64) -> Criterion {
    let start = Instant::now();
    let outcome = (|| {
        let hs = report.config.horizon_list();
        let means = |m| hs.iter().map(|&t| mean(&finished(report, m, t).iter().map(|r| r.meta_regret).collect::<Vec<_>>())).collect::<Vec<_>>();
        let ind = means(Method::IndependentOc);
        let moc = means(Method::Moc1);
        let xs: Vec<f64> = hs.iter().map(|&t| (t as f64).ln()).collect();
        let ys: Vec<f64> = ind.iter().map(|v| v.ln()).collect();
        let slope = least_squares_slope(&xs, &ys);
        let in_range = (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&slope);
        let below = moc[0] < ind[0];
        let table: Vec<String> = hs.iter().zip(&ind).zip(&moc).map(|((t, i), m)| format!("T={t}: {i:.3}/{m:.3}")).collect();
        Ok((
            in_range && below && !report.partial() && seconds < HORIZONS_SECONDS,
            format!(
                "independent log-log slope {slope:.3} in [{}, {}] {}; M-OC-1 {:.4} < independent {:.4} at T={} {}; independent/M-OC-1 {}; {:.1} s (< {HORIZONS_SECONDS} s)",
                SLOPE_RANGE.0,
                SLOPE_RANGE.1,
                ok(in_range),
                moc[0],
                ind[0],
                hs[0],
                ok(below),
                table.join(", "),
                seconds
            ),
        ))
    })();
    Criterion { seconds: seconds + start.elapsed().as_secs_f64(), ..criterion(5, "meta-regret over horizon", start, outcome) }
}

/// 6. M-OC-2 schedule: every ratio is 1 or ζ, and the increment count is at most
/// `⌊log_ζ(D*/ε)⌋ + 1` whenever `ε < D*`.
pub fn doubling_law(reports: &[&ExperimentReport]) -> Criterion {
    let start = Instant::now();
    let outcome = (|| {
        let mut runs = 0;
        let mut bad = Vec::new();
        for rep in reports {
            let cfg = &rep.config;
            for run in rep.runs.iter().filter(|r| r.method == Method::Moc2) {
                let Ok(r) = &run.report else { continue };
                runs += 1;
                let zeta = cfg.zeta_for(run.horizon);
                let mut k = 0i32;
                for w in r.d_trace.windows(2) {
                    if w[1] != w[0] {
                        k += 1;
                    }
                    let ratio_ok = w[1] == w[0] || (w[1] / w[0] - zeta).abs() <= 1e-12 * zeta;
                    if !ratio_ok || w[1] != cfg.epsilon * zeta.powi(k) {
                        bad.push(format!("seed {} T={}: ratio {}", run.seed, run.horizon, w[1] / w[0]));
                    }
                }
                let d_emp = r.d_star_pairwise;
                if cfg.epsilon < d_emp {
                    let cap = (d_emp / cfg.epsilon).ln() / zeta.ln();
                    if f64::from(r.increments) > cap.floor() + 1.0 {
                        bad.push(format!("seed {} T={}: {} increments > {}", run.seed, run.horizon, r.increments, cap.floor() + 1.0));
                    }
                }
            }
        }
        Ok((
            runs > 0 && bad.is_empty(),
            if bad.is_empty() { format!("{runs} runs, all ratios in {{1, ζ}} and increment counts within the cap") } else { bad.join("; ") },
        ))
    })();
    criterion(6, "M-OC-2 doubling law", start, outcome)
}

/// 7. `|Σc_t − Σf_t|` on one task strictly decreases over `H ∈ {2, 4, 8}`.
pub fn residual_decay() -> Criterion {
    let start = Instant::now();
    let outcome = (|| {
        let cfg = ExperimentConfig::default();
        let bounds = cfg.bounds();
        let (task, _) = section_six_task(&cfg, 7, 100)?;
        let mut residuals = Vec::new();
        for h in [2, 4, 8] {
            let consts = compute_constants(&bounds, h, cfg.dimension_parameter())?;
            let oc = independent_config(&task, 1, &consts)?;
            residuals.push(run_oc(&task, &oc)?.approximation_residual().abs());
        }
        Ok((
            residuals[0] > residuals[1] && residuals[1] > residuals[2],
            format!("|R_T,1| at H = 2, 4, 8: {:.3e}, {:.3e}, {:.3e}", residuals[0], residuals[1], residuals[2]),
        ))
    })();
    criterion(7, "cost-approximation residual decay", start, outcome)
}

/// 8. Policy regret (both measures) below the per-task regret bound on every learning task.
pub fn task_bound_check(reports: &[&ExperimentReport]) -> Criterion {
    let start = Instant::now();
    let mut tasks = 0;
    let mut violations = Vec::new();
    let mut tightest: f64 = 0.0;
    for rep in reports {
        for run in &rep.runs {
            let Ok(r) = &run.report else { continue };
            for o in r.outcomes.iter().filter(|o| o.eta > 0.0) {
                tasks += 1;
                let worst = o.policy_regret.max(o.surrogate_regret);
                tightest = tightest.max(worst / o.regret_bound);
                if !(worst <= o.regret_bound) {
                    violations.push(format!("{} seed {} T={} task {}", run.method, run.seed, run.horizon, o.index));
                }
            }
        }
    }
    let passed = tasks > 0 && violations.is_empty();
    let detail = if violations.is_empty() {
        format!("{tasks} tasks, largest regret/bound ratio {tightest:.2e}")
    } else {
        format!("{} violations: {}", violations.len(), violations.join(", "))
    };
    criterion(8, "policy regret under the per-task regret bound", start, Ok((passed, detail)))
}

/// 9. `‖∇g_t(M)‖ ≤ G_f` on 1000 feasible samples per configuration.
pub fn gradient_bound_check() -> Criterion {
    let start = Instant::now();
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut lines = Vec::new();
        let mut passed = true;
        for (n, m, t_len) in [(2, 1, 25), (2, 1, 100), (3, 2, 25)] {
            let cfg = ExperimentConfig { n, m, ..ExperimentConfig::default() };
            let bounds = cfg.bounds();
            let consts = constants_for(&cfg, t_len)?;
            let dom = DacDomain::from_bounds(consts.h, m, n, &bounds)?;
            let mut worst: f64 = 0.0;
            for i in 0..1000u64 {
                let (task, k) = section_six_task(&cfg, 9000 + i % 50, t_len)?;
                let log: Vec<DVector<f64>> = (0..t_len).map(|_| ball_sample(&mut rng, n, bounds.kappa_w)).collect();
                let ctx = SurrogateContext::new(&task.sys, &k, &log, consts.h)?;
                let mp = feasible_sample(&mut rng, &dom);
                let t = rng.random_range(1..=t_len as i64);
                let g = surrogate_grad(&ctx, &mp, task.costs[t as usize - 1].as_ref(), t)?.norm();
                worst = worst.max(g / consts.g_f);
            }
            passed &= worst <= 1.0;
            lines.push(format!("n={n} m={m} T={t_len}: max ‖∇g‖/G_f = {worst:.2e}"));
        }
        Ok((passed, lines.join("; ")))
    })();
    criterion(9, "gradient bound", start, outcome)
}

/// 10. Rerunning from stored suites reproduces the CSV byte for byte.
pub fn replay_check() -> Criterion {
    let start = Instant::now();
    let outcome = (|| {
        let cfg = ExperimentConfig { tasks: 4, seeds: vec![0, 1], ..ExperimentConfig::default() };
        let first = run_experiment(&cfg)?;
        let csv = results_csv(&first)?;
        let dir = std::env::temp_dir().join(format!("metaoc-replay-check-{}-{}", std::process::id(), start.elapsed().as_nanos()));
        write_suites(&dir, &first.suites)?;
        let loaded = load_suites(&dir, &cfg);
        let _ = std::fs::remove_dir_all(&dir);
        let again = results_csv(&run_suites(&cfg, loaded?)?)?;
        Ok((csv == again && !csv.is_empty(), format!("{} CSV bytes, identical: {}", csv.len(), csv == again)))
    })();
    criterion(10, "replay determinism", start, outcome)
}

/// Runs an experiment and times it.
pub fn timed_experiment(cfg: &ExperimentConfig) -> (Result<ExperimentReport>, f64) {
    let start = Instant::now();
    let report = run_experiment(cfg);
    (report, start.elapsed().as_secs_f64())
}

fn experiment_failed(id: u8, title: &'static str, e: &crate::error::Error, seconds: f64) -> Criterion {
    Criterion { id, title, passed: false, detail: format!("experiment failed: {e}"), seconds }
}

/// Every criterion in order.
pub fn run_all() -> Vec<Criterion> {
    let mut out = vec![gradient_check(), projection_check(), hindsight_check()];
    let (over_tasks, s2) = timed_experiment(&tasks_config());
    let (over_horizons, s3) = timed_experiment(&horizons_config());
    out.push(match &over_tasks {
        Ok(r) => tasks_trend(r, s2),
        Err(e) => experiment_failed(4, "meta-regret over tasks", e, s2),
    });
    out.push(match &over_horizons {
        Ok(r) => horizons_trend(r, s3),
        Err(e) => experiment_failed(5, "meta-regret over horizon", e, s3),
    });
    let reports: Vec<&ExperimentReport> = [&over_tasks, &over_horizons].into_iter().filter_map(|r| r.as_ref().ok()).collect();
    out.push(doubling_law(&reports));
    out.push(residual_decay());
    out.push(task_bound_check(&reports));
    out.push(gradient_bound_check());
    out.push(replay_check());
    out
}
