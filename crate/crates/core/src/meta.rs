//! Cross-task learning: hindsight-optimal parameters, the meta-initialization
//! update, the M-OC-1 and M-OC-2 loops, and the constants that set step sizes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bench::{comparator_cost, ComparatorChoice};
use crate::dac::{DacDomain, DacParams};
use crate::error::{dims, Error, Result};
use crate::lds::{synthesize_stabilizer, SystemBounds};
use crate::oc::{default_step_size, run_oc, OcConfig, TaskRecord, TaskSpec};
use crate::surrogate::{affine_map, AffineMap, StageCost, SurrogateContext};

/// Iteration budget of the hindsight solver.
pub const HINDSIGHT_MAX_ITER: usize = 5000;
/// Gradient-mapping tolerance of the hindsight solver.
pub const HINDSIGHT_TOL: f64 = 1e-6;

/// Step-size and regret-bound constants for one `(bounds, H, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsBundle {
    pub d_tilde: f64,
    pub g_f: f64,
    pub l: f64,
    /// `κ_B·κ³·√d / γ`
    pub d_worst_case: f64,
    /// Diameter of the parameter domain.
    pub d_domain: f64,
    /// `√(G_f·(G_f/2 + L·H²))`
    pub g_tilde: f64,
    /// `G_f·(G_f/2 + L·H²)`
    pub g_tilde_sq: f64,
    pub d: usize,
    pub h: usize,
    pub bounds: SystemBounds,
}

pub fn compute_constants(bounds: &SystemBounds, h: usize, d: usize) -> Result<ConstantsBundle> {
    bounds.validate()?;
    if h == 0 || d == 0 {
        return Err(Error::InvalidConfiguration(format!("H and d must be ≥ 1, got H = {h}, d = {d}")));
    }
    let SystemBounds { kappa, kappa_b, kappa_w, gamma, g, .. } = *bounds;
    let hf = h as f64;
    let k3 = kappa.powi(3);
    let denom = 1.0 - kappa * kappa * (1.0 - gamma).powi(h as i32 + 1);
    if denom <= 0.0 {
        return Err(Error::InvalidConfiguration(format!(
            "1 − κ²(1−γ)^(H+1) = {denom} ≤ 0; increase H or γ"
        )));
    }
    let d_tilde = kappa_w * (kappa * kappa + hf * kappa_b * kappa_b * kappa.powi(5)) / (gamma * denom)
        + kappa_b * k3 * kappa_w / gamma;
    let l = 2.0 * g * d_tilde * kappa_w * kappa_b * k3;
    let g_f = g * d_tilde * kappa_w * hf * d as f64 * (2.0 * kappa_b * k3 / gamma + hf);
    let g_tilde_sq = g_f * (g_f / 2.0 + l * hf * hf);
    let d_domain = DacDomain::new(h, 1, 1, kappa, kappa_b, gamma)?.diameter();
    Ok(ConstantsBundle {
        d_tilde,
        g_f,
        l,
        d_worst_case: kappa_b * k3 * (d as f64).sqrt() / gamma,
        d_domain,
        g_tilde: g_tilde_sq.sqrt(),
        g_tilde_sq,
        d,
        h,
        bounds: *bounds,
    })
}

impl ConstantsBundle {
    /// One-sided policy-regret bound
    /// `‖M* − M_init‖²/(2η) + T·G_f²·η/2 + η·L·H²·G_f·T`.
    pub fn regret_bound(&self, init_gap: f64, eta: f64, t: usize) -> f64 {
        let tf = t as f64;
        let h2 = (self.h * self.h) as f64;
        init_gap * init_gap / (2.0 * eta) + tf * self.g_f * self.g_f * eta / 2.0 + eta * self.l * h2 * self.g_f * tf
    }
}

/// Result of minimizing `F(M) = Σ_t g_t(M)` over the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct HindsightSolution {
    pub params: DacParams,
    pub objective: f64,
    /// `‖M − Π(M − δ∇F(M))‖/δ` at the returned point.
    pub stationarity: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `F = θᵀPθ + 2bᵀθ + c`.
struct QuadraticForm {
    p: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

/// `F(θ) = Σ_t c_t(s_t(θ), a_t(θ))` with its gradient, from precomputed affine maps.
struct HindsightObjective<'a> {
    maps: Vec<AffineMap>,
    costs: &'a [Arc<dyn StageCost>],
    /// Present when every cost is quadratic.
    quad: Option<QuadraticForm>,
}

impl<'a> HindsightObjective<'a> {
    fn new(ctx: &SurrogateContext<'_>, costs: &'a [Arc<dyn StageCost>]) -> Result<Self> {
        let maps = (1..=costs.len() as i64).map(|t| affine_map(ctx, t)).collect::<Result<Vec<_>>>()?;
        let p_dim = ctx.h() * ctx.sys().m() * ctx.sys().n();
        let mut quad = Some(QuadraticForm { p: DMatrix::zeros(p_dim, p_dim), b: DVector::zeros(p_dim), c: 0.0 });
        for (map, cost) in maps.iter().zip(costs) {
            let (Some(q), Some(form)) = (cost.as_quadratic(), quad.as_mut()) else {
                quad = None;
                break;
            };
            let qs = (q.q() + q.q().transpose()) * 0.5;
            let rs = (q.r() + q.r().transpose()) * 0.5;
            let x0 = q.state_offset(&map.s0);
            let qj = &qs * &map.js;
            let rj = &rs * &map.ja;
            form.p += map.js.tr_mul(&qj) + map.ja.tr_mul(&rj);
            form.b += qj.tr_mul(&x0) + rj.tr_mul(&map.a0);
            form.c += x0.dot(&(&qs * &x0)) + map.a0.dot(&(&rs * &map.a0));
        }
        if let Some(form) = quad.as_mut() {
            form.p = (&form.p + form.p.transpose()) * 0.5;
        }
        Ok(Self { maps, costs, quad })
    }

    /// Sum of the stage costs along the affine maps.
    fn exact_value(&self, theta: &DVector<f64>) -> f64 {
        self.maps
            .iter()
            .zip(self.costs)
            .map(|(map, c)| c.value(&map.state(theta), &map.action(theta)))
            .sum()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        match &self.quad {
            Some(f) => theta.dot(&(&f.p * theta)) + 2.0 * f.b.dot(theta) + f.c,
            None => self.exact_value(theta),
        }
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        if let Some(f) = &self.quad {
            return (&f.p * theta + &f.b) * 2.0;
        }
        let mut grad = DVector::zeros(theta.len());
        for (map, c) in self.maps.iter().zip(self.costs) {
            let (gx, gu) = c.gradient(&map.state(theta), &map.action(theta));
            grad.gemv_tr(1.0, &map.js, &gx, 1.0);
            grad.gemv_tr(1.0, &map.ja, &gu, 1.0);
        }
        grad
    }
}

fn project_vec(dom: &DacDomain, v: &DVector<f64>) -> DVector<f64> {
    let mut out = v.clone();
    dom.project_flat(out.as_mut_slice());
    out
}

fn gradient_mapping(obj: &HindsightObjective<'_>, dom: &DacDomain, theta: &DVector<f64>, delta: f64) -> f64 {
    let moved = theta - obj.gradient(theta) * delta;
    (theta - project_vec(dom, &moved)).norm() / delta
}

/// Log-barrier path following for `min θᵀPθ + 2bᵀθ` over the product of balls
/// `‖θ_k‖ ≤ r_k`, started from the origin. Returns a strictly feasible point and the
/// number of Newton steps, and whether the last centering converged (then the
/// objective is within `H/τ_max = 1e-11` of optimal).
/// Newton decrement `λ²` below which a barrier iterate counts as centered.
const CENTERED: f64 = 1e-2;

fn barrier_solve(form: &QuadraticForm, dom: &DacDomain) -> (DVector<f64>, usize, bool) {
    let size = dom.m() * dom.n();
    let radii = dom.radii();
    let h = radii.len();
    let dim = size * h;
    let slack = |theta: &DVector<f64>| -> Option<Vec<f64>> {
        let s: Vec<f64> = (0..h)
            .map(|k| radii[k] * radii[k] - theta.rows(k * size, size).norm_squared())
            .collect();
        s.iter().all(|&v| v > 0.0).then_some(s)
    };
    // ψ(θ + αd) − ψ(θ) for ψ = τF − Σ ln s_k, formed from increments so it stays
    // accurate when τF is large
    let merit_change = |theta: &DVector<f64>, s: &[f64], dir: &DVector<f64>, alpha: f64, tau: f64| -> Option<f64> {
        let pd = &form.p * dir;
        let df = alpha * (2.0 * (theta.dot(&pd) + form.b.dot(dir)) + alpha * dir.dot(&pd));
        let mut barrier = 0.0;
        for k in 0..h {
            let (tk, dk) = (theta.rows(k * size, size), dir.rows(k * size, size));
            let shrink = (2.0 * alpha * tk.dot(&dk) + alpha * alpha * dk.norm_squared()) / s[k];
            if !(shrink < 1.0) {
                return None;
            }
            barrier -= (-shrink).ln_1p();
        }
        Some(tau * df + barrier)
    };

    let mut theta = DVector::zeros(dim);
    let mut steps = 0;
    let mut tau = 1.0;
    let tau_max = 1e11 * h as f64;
    loop {
        let mut decrement = f64::INFINITY;
        for _ in 0..100 {
            let s = slack(&theta).expect("iterates stay interior");
            let mut grad = (&form.p * &theta + &form.b) * (2.0 * tau);
            let mut hess = &form.p * (2.0 * tau);
            for k in 0..h {
                let blk = theta.rows(k * size, size).into_owned();
                let sk = s[k];
                let mut g = grad.rows_mut(k * size, size);
                g += &blk * (2.0 / sk);
                let mut hk = hess.view_mut((k * size, k * size), (size, size));
                hk += DMatrix::identity(size, size) * (2.0 / sk) + &blk * blk.transpose() * (4.0 / (sk * sk));
            }
            let jitter = 1e-14 * hess.diagonal().amax();
            let Some(chol) = hess.clone().cholesky().or_else(|| {
                let mut shifted = hess;
                shifted.set_diagonal(&shifted.diagonal().add_scalar(jitter));
                shifted.cholesky()
            }) else {
                break;
            };
            let dir = -chol.solve(&grad);
            let previous = decrement;
            decrement = -grad.dot(&dir);
            // at large τ the Newton system is ill-conditioned and λ² stalls near its
            // rounding floor instead of converging quadratically
            if !(decrement > 1e-12) || (decrement < CENTERED && decrement > 0.5 * previous) {
                break;
            }
            steps += 1;
            // self-concordance: inside λ < 1/4 the full step stays feasible and converges
            // quadratically, and merit comparisons there are below rounding at large τ
            if decrement < 0.0625 {
                let cand = &theta + &dir;
                if slack(&cand).is_some() {
                    theta = cand;
                    continue;
                }
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let fits = merit_change(&theta, &s, &dir, alpha, tau).is_some_and(|v| v <= -0.25 * alpha * decrement);
                let cand = &theta + &dir * alpha;
                if fits && slack(&cand).is_some() {
                    theta = cand;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if tau >= tau_max {
            // F − F* ≤ (H + λ·√H)/τ on the central path neighborhood
            return (theta, steps, decrement <= CENTERED);
        }
        tau = (tau * 20.0).min(tau_max);
    }
}

/// Minimizes `Σ_t g_t(M)` over the domain for the costs `c_1, …, c_T`.
///
/// Quadratic costs go through a log-barrier Newton solve; the result (or, for other
/// costs, the zero parameter) seeds accelerated projected gradient with adaptive
/// restart until the gradient mapping drops below [`HINDSIGHT_TOL`]. A flat objective
/// returns the zero parameter.
pub fn hindsight_optimum(
    ctx: &SurrogateContext<'_>,
    costs: &[Arc<dyn StageCost>],
    dom: &DacDomain,
) -> Result<HindsightSolution> {
    let (h, m, n) = (ctx.h(), ctx.sys().m(), ctx.sys().n());
    if dom.h() != h || dom.m() != m || dom.n() != n {
        return Err(dims("hindsight domain", format!("{h}×({m}×{n})"), format!("{}×({}×{})", dom.h(), dom.m(), dom.n())));
    }
    if costs.is_empty() {
        return Err(Error::InvalidArgument("hindsight objective needs at least one cost".into()));
    }
    let obj = HindsightObjective::new(ctx, costs)?;
    let p_dim = h * m * n;
    let finish = |theta: DVector<f64>, stationarity: f64, iterations: usize, converged: bool| {
        let objective = obj.exact_value(&theta);
        Ok(HindsightSolution {
            params: DacParams::from_flat(h, m, n, theta.as_slice())?,
            objective,
            stationarity,
            iterations,
            converged,
        })
    };

    let mut lip = match &obj.quad {
        Some(f) => 2.0 * f.p.clone().symmetric_eigenvalues().max(),
        None => 1.0,
    };
    if !lip.is_finite() {
        return Err(Error::NumericFailure("non-finite hindsight curvature".into()));
    }
    if lip <= 0.0 {
        // F is constant
        return finish(DVector::zeros(p_dim), 0.0, 0, true);
    }

    let mut x = DVector::zeros(p_dim);
    let mut used = 0;
    let mut certified = false;
    if let Some(form) = &obj.quad {
        let (theta, steps, centered) = barrier_solve(form, dom);
        used = steps;
        certified = centered;
        x = project_vec(dom, &theta);
        let s = gradient_mapping(&obj, dom, &x, 1.0 / lip);
        if s <= HINDSIGHT_TOL {
            return finish(x, s, used, true);
        }
    }

    let quadratic = obj.quad.is_some();
    let mut y = x.clone();
    let mut fx = obj.value(&x);
    let mut momentum = 1.0f64;
    let mut last = f64::INFINITY;
    for iter in used + 1..=HINDSIGHT_MAX_ITER {
        let gy = obj.gradient(&y);
        let fy = obj.value(&y);
        // backtracking only for costs without a known curvature bound
        let next = loop {
            let cand = project_vec(dom, &(&y - &gy * (1.0 / lip)));
            if quadratic {
                break cand;
            }
            let d = &cand - &y;
            let model = fy + gy.dot(&d) + 0.5 * lip * d.norm_squared();
            if obj.value(&cand) <= model + 1e-12 * (1.0 + fy.abs()) {
                break cand;
            }
            lip *= 2.0;
        };
        let f_next = obj.value(&next);
        if f_next > fx {
            // adaptive restart
            momentum = 1.0;
            y = x.clone();
            continue;
        }
        let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        y = &next + (&next - &x) * ((momentum - 1.0) / m_next);
        momentum = m_next;
        x = next;
        fx = f_next;
        last = gradient_mapping(&obj, dom, &x, 1.0 / lip);
        if last <= HINDSIGHT_TOL {
            return finish(x, last, iter, true);
        }
    }
    if !last.is_finite() {
        last = gradient_mapping(&obj, dom, &x, 1.0 / lip);
    }
    if certified {
        // the barrier's duality gap already certifies the objective value
        return finish(x, last, HINDSIGHT_MAX_ITER, true);
    }
    log::warn!("hindsight solver stopped after {HINDSIGHT_MAX_ITER} iterations (stationarity {last:.3e})");
    finish(x, last, HINDSIGHT_MAX_ITER, false)
}

/// `∇_{M^m} ½‖M^m − M*‖² = M^m − M*`.
pub fn meta_loss_grad(m_meta: &DacParams, m_star: &DacParams) -> Result<DacParams> {
    m_meta.sub(m_star)
}

/// Meta-learner state between tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaState {
    pub m_meta: DacParams,
    /// Index of the next task, starting at 1.
    pub i: usize,
    pub sum_star: DacParams,
    pub d_i: f64,
    pub k: u32,
    pub epsilon: f64,
    pub zeta: f64,
}

impl MetaState {
    pub fn new(zero: DacParams, epsilon: f64, zeta: f64) -> Self {
        Self { sum_star: zero.clone(), m_meta: zero, i: 1, d_i: epsilon, k: 0, epsilon, zeta }
    }
}

/// `M^m_{i+1} = Π(M^m_i − (1/i)·(M^m_i − M*_i))`.
pub fn meta_update(state: &MetaState, m_star: &DacParams, dom: &DacDomain) -> Result<MetaState> {
    if state.i == 0 {
        return Err(Error::InvalidArgument("meta state index starts at 1".into()));
    }
    // M^m − (1/i)(M^m − M*) written as a convex combination, exact at i = 1
    let step = 1.0 / state.i as f64;
    let next = state.m_meta.scale(1.0 - step).axpy(step, m_star)?;
    let sum_star = state.sum_star.add(m_star)?;
    Ok(MetaState { m_meta: dom.project(&next)?, i: state.i + 1, sum_star, ..state.clone() })
}

/// Default `ζ = (1 + ln T)/ln T`.
pub fn default_zeta(t: usize) -> f64 {
    let lt = (t as f64).ln();
    (1.0 + lt) / lt
}

/// Per-task outcome of any method.
#[derive(Debug, Clone)]
pub struct TaskOutcome {
    /// 1-based task index.
    pub index: usize,
    pub record: TaskRecord,
    pub hindsight: HindsightSolution,
    /// `Σc_t − Σg_t(M*)`
    pub regret: f64,
    pub eta: f64,
    /// Scale that set `η` (zero when the method does not learn).
    pub d_scale: f64,
    /// `‖M* − M_init‖`
    pub init_gap: f64,
    /// `Σc_t − Σf_t`
    pub residual: f64,
    /// `Σf_t − F*`
    pub policy_regret: f64,
    /// `Σg_t(M_t) − F*`
    pub surrogate_regret: f64,
    /// Per-task regret bound evaluated at this task's `η` and `M_init`; infinite when `η = 0`.
    pub regret_bound: f64,
}

/// Synthesizes the task's stabilizer and the matching domain.
pub(crate) fn task_setup(task: &TaskSpec, index: usize, consts: &ConstantsBundle) -> Result<(DMatrix<f64>, DacDomain)> {
    let wrap = |e: Error| Error::TaskFailed { index, source: Box::new(e) };
    let cert = synthesize_stabilizer(&task.sys, &consts.bounds).map_err(wrap)?;
    let domain = DacDomain::from_bounds(consts.h, task.sys.m(), task.sys.n(), &consts.bounds).map_err(wrap)?;
    Ok((cert.k, domain))
}

/// Runs one task from `m_init` with step `eta` and evaluates everything the reports need.
pub(crate) fn run_task(
    task: &TaskSpec,
    index: usize,
    consts: &ConstantsBundle,
    k: DMatrix<f64>,
    domain: DacDomain,
    m_init: DacParams,
    eta: f64,
    d_scale: f64,
) -> Result<TaskOutcome> {
    let wrap = |e: Error| Error::TaskFailed { index, source: Box::new(e) };
    let cfg = OcConfig { eta, h: consts.h, domain, m_init, k };
    let mut record = run_oc(task, &cfg).map_err(wrap)?;
    let ctx = record.context(&task.sys).map_err(wrap)?;
    let hindsight = hindsight_optimum(&ctx, &task.costs, &cfg.domain).map_err(wrap)?;
    let comparator = comparator_cost(&ctx, &task.costs, &hindsight.params).map_err(wrap)?;
    drop(ctx);
    record.hindsight = Some(hindsight.params.clone());
    let init_gap = hindsight.params.distance(&cfg.m_init)?;
    let t_len = task.horizon();
    let regret_bound = if eta > 0.0 { consts.regret_bound(init_gap, eta, t_len) } else { f64::INFINITY };
    Ok(TaskOutcome {
        index,
        regret: record.total_cost() - comparator,
        residual: record.approximation_residual(),
        policy_regret: record.total_ideal() - comparator,
        surrogate_regret: record.total_surrogate() - comparator,
        eta,
        d_scale,
        init_gap,
        regret_bound,
        hindsight,
        record,
    })
}

/// Everything a method reports over a task sequence.
#[derive(Debug, Clone)]
pub struct MetaReport {
    pub outcomes: Vec<TaskOutcome>,
    pub meta_regret: f64,
    /// RMS deviation of the hindsight optima about their mean.
    pub d_bar: f64,
    pub d_star_pairwise: f64,
    pub d_star_enclosing: f64,
    /// `D_i` per task (M-OC-2); the fixed step scale otherwise.
    pub d_trace: Vec<f64>,
    /// Increment count of the M-OC-2 schedule.
    pub increments: u32,
    pub comparator: ComparatorChoice,
}

impl MetaReport {
    pub fn from_outcomes(outcomes: Vec<TaskOutcome>, increments: u32) -> Result<Self> {
        let regrets: Vec<f64> = outcomes.iter().map(|o| o.regret).collect();
        let meta_regret = crate::bench::meta_regret(&regrets)?;
        let stars: Vec<DacParams> = outcomes.iter().map(|o| o.hindsight.params.clone()).collect();
        let d_trace = outcomes.iter().map(|o| o.d_scale).collect();
        Ok(Self {
            meta_regret,
            d_bar: deviation_rms(&stars)?,
            d_star_pairwise: max_pairwise_distance(&stars)?,
            d_star_enclosing: enclosing_ball_diameter(&stars)?,
            d_trace,
            increments,
            outcomes,
            comparator: ComparatorChoice::HindsightDac,
        })
    }

    /// Re-scores every task against `choice`; the hindsight optima and the bound
    /// quantities are unchanged.
    pub fn with_comparator(mut self, tasks: &[TaskSpec], choice: ComparatorChoice, kappa: f64) -> Result<Self> {
        if choice == self.comparator {
            return Ok(self);
        }
        if tasks.len() != self.outcomes.len() {
            return Err(dims("comparator tasks", self.outcomes.len(), tasks.len()));
        }
        for (o, task) in self.outcomes.iter_mut().zip(tasks) {
            o.regret = crate::bench::task_regret(&o.record, task, choice, kappa)?;
        }
        self.meta_regret = crate::bench::meta_regret(&self.regrets())?;
        self.comparator = choice;
        Ok(self)
    }

    pub fn regrets(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.regret).collect()
    }

    pub fn m_stars(&self) -> Vec<&DacParams> {
        self.outcomes.iter().map(|o| &o.hindsight.params).collect()
    }

    /// `M_init` of every task.
    pub fn m_inits(&self) -> Vec<&DacParams> {
        self.outcomes.iter().map(|o| o.record.m_init()).collect()
    }

    /// Running meta-regret `(1/i)·Σ_{j≤i} R^j_T`.
    pub fn cumulative_meta_regret(&self) -> Vec<f64> {
        let mut sum = 0.0;
        self.outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| {
                sum += o.regret;
                sum / (i + 1) as f64
            })
            .collect()
    }
}

/// `D̄ = √((1/N)·Σ‖M*_i − M̃*‖²)`.
pub fn deviation_rms(points: &[DacParams]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no points".into()));
    }
    let mean = DacParams::mean(points)?;
    let mut acc = 0.0;
    for p in points {
        acc += p.sub(&mean)?.norm_squared();
    }
    Ok((acc / points.len() as f64).sqrt())
}

pub fn max_pairwise_distance(points: &[DacParams]) -> Result<f64> {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(a.distance(b)?);
        }
    }
    Ok(best)
}

/// Diameter of Ritter's approximate smallest enclosing ball.
pub fn enclosing_ball_diameter(points: &[DacParams]) -> Result<f64> {
    let Some(first) = points.first() else {
        return Ok(0.0);
    };
    let flat: Vec<DVector<f64>> = points.iter().map(|p| DVector::from_vec(p.to_flat())).collect();
    if flat.iter().any(|v| v.len() != flat[0].len()) {
        return Err(dims("enclosing ball points", first.len(), "mixed lengths"));
    }
    let farthest = |from: &DVector<f64>| {
        flat.iter()
            .max_by(|a, b| (*a - from).norm().total_cmp(&(*b - from).norm()))
            .expect("non-empty")
            .clone()
    };
    let p1 = farthest(&flat[0]);
    let p2 = farthest(&p1);
    let mut center = (&p1 + &p2) * 0.5;
    let mut radius = (&p1 - &p2).norm() / 2.0;
    for p in &flat {
        let d = (p - &center).norm();
        if d > radius {
            let new_radius = (radius + d) / 2.0;
            center += (p - &center) * ((new_radius - radius) / d);
            radius = new_radius;
        }
    }
    Ok(2.0 * radius)
}

fn check_tasks(tasks: &[TaskSpec]) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("task list is empty".into()));
    }
    Ok(())
}

/// M-OC-1: fixed step scale `D*`, meta-initialization by the projected running mean.
pub fn run_moc1(tasks: &[TaskSpec], d_star: f64, consts: &ConstantsBundle) -> Result<MetaReport> {
    check_tasks(tasks)?;
    if !(d_star.is_finite() && d_star > 0.0) {
        return Err(Error::InvalidArgument(format!("D* must be positive, got {d_star}")));
    }
    let mut state: Option<MetaState> = None;
    let mut outcomes = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        let index = i + 1;
        let (k, domain) = task_setup(task, index, consts)?;
        let st = state.get_or_insert_with(|| MetaState::new(domain.zero(), d_star, 1.0));
        let eta = default_step_size(d_star, consts, task.horizon())?;
        let outcome = run_task(task, index, consts, k, domain.clone(), st.m_meta.clone(), eta, d_star)?;
        *st = meta_update(st, &outcome.hindsight.params, &domain)?;
        outcomes.push(outcome);
    }
    MetaReport::from_outcomes(outcomes, 0)
}

/// M-OC-2: the step scale `D_i = ζ^k·ε` grows whenever a hindsight optimum lands farther
/// than `D_i` from its initialization.
pub fn run_moc2(tasks: &[TaskSpec], epsilon: f64, zeta: f64, consts: &ConstantsBundle) -> Result<MetaReport> {
    check_tasks(tasks)?;
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {epsilon}")));
    }
    if !(zeta.is_finite() && zeta > 1.0) {
        return Err(Error::InvalidArgument(format!("ζ must exceed 1, got {zeta}")));
    }
    let mut state: Option<MetaState> = None;
    let mut outcomes = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        let index = i + 1;
        let (k, domain) = task_setup(task, index, consts)?;
        let st = state.get_or_insert_with(|| MetaState::new(domain.zero(), epsilon, zeta));
        let eta = default_step_size(st.d_i, consts, task.horizon())?;
        let outcome = run_task(task, index, consts, k, domain.clone(), st.m_meta.clone(), eta, st.d_i)?;
        let m_star = &outcome.hindsight.params;
        let triggered = index > 1 && m_star.distance(&st.m_meta)? > st.d_i;
        let mut next = meta_update(st, m_star, &domain)?;
        // the running mean itself; the projected step above agrees up to rounding
        next.m_meta = next.sum_star.scale(1.0 / index as f64);
        if triggered {
            next.k += 1;
        }
        next.d_i = next.epsilon * next.zeta.powi(next.k as i32);
        *st = next;
        outcomes.push(outcome);
    }
    let increments = state.map_or(0, |s| s.k);
    MetaReport::from_outcomes(outcomes, increments)
}

/// Meta-regret bound for M-OC-1 at constant `η`:
/// `D²(1 + ln N)/(2Nη) + D̄²/(2η) + T·G_f²·η/2 + η·L·H²·G_f·T + mean R_{T,1}`,
/// where `D` is the domain diameter bounding the meta-loss gradients.
pub fn moc1_regret_bound(report: &MetaReport, consts: &ConstantsBundle) -> Result<f64> {
    let n = report.outcomes.len();
    let first = report.outcomes.first().ok_or_else(|| Error::InvalidArgument("empty report".into()))?;
    let eta = first.eta;
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument("bound needs a positive step size".into()));
    }
    let t_len = first.record.horizon();
    let nf = n as f64;
    let mean_residual = report.outcomes.iter().map(|o| o.residual).sum::<f64>() / nf;
    let d = consts.d_domain;
    let meta_term = d * d * (1.0 + nf.ln()) / (2.0 * nf * eta);
    let spread = report.d_bar * report.d_bar / (2.0 * eta);
    let inner = consts.regret_bound(0.0, eta, t_len);
    Ok(meta_term + spread + inner + mean_residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lds::{DisturbanceKind, DisturbanceSource, SystemMatrices};
    use crate::surrogate::QuadraticCost;

    #[test]
    fn constants_hand_example() {
        let b = SystemBounds { kappa: 1.0, kappa_b: 1.0, kappa_w: 1.0, g: 1.0, gamma: 0.5, ..SystemBounds::default() };
        let c = compute_constants(&b, 1, 1).unwrap();
        assert!((c.d_tilde - (2.0 / 0.375 + 2.0)).abs() < 1e-12);
        assert!((c.l - 2.0 * c.d_tilde).abs() < 1e-12);
        assert!((c.g_f - c.d_tilde * (4.0 + 1.0)).abs() < 1e-12);
        assert_eq!(c.g_tilde_sq, c.g_f * (c.g_f / 2.0 + c.l));
        assert_eq!(c.g_tilde, c.g_tilde_sq.sqrt());
        assert!((c.d_worst_case - 2.0).abs() < 1e-15);
        assert!((c.d_domain - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constants_scale_with_kappa_w() {
        let b = SystemBounds::default();
        let c1 = compute_constants(&b, 3, 2).unwrap();
        let c2 = compute_constants(&SystemBounds { kappa_w: 3.0, ..b }, 3, 2).unwrap();
        assert!((c2.d_tilde - 3.0 * c1.d_tilde).abs() < 1e-12 * c2.d_tilde);
    }

    #[test]
    fn constants_reject_nonpositive_denominator() {
        let b = SystemBounds { kappa: 3.0, gamma: 0.1, ..SystemBounds::default() };
        assert!(matches!(compute_constants(&b, 1, 2), Err(Error::InvalidConfiguration(_))));
    }

    #[test]
    fn meta_loss_gradient_cases() {
        let a = DacParams::from_flat(2, 1, 2, &[0.1, -0.2, 0.3, 0.05]).unwrap();
        let z = DacParams::zeros(2, 1, 2);
        assert_eq!(meta_loss_grad(&a, &a).unwrap().norm(), 0.0);
        assert_eq!(meta_loss_grad(&z, &a).unwrap(), a.scale(-1.0));
        // central differences of ½‖M^m − M*‖²
        let m = DacParams::from_flat(2, 1, 2, &[0.4, 0.0, -0.1, 0.2]).unwrap();
        let g = meta_loss_grad(&m, &a).unwrap().to_flat();
        let f = |v: &[f64]| 0.5 * DacParams::from_flat(2, 1, 2, v).unwrap().distance(&a).unwrap().powi(2);
        let base = m.to_flat();
        for i in 0..4 {
            let (mut up, mut dn) = (base.clone(), base.clone());
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            assert!(((f(&up) - f(&dn)) / 2e-6 - g[i]).abs() < 1e-8);
        }
        assert!(meta_loss_grad(&a, &DacParams::zeros(1, 1, 2)).is_err());
    }

    #[test]
    fn meta_update_is_running_mean() {
        let dom = DacDomain::new(2, 1, 2, 2f64.sqrt(), 1.0, 0.5).unwrap();
        let stars: Vec<DacParams> = (0..7)
            .map(|i| DacParams::from_flat(2, 1, 2, &[0.1 * i as f64, -0.05, 0.02 * i as f64, 0.1]).unwrap())
            .collect();
        let mut st = MetaState::new(DacParams::from_flat(2, 1, 2, &[0.3, 0.3, 0.0, 0.0]).unwrap(), 1.0, 2.0);
        for (i, s) in stars.iter().enumerate() {
            st = meta_update(&st, s, &dom).unwrap();
            if i == 0 {
                assert_eq!(st.m_meta, dom.project(s).unwrap());
            }
            let mean = DacParams::mean(&stars[..=i]).unwrap();
            assert!(st.m_meta.distance(&mean).unwrap() < 1e-15);
        }
    }

    #[test]
    fn enclosing_ball_and_spread_statistics() {
        let pts: Vec<DacParams> = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
            .iter()
            .map(|v| DacParams::from_flat(1, 1, 2, v).unwrap())
            .collect();
        assert!((max_pairwise_distance(&pts).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let seb = enclosing_ball_diameter(&pts).unwrap();
        assert!(seb >= 2f64.sqrt() - 1e-12 && seb <= 2.0 * 2f64.sqrt());
        assert!((deviation_rms(&pts).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let same = vec![pts[1].clone(); 3];
        assert_eq!(deviation_rms(&same).unwrap(), 0.0);
        assert_eq!(enclosing_ball_diameter(&same).unwrap(), 0.0);
    }

    fn scalar_ctx_costs(cost: QuadraticCost, t_len: usize, w: f64) -> (SystemMatrices, DMatrix<f64>, Vec<DVector<f64>>, Vec<Arc<dyn StageCost>>) {
        let sys = SystemMatrices::new(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let k = DMatrix::zeros(1, 1);
        let log = vec![DVector::from_element(1, w); t_len];
        let costs: Vec<Arc<dyn StageCost>> = vec![Arc::new(cost); t_len];
        (sys, k, log, costs)
    }

    #[test]
    fn hindsight_flat_objective_returns_zero() {
        let (sys, k, _, costs) = scalar_ctx_costs(QuadraticCost::diagonal(&[1.0], &[1.0]).unwrap(), 10, 0.0);
        let log = vec![DVector::zeros(1); 10];
        let ctx = SurrogateContext::new(&sys, &k, &log, 1).unwrap();
        let dom = DacDomain::new(1, 1, 1, 1.0, 1.0, 0.5).unwrap();
        let sol = hindsight_optimum(&ctx, &costs, &dom).unwrap();
        assert_eq!(sol.params.norm(), 0.0);
        assert!(sol.converged);
    }

    #[test]
    fn hindsight_scalar_quadratic_is_zero() {
        let (sys, k, log, costs) = scalar_ctx_costs(QuadraticCost::diagonal(&[1.0], &[1.0]).unwrap(), 20, 0.5);
        let ctx = SurrogateContext::new(&sys, &k, &log, 1).unwrap();
        let dom = DacDomain::new(1, 1, 1, 1.0, 1.0, 0.5).unwrap();
        let sol = hindsight_optimum(&ctx, &costs, &dom).unwrap();
        // with s_t = M·w_{t−2} + w_{t−1} the optimum is −Σw_{t−2}w_{t−1}/Σ(w_{t−2}² + w_{t−1}²), near −½
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for t in 1..=20i64 {
            let a = if t >= 3 { 0.5 } else { 0.0 };
            let b = if t >= 2 { 0.5 } else { 0.0 };
            num += a * b;
            den += a * a + b * b;
        }
        let want = (-num / den).clamp(-0.5, 0.5);
        assert!((sol.params.to_flat()[0] - want).abs() < 1e-9);
        assert!(sol.converged && sol.stationarity <= HINDSIGHT_TOL);
    }

    #[test]
    fn hindsight_matches_grid_search_with_target() {
        let cost = QuadraticCost::diagonal(&[1.0], &[0.01])
            .unwrap()
            .with_state_target(DVector::from_element(1, 1.0))
            .unwrap();
        let (sys, k, log, costs) = scalar_ctx_costs(cost, 25, 0.5);
        let ctx = SurrogateContext::new(&sys, &k, &log, 1).unwrap();
        let dom = DacDomain::new(1, 1, 1, 1.0, 1.0, 0.5).unwrap();
        let sol = hindsight_optimum(&ctx, &costs, &dom).unwrap();
        let r = dom.radius(1);
        let steps = (2.0 * r / 1e-4).round() as i64;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=steps {
            let mv = -r + i as f64 * 1e-4;
            let m = DacParams::from_flat(1, 1, 1, &[mv]).unwrap();
            let f: f64 = (1..=25).map(|t| crate::surrogate::surrogate_cost_g(&ctx, &m, costs[0].as_ref(), t).unwrap()).sum();
            if f < best.0 {
                best = (f, mv);
            }
        }
        assert!((sol.params.to_flat()[0] - best.1).abs() < 1e-3);
    }

    fn moc_tasks(n_tasks: usize, t_len: usize, identical: bool) -> Vec<TaskSpec> {
        (0..n_tasks)
            .map(|i| {
                let j = if identical { 0 } else { i };
                let a = DMatrix::from_row_slice(2, 2, &[0.25 + 0.01 * j as f64, 0.05, 0.02, 0.3 - 0.005 * j as f64]);
                let sys = SystemMatrices::new(a, DMatrix::from_column_slice(2, 1, &[0.5, 0.5])).unwrap();
                let costs: Vec<Arc<dyn StageCost>> =
                    vec![Arc::new(QuadraticCost::diagonal(&[0.5, 0.5], &[0.5]).unwrap()); t_len];
                let src = DisturbanceSource::new(DisturbanceKind::UniformBall, 1.0, 42 + j as u64, 2).unwrap();
                TaskSpec::new(sys, costs, src).unwrap()
            })
            .collect()
    }

    #[test]
    fn moc1_single_task_and_identical_tasks() {
        let consts = compute_constants(&SystemBounds::default(), 5, 2).unwrap();
        let one = run_moc1(&moc_tasks(1, 25, false), 0.5, &consts).unwrap();
        assert_eq!(one.meta_regret, one.outcomes[0].regret);

        let rep = run_moc1(&moc_tasks(4, 25, true), 0.5, &consts).unwrap();
        assert!(rep.d_bar < 1e-12, "{}", rep.d_bar);
        for o in &rep.outcomes[1..] {
            assert!(o.init_gap < 1e-12);
        }
        let mean: f64 = rep.regrets().iter().sum::<f64>() / 4.0;
        assert_eq!(rep.meta_regret, mean);
    }

    #[test]
    fn moc2_trace_law() {
        let consts = compute_constants(&SystemBounds::default(), 5, 2).unwrap();
        let rep = run_moc2(&moc_tasks(8, 25, false), 1e-3, 2.0, &consts).unwrap();
        assert_eq!(rep.d_trace[0], 1e-3);
        let mut k = 0;
        for w in rep.d_trace.windows(2) {
            let ratio = w[1] / w[0];
            assert!(ratio == 1.0 || ratio == 2.0, "ratio {ratio}");
            if ratio == 2.0 {
                k += 1;
            }
        }
        for (i, d) in rep.d_trace.iter().enumerate() {
            let ki = rep.d_trace[..=i].windows(2).filter(|w| w[1] > w[0]).count();
            assert_eq!(*d, 1e-3 * 2f64.powi(ki as i32));
        }
        assert!(k <= rep.increments);
        let d_emp = rep.outcomes.iter().map(|o| o.init_gap).fold(0.0, f64::max);
        assert!(rep.increments as f64 <= (d_emp / 1e-3).log(2.0).floor() + 1.0);

        // a huge ε never triggers
        let rep = run_moc2(&moc_tasks(5, 25, false), 100.0, 2.0, &consts).unwrap();
        assert_eq!(rep.increments, 0);
        assert!(rep.d_trace.iter().all(|&d| d == 100.0));
    }

    #[test]
    fn zeta_default() {
        let t = 25f64;
        assert_eq!(default_zeta(25), (1.0 + t.ln()) / t.ln());
    }
}
