//! Single-task online control: roll out the DAC policy and update its parameters
//! by projected online gradient descent on the surrogate `g_t`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dac::{control_action, recover_disturbance, DacDomain, DacParams, DisturbanceHistory};
use crate::error::{dims, Error, Result};
use crate::lds::{step, DisturbanceSource, SystemMatrices};
use crate::meta::ConstantsBundle;
use crate::surrogate::{ideal_cost_f_with, surrogate_cost_g, surrogate_grad, StageCost, SurrogateContext};

/// State norm beyond which a rollout is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// One control task: system, per-step costs `c_1, …, c_T`, and disturbance process.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub sys: SystemMatrices,
    pub costs: Vec<Arc<dyn StageCost>>,
    pub disturbance: DisturbanceSource,
}

impl TaskSpec {
    pub fn new(sys: SystemMatrices, costs: Vec<Arc<dyn StageCost>>, disturbance: DisturbanceSource) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::InvalidArgument("a task needs at least one cost".into()));
        }
        if disturbance.dim != sys.n() {
            return Err(dims("disturbance dimension", sys.n(), disturbance.dim));
        }
        Ok(Self { sys, costs, disturbance })
    }

    /// Horizon `T`.
    pub fn horizon(&self) -> usize {
        self.costs.len()
    }

    pub fn seed(&self) -> u64 {
        self.disturbance.seed
    }
}

#[derive(Debug, Clone)]
pub struct OcConfig {
    pub eta: f64,
    pub h: usize,
    pub domain: DacDomain,
    pub m_init: DacParams,
    pub k: DMatrix<f64>,
}

impl OcConfig {
    pub fn validate(&self, sys: &SystemMatrices) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidArgument(format!("step size must be finite and ≥ 0, got {}", self.eta)));
        }
        if self.domain.h() != self.h || self.m_init.h() != self.h {
            return Err(dims("history length", self.h, format!("domain {}, M_init {}", self.domain.h(), self.m_init.h())));
        }
        if self.m_init.m() != sys.m() || self.m_init.n() != sys.n() {
            return Err(dims(
                "M_init block shape",
                format!("{}×{}", sys.m(), sys.n()),
                format!("{}×{}", self.m_init.m(), self.m_init.n()),
            ));
        }
        sys.check_gain(&self.k)?;
        if !self.domain.contains(&self.m_init, 1e-12) {
            return Err(Error::InvalidArgument("M_init lies outside the parameter domain".into()));
        }
        Ok(())
    }
}

/// Everything observed and computed during one rollout. Index `t` of the per-step
/// vectors holds time `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    /// `x_1, …, x_{T+1}`
    pub states: Vec<DVector<f64>>,
    /// `u_1, …, u_T`
    pub inputs: Vec<DVector<f64>>,
    /// Recovered `w_1, …, w_T`.
    pub disturbances: Vec<DVector<f64>>,
    /// `c_t(x_t, u_t)`
    pub costs: Vec<f64>,
    /// `g_t(M_t)`
    pub surrogate: Vec<f64>,
    /// `f_t(M_{t−H}, …, M_t)`
    pub ideal: Vec<f64>,
    /// `M_1, …, M_{T+1}`
    pub params: Vec<DacParams>,
    pub hindsight: Option<DacParams>,
    pub k: DMatrix<f64>,
    pub h: usize,
    pub eta: f64,
    pub seed: u64,
}

impl TaskRecord {
    pub fn horizon(&self) -> usize {
        self.costs.len()
    }

    /// `Σ_t c_t(x_t, u_t)`
    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    /// `Σ_t g_t(M_t)`
    pub fn total_surrogate(&self) -> f64 {
        self.surrogate.iter().sum()
    }

    /// `Σ_t f_t`
    pub fn total_ideal(&self) -> f64 {
        self.ideal.iter().sum()
    }

    /// Cost-approximation residual `R_{T,1} = Σc_t − Σf_t`.
    pub fn approximation_residual(&self) -> f64 {
        self.total_cost() - self.total_ideal()
    }

    pub fn m_init(&self) -> &DacParams {
        &self.params[0]
    }

    /// Surrogate context over this record's disturbance log.
    pub fn context<'a>(&'a self, sys: &'a SystemMatrices) -> Result<SurrogateContext<'a>> {
        SurrogateContext::new(sys, &self.k, &self.disturbances, self.h)
    }
}

/// Runs the online controller on `task`.
///
/// Each step plays `u_t = −K·x_t + Σ_k M_t^{[k]}·w_{t−k}`, observes `x_{t+1}`, recovers
/// `w_t`, and sets `M_{t+1} = Π(M_t − η·∇g_t(M_t))`.
pub fn run_oc(task: &TaskSpec, cfg: &OcConfig) -> Result<TaskRecord> {
    let sys = &task.sys;
    cfg.validate(sys)?;
    let t_len = task.horizon();
    let (n, h) = (sys.n(), cfg.h);

    let mut states = Vec::with_capacity(t_len + 1);
    let mut inputs = Vec::with_capacity(t_len);
    let mut log: Vec<DVector<f64>> = Vec::with_capacity(t_len);
    let mut costs = Vec::with_capacity(t_len);
    let mut surrogate = Vec::with_capacity(t_len);
    let mut ideal = Vec::with_capacity(t_len);
    let mut params = Vec::with_capacity(t_len + 1);

    let mut hist = DisturbanceHistory::new(h, n);
    let mut x = DVector::zeros(n);
    states.push(x.clone());
    params.push(cfg.m_init.clone());
    let noise = task.disturbance.emit_sequence(t_len);

    for t in 1..=t_len {
        let m_t = &params[t - 1];
        let cost = task.costs[t - 1].as_ref();
        let u = control_action(&cfg.k, m_t, &x, &hist)?;
        let x_next = step(sys, &x, &u, &noise[t - 1])?;
        let norm = x_next.norm();
        if !(norm <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { t, norm });
        }
        costs.push(cost.value(&x, &u));

        // g_t and f_t read the log up to w_{t−1}
        let (g, grad, f) = {
            let ctx = SurrogateContext::new(sys, &cfg.k, &log, h)?;
            let t = t as i64;
            let g = surrogate_cost_g(&ctx, m_t, cost, t)?;
            let grad = surrogate_grad(&ctx, m_t, cost, t)?;
            let f = ideal_cost_f_with(
                &ctx,
                |idx| &params[(t - h as i64 + idx as i64).max(1) as usize - 1],
                cost,
                t,
            );
            (g, grad, f)
        };
        surrogate.push(g);
        ideal.push(f);

        let w = recover_disturbance(sys, &x, &u, &x_next)?;
        hist.push(w.clone())?;
        log.push(w);

        let next = cfg.domain.project(&m_t.axpy(-cfg.eta, &grad)?)?;
        params.push(next);

        inputs.push(u);
        x = x_next;
        states.push(x.clone());
    }

    Ok(TaskRecord {
        states,
        inputs,
        disturbances: log,
        costs,
        surrogate,
        ideal,
        params,
        hindsight: None,
        k: cfg.k.clone(),
        h,
        eta: cfg.eta,
        seed: task.seed(),
    })
}

/// `η = D_scale / √(G_f·(G_f/2 + L·H²)·T) = D_scale / (G̃·√T)`.
pub fn default_step_size(d_scale: f64, consts: &ConstantsBundle, t: usize) -> Result<f64> {
    if !(d_scale.is_finite() && d_scale > 0.0) {
        return Err(Error::InvalidArgument(format!("step-size scale must be positive, got {d_scale}")));
    }
    if t < 2 {
        return Err(Error::InvalidArgument(format!("horizon must be ≥ 2, got {t}")));
    }
    if !(consts.g_tilde.is_finite() && consts.g_tilde > 0.0) {
        return Err(Error::InvalidArgument(format!("G̃ must be positive, got {}", consts.g_tilde)));
    }
    Ok(d_scale / (consts.g_tilde * (t as f64).sqrt()))
}
