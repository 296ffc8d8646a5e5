//! Baselines and regret accounting.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dac::{DacDomain, DacParams};
use crate::error::{Error, Result};
use crate::lds::step;
use crate::meta::{run_task, task_setup, ConstantsBundle, MetaReport};
use crate::oc::{default_step_size, run_oc, OcConfig, TaskRecord, TaskSpec, DIVERGENCE_LIMIT};
use crate::surrogate::{surrogate_cost_g, StageCost, SurrogateContext};

/// Points per gain entry of the grid comparator.
pub const GRID_POINTS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparatorChoice {
    /// Best fixed DAC parameter in hindsight, `Σ_t g_t(M*)`.
    #[default]
    HindsightDac,
    /// Best static gain `u = −K'x` on a grid over `[−κ, κ]^{m×n}`; only for `m·n ≤ 4`.
    GridLinearFeedback,
}

/// `Σ_t g_t(M)` over the costs.
pub fn comparator_cost(ctx: &SurrogateContext<'_>, costs: &[Arc<dyn StageCost>], m: &DacParams) -> Result<f64> {
    let mut total = 0.0;
    for (t, c) in costs.iter().enumerate() {
        total += surrogate_cost_g(ctx, m, c.as_ref(), t as i64 + 1)?;
    }
    Ok(total)
}

/// Cost of the static policy `u = −K'x` replayed on the recorded disturbances, or
/// `None` when it diverges.
fn static_gain_cost(task: &TaskSpec, record: &TaskRecord, gain: &DMatrix<f64>) -> Result<Option<f64>> {
    let mut x = DVector::zeros(task.sys.n());
    let mut total = 0.0;
    for (w, c) in record.disturbances.iter().zip(&task.costs) {
        let u = -(gain * &x);
        total += c.value(&x, &u);
        x = step(&task.sys, &x, &u, w)?;
        if !(x.norm() <= DIVERGENCE_LIMIT) {
            return Ok(None);
        }
    }
    Ok(Some(total))
}

/// Lowest replayed cost over the gain grid.
pub fn grid_linear_feedback_cost(task: &TaskSpec, record: &TaskRecord, kappa: f64) -> Result<f64> {
    let (m, n) = (task.sys.m(), task.sys.n());
    if m * n > 4 {
        return Err(Error::InvalidConfiguration(format!(
            "grid comparator needs m·n ≤ 4, got {m}·{n}"
        )));
    }
    let entries = m * n;
    let axis: Vec<f64> = (0..GRID_POINTS)
        .map(|i| -kappa + 2.0 * kappa * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let mut idx = vec![0usize; entries];
    let mut best = f64::INFINITY;
    loop {
        let gain = DMatrix::from_row_iterator(m, n, idx.iter().map(|&i| axis[i]));
        if let Some(cost) = static_gain_cost(task, record, &gain)? {
            best = best.min(cost);
        }
        let mut pos = 0;
        loop {
            if pos == entries {
                return Ok(best);
            }
            idx[pos] += 1;
            if idx[pos] < GRID_POINTS {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// `Σ_t c_t(x_t, u_t)` minus the comparator cost. The hindsight comparator needs
/// `record.hindsight`.
pub fn task_regret(record: &TaskRecord, task: &TaskSpec, comparator: ComparatorChoice, kappa: f64) -> Result<f64> {
    let comparator_total = match comparator {
        ComparatorChoice::HindsightDac => {
            let m_star = record
                .hindsight
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("record has no hindsight optimum".into()))?;
            let ctx = record.context(&task.sys)?;
            comparator_cost(&ctx, &task.costs, m_star)?
        }
        ComparatorChoice::GridLinearFeedback => grid_linear_feedback_cost(task, record, kappa)?,
    };
    Ok(record.total_cost() - comparator_total)
}

/// Arithmetic mean of task regrets.
pub fn meta_regret(regrets: &[f64]) -> Result<f64> {
    if regrets.is_empty() {
        return Err(Error::InvalidArgument("meta-regret of an empty list".into()));
    }
    Ok(regrets.iter().sum::<f64>() / regrets.len() as f64)
}

/// `u_t = −K·x_t` with no learning; the same rollout as [`run_oc`] with `η = 0`
/// from the zero parameter.
pub fn run_non_adaptive(task: &TaskSpec, k: &DMatrix<f64>, h: usize) -> Result<TaskRecord> {
    let domain = DacDomain::new(h, task.sys.m(), task.sys.n(), 1.0, 1.0, 0.5)?;
    let cfg = OcConfig { eta: 0.0, h, m_init: domain.zero(), domain, k: k.clone() };
    run_oc(task, &cfg)
}

/// Non-adaptive baseline over a task sequence.
pub fn run_non_adaptive_suite(tasks: &[TaskSpec], consts: &ConstantsBundle) -> Result<MetaReport> {
    let mut outcomes = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        let (k, domain) = task_setup(task, i + 1, consts)?;
        let zero = domain.zero();
        outcomes.push(run_task(task, i + 1, consts, k, domain, zero, 0.0, 0.0)?);
    }
    MetaReport::from_outcomes(outcomes, 0)
}

/// Independent online control: every task starts from zero with the step size set by
/// the full domain diameter.
pub fn independent_config(task: &TaskSpec, index: usize, consts: &ConstantsBundle) -> Result<OcConfig> {
    let (k, domain) = task_setup(task, index, consts)?;
    let eta = default_step_size(consts.d_domain, consts, task.horizon())?;
    Ok(OcConfig { eta, h: consts.h, m_init: domain.zero(), domain, k })
}

pub fn run_independent(tasks: &[TaskSpec], consts: &ConstantsBundle) -> Result<MetaReport> {
    let mut outcomes = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        let cfg = independent_config(task, i + 1, consts)?;
        outcomes.push(run_task(task, i + 1, consts, cfg.k, cfg.domain, cfg.m_init, cfg.eta, consts.d_domain)?);
    }
    MetaReport::from_outcomes(outcomes, 0)
}
