//! Idealized state and action, the surrogate costs `f_t` and `g_t`, and their
//! gradients with respect to the DAC parameters.
//!
//! The idealized state `s_t` replays the last `H` steps from a zero state at
//! `t − H` under the logged disturbances; `a_t = −K·s_t + Σ_k M_t^{[k]}·w_{t−k}`.
//! Both are affine in the parameters, so `g_t(M) = c_t(s_t, a_t)` is convex
//! whenever `c_t` is.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::dac::{disturbance_feedforward, DacParams};
use crate::error::{dims, Error, Result};
use crate::lds::SystemMatrices;

/// Relative step of the central finite-difference fallback.
pub const FD_STEP: f64 = 1e-5;

/// A convex per-step cost `c_t(x, u)`.
pub trait StageCost: Send + Sync + fmt::Debug {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64;

    /// `(∇_x c, ∇_u c)`; central finite differences unless overridden.
    fn gradient(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        finite_difference_gradient(self, x, u)
    }

    fn as_quadratic(&self) -> Option<&QuadraticCost> {
        None
    }
}

/// Central differences of `cost` at `(x, u)` with step `FD_STEP·max(1, |v_i|)`.
pub fn finite_difference_gradient<C: StageCost + ?Sized>(
    cost: &C,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let mut gx = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = FD_STEP * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let up = cost.value(&xp, u);
        xp[i] = x[i] - h;
        let down = cost.value(&xp, u);
        xp[i] = x[i];
        gx[i] = (up - down) / (2.0 * h);
    }
    let mut gu = DVector::zeros(u.len());
    let mut uq = u.clone();
    for i in 0..u.len() {
        let h = FD_STEP * u[i].abs().max(1.0);
        uq[i] = u[i] + h;
        let up = cost.value(x, &uq);
        uq[i] = u[i] - h;
        let down = cost.value(x, &uq);
        uq[i] = u[i];
        gu[i] = (up - down) / (2.0 * h);
    }
    (gx, gu)
}

/// `(x − x_ref)ᵀ·Q·(x − x_ref) + uᵀ·R·u` with `Q, R` positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    x_ref: Option<DVector<f64>>,
}

impl QuadraticCost {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || !r.is_square() {
            return Err(Error::InvalidArgument("cost weights must be square".into()));
        }
        if q.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("cost weights must be finite".into()));
        }
        Ok(Self { q, r, x_ref: None })
    }

    pub fn diagonal(q: &[f64], r: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(q)),
            DMatrix::from_diagonal(&DVector::from_column_slice(r)),
        )
    }

    /// Tracks `x_ref` instead of the origin.
    pub fn with_state_target(mut self, x_ref: DVector<f64>) -> Result<Self> {
        if x_ref.len() != self.q.nrows() {
            return Err(dims("state target", self.q.nrows(), x_ref.len()));
        }
        self.x_ref = Some(x_ref);
        Ok(self)
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// `x − x_ref`, or `x` without a target.
    pub fn state_offset(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.x_ref {
            Some(target) => x - target,
            None => x.clone(),
        }
    }
}

impl StageCost for QuadraticCost {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let dx = self.state_offset(x);
        dx.dot(&(&self.q * &dx)) + u.dot(&(&self.r * u))
    }

    fn gradient(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let dx = self.state_offset(x);
        (&self.q * &dx + self.q.tr_mul(&dx), &self.r * u + self.r.tr_mul(u))
    }

    fn as_quadratic(&self) -> Option<&QuadraticCost> {
        Some(self)
    }
}

/// Everything the surrogate needs besides the parameters: gain, system, and the
/// recovered disturbance log `w_1, …, w_len` (entries at `t ≤ 0` read as zero).
#[derive(Debug, Clone)]
pub struct SurrogateContext<'a> {
    sys: &'a SystemMatrices,
    k: &'a DMatrix<f64>,
    log: &'a [DVector<f64>],
    h: usize,
    closed: DMatrix<f64>,
    zero: DVector<f64>,
}

impl<'a> SurrogateContext<'a> {
    pub fn new(sys: &'a SystemMatrices, k: &'a DMatrix<f64>, log: &'a [DVector<f64>], h: usize) -> Result<Self> {
        let closed = sys.closed_loop(k)?;
        if h == 0 {
            return Err(Error::InvalidArgument("history length H must be ≥ 1".into()));
        }
        if let Some(bad) = log.iter().find(|w| w.len() != sys.n()) {
            return Err(dims("disturbance log entry", sys.n(), bad.len()));
        }
        Ok(Self { sys, k, log, h, closed, zero: DVector::zeros(sys.n()) })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn sys(&self) -> &SystemMatrices {
        self.sys
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        self.k
    }

    /// Number of logged disturbances.
    pub fn logged(&self) -> usize {
        self.log.len()
    }

    /// Logged `w_t`; zero for `t ≤ 0`.
    pub fn w(&self, t: i64) -> &DVector<f64> {
        if t < 1 {
            &self.zero
        } else {
            &self.log[(t - 1) as usize]
        }
    }

    /// The surrogate at time `t` reads `w` up to `t − 1`.
    fn check_time(&self, t: i64) -> Result<()> {
        if t < 1 || t - 1 > self.log.len() as i64 {
            return Err(Error::InvalidArgument(format!(
                "time index {t} outside 1..={} for a log of {} disturbances",
                self.log.len() + 1,
                self.log.len()
            )));
        }
        Ok(())
    }

    fn check_params(&self, p: &DacParams) -> Result<()> {
        if p.h() != self.h || p.m() != self.sys.m() || p.n() != self.sys.n() {
            return Err(dims(
                "DAC parameters vs surrogate context",
                format!("{}×({}×{})", self.h, self.sys.m(), self.sys.n()),
                format!("{}×({}×{})", p.h(), p.m(), p.n()),
            ));
        }
        Ok(())
    }

    /// `s_t` with window entry `idx` (0 = `M_{t−H}`) given by `window(idx)`.
    fn state_with<'p>(&self, window: impl Fn(usize) -> &'p DacParams, t: i64) -> DVector<f64> {
        let h = self.h as i64;
        let mut x = DVector::zeros(self.sys.n());
        for idx in 0..self.h {
            let j = t - h + idx as i64;
            let ff = disturbance_feedforward(window(idx), |lag| self.w(j - lag as i64));
            // x_{j+1} = (A − BK)·x_j + B·ff + w_j
            let mut next = self.w(j).clone();
            next.gemv(1.0, &self.closed, &x, 1.0);
            next.gemv(1.0, self.sys.b(), &ff, 1.0);
            x = next;
        }
        x
    }

    fn action(&self, m_t: &DacParams, s_t: &DVector<f64>, t: i64) -> DVector<f64> {
        let mut a = disturbance_feedforward(m_t, |lag| self.w(t - lag as i64));
        a.gemv(-1.0, self.k, s_t, 1.0);
        a
    }
}

/// Idealized state `s_t` for the window `(M_{t−H}, …, M_{t−1})`.
pub fn ideal_state(ctx: &SurrogateContext<'_>, window: &[DacParams], t: i64) -> Result<DVector<f64>> {
    ctx.check_time(t)?;
    if window.len() != ctx.h {
        return Err(dims("parameter window", ctx.h, window.len()));
    }
    for p in window {
        ctx.check_params(p)?;
    }
    Ok(ctx.state_with(|i| &window[i], t))
}

/// Idealized action `a_t = −K·s_t + Σ_k M_t^{[k]}·w_{t−k}`.
pub fn ideal_action(ctx: &SurrogateContext<'_>, m_t: &DacParams, s_t: &DVector<f64>, t: i64) -> Result<DVector<f64>> {
    ctx.check_time(t)?;
    ctx.check_params(m_t)?;
    if s_t.len() != ctx.sys.n() {
        return Err(dims("idealized state", ctx.sys.n(), s_t.len()));
    }
    Ok(ctx.action(m_t, s_t, t))
}

/// `f_t(M_{t−H}, …, M_t) = c_t(s_t, a_t)` for a window of `H + 1` parameters.
pub fn ideal_cost_f(ctx: &SurrogateContext<'_>, window: &[DacParams], cost: &dyn StageCost, t: i64) -> Result<f64> {
    if window.len() != ctx.h + 1 {
        return Err(dims("parameter window", ctx.h + 1, window.len()));
    }
    let s = ideal_state(ctx, &window[..ctx.h], t)?;
    let a = ideal_action(ctx, &window[ctx.h], &s, t)?;
    Ok(cost.value(&s, &a))
}

/// [`ideal_cost_f`] on a window supplied by reference, for rollouts that keep the
/// parameter trajectory in place.
pub(crate) fn ideal_cost_f_with<'p>(
    ctx: &SurrogateContext<'_>,
    window: impl Fn(usize) -> &'p DacParams,
    cost: &dyn StageCost,
    t: i64,
) -> f64 {
    let s = ctx.state_with(&window, t);
    let a = ctx.action(window(ctx.h), &s, t);
    cost.value(&s, &a)
}

/// `(s_t, a_t)` with every window entry equal to `m`.
pub(crate) fn constant_window_pair(ctx: &SurrogateContext<'_>, m: &DacParams, t: i64) -> (DVector<f64>, DVector<f64>) {
    let s = ctx.state_with(|_| m, t);
    let a = ctx.action(m, &s, t);
    (s, a)
}

/// `g_t(M) = f_t(M, …, M)`.
pub fn surrogate_cost_g(ctx: &SurrogateContext<'_>, m: &DacParams, cost: &dyn StageCost, t: i64) -> Result<f64> {
    ctx.check_time(t)?;
    ctx.check_params(m)?;
    let (s, a) = constant_window_pair(ctx, m, t);
    Ok(cost.value(&s, &a))
}

/// `∇g_t(M)` by reverse-mode chain rule through the `H`-step replay.
///
/// With `v = ∇_x c − Kᵀ·∇_u c` and `Φ_j = (A−BK)^{t−1−j}·B`,
/// `∇_{M^{[k]}} g = ∇_u c · w_{t−k}ᵀ + Σ_{j=t−H}^{t−1} (Φ_jᵀ·v)·w_{j−k}ᵀ`.
pub fn surrogate_grad(ctx: &SurrogateContext<'_>, m: &DacParams, cost: &dyn StageCost, t: i64) -> Result<DacParams> {
    ctx.check_time(t)?;
    ctx.check_params(m)?;
    let (s, a) = constant_window_pair(ctx, m, t);
    let (gx, gu) = cost.gradient(&s, &a);
    let grad = grad_from_cost_gradient(ctx, &gx, &gu, t);
    if !grad.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericFailure(format!("non-finite surrogate gradient at t = {t}")));
    }
    DacParams::from_flat(ctx.h, ctx.sys.m(), ctx.sys.n(), &grad)
}

/// Flattened `∇g_t` given the stage-cost gradient at `(s_t, a_t)`.
fn grad_from_cost_gradient(ctx: &SurrogateContext<'_>, gx: &DVector<f64>, gu: &DVector<f64>, t: i64) -> Vec<f64> {
    let (h, m, n) = (ctx.h, ctx.sys.m(), ctx.sys.n());
    let mut grad = vec![0.0; h * m * n];
    let mut add_outer = |k: usize, p: &DVector<f64>, w: &DVector<f64>| {
        let base = (k - 1) * m * n;
        for r in 0..m {
            let pr = p[r];
            if pr == 0.0 {
                continue;
            }
            for c in 0..n {
                grad[base + r * n + c] += pr * w[c];
            }
        }
    };
    for k in 1..=h {
        add_outer(k, gu, ctx.w(t - k as i64));
    }
    let mut lambda = gx.clone();
    lambda.gemv_tr(-1.0, ctx.k, gu, 1.0);
    for j in (t - h as i64..t).rev() {
        let p = ctx.sys.b().tr_mul(&lambda);
        for k in 1..=h {
            add_outer(k, &p, ctx.w(j - k as i64));
        }
        lambda = ctx.closed.tr_mul(&lambda);
    }
    grad
}

/// Affine dependence of the constant-window pair on the flattened parameters:
/// `s_t = s0 + J_s·θ`, `a_t = a0 + J_a·θ`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub s0: DVector<f64>,
    pub a0: DVector<f64>,
    pub js: DMatrix<f64>,
    pub ja: DMatrix<f64>,
}

impl AffineMap {
    pub fn state(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.s0 + &self.js * theta
    }

    pub fn action(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.a0 + &self.ja * theta
    }
}

/// Assembles the Jacobians of `(s_t, a_t)` column by column: column `(k, r, c)` is the
/// response to a unit change of `M^{[k]}_{rc}` in every window entry.
pub fn affine_map(ctx: &SurrogateContext<'_>, t: i64) -> Result<AffineMap> {
    ctx.check_time(t)?;
    let (h, m, n) = (ctx.h, ctx.sys.m(), ctx.sys.n());
    let p = h * m * n;
    let zero = DacParams::zeros(h, m, n);
    let (s0, a0) = constant_window_pair(ctx, &zero, t);

    // Φ for j = t−1, t−2, …, t−H
    let mut phis: Vec<DMatrix<f64>> = Vec::with_capacity(h);
    let mut phi = ctx.sys.b().clone();
    for _ in 0..h {
        let next = &ctx.closed * &phi;
        phis.push(std::mem::replace(&mut phi, next));
    }

    let mut js = DMatrix::zeros(n, p);
    let mut ja = DMatrix::zeros(m, p);
    for k in 1..=h {
        for r in 0..m {
            for c in 0..n {
                let col = (k - 1) * m * n + r * n + c;
                for (back, phi) in phis.iter().enumerate() {
                    let j = t - 1 - back as i64;
                    let wc = ctx.w(j - k as i64)[c];
                    if wc != 0.0 {
                        for i in 0..n {
                            js[(i, col)] += phi[(i, r)] * wc;
                        }
                    }
                }
                ja[(r, col)] += ctx.w(t - k as i64)[c];
            }
        }
    }
    ja -= ctx.k * &js;
    Ok(AffineMap { s0, a0, js, ja })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matrix_power;

    #[derive(Debug)]
    struct Constant(f64);

    impl StageCost for Constant {
        fn value(&self, _: &DVector<f64>, _: &DVector<f64>) -> f64 {
            self.0
        }
    }

    fn scalar_sys() -> SystemMatrices {
        SystemMatrices::new(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)).unwrap()
    }

    fn two_dim_sys() -> SystemMatrices {
        SystemMatrices::new(
            DMatrix::from_row_slice(2, 2, &[0.3, 0.08, 0.02, 0.27]),
            DMatrix::from_column_slice(2, 1, &[0.5, 0.5]),
        )
        .unwrap()
    }

    fn log(n: usize, len: usize) -> Vec<DVector<f64>> {
        (1..=len).map(|t| DVector::from_fn(n, |i, _| ((t * 7 + i * 3) as f64 * 0.37).sin() * 0.6)).collect()
    }

    #[test]
    fn zero_disturbances_give_zero_state() {
        let sys = two_dim_sys();
        let k = DMatrix::from_row_slice(1, 2, &[0.1, 0.2]);
        let w = vec![DVector::zeros(2); 10];
        let ctx = SurrogateContext::new(&sys, &k, &w, 3).unwrap();
        let window = vec![DacParams::from_flat(3, 1, 2, &[0.5, -0.2, 0.1, 0.3, 0.0, 0.1]).unwrap(); 3];
        assert_eq!(ideal_state(&ctx, &window, 8).unwrap().norm(), 0.0);
    }

    #[test]
    fn one_step_unrolling_with_zero_dynamics() {
        let sys = SystemMatrices::new(DMatrix::zeros(2, 2), DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let k = DMatrix::zeros(1, 2);
        let w = log(2, 6);
        let ctx = SurrogateContext::new(&sys, &k, &w, 2).unwrap();
        let s = ideal_state(&ctx, &[DacParams::zeros(2, 1, 2), DacParams::zeros(2, 1, 2)], 5).unwrap();
        assert_eq!(s, w[3]);
    }

    #[test]
    fn open_loop_unrolling_matches_closed_form() {
        let sys = two_dim_sys();
        let k = DMatrix::zeros(1, 2);
        let w = log(2, 12);
        let h = 4;
        let ctx = SurrogateContext::new(&sys, &k, &w, h).unwrap();
        let t = 9i64;
        let s = ideal_state(&ctx, &vec![DacParams::zeros(h, 1, 2); h], t).unwrap();
        let mut expected = DVector::zeros(2);
        for j in 0..h as i64 {
            expected += matrix_power(sys.a(), j as u32) * ctx.w(t - 1 - j);
        }
        assert!((s - expected).norm() < 1e-14);
    }

    #[test]
    fn ideal_action_examples() {
        let sys = scalar_sys();
        let k = DMatrix::zeros(1, 1);
        let w = vec![DVector::from_vec(vec![0.2])];
        let ctx = SurrogateContext::new(&sys, &k, &w, 1).unwrap();
        let m = DacParams::from_flat(1, 1, 1, &[1.0]).unwrap();
        let a = ideal_action(&ctx, &m, &DVector::zeros(1), 2).unwrap();
        assert!((a[0] - 0.2).abs() < 1e-15);
        let a = ideal_action(&ctx, &DacParams::zeros(1, 1, 1), &DVector::zeros(1), 2).unwrap();
        assert_eq!(a[0], 0.0);

        // two-dimensional: K=0, H=1, M = [[1, 0]], w_{t−1} = [0.2, 0.9]
        let sys2 = SystemMatrices::new(DMatrix::zeros(2, 2), DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let k2 = DMatrix::zeros(1, 2);
        let w2 = vec![DVector::from_vec(vec![0.2, 0.9])];
        let ctx2 = SurrogateContext::new(&sys2, &k2, &w2, 1).unwrap();
        let m2 = DacParams::from_flat(1, 1, 2, &[1.0, 0.0]).unwrap();
        let a = ideal_action(&ctx2, &m2, &DVector::zeros(2), 2).unwrap();
        assert!((a[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn constant_cost_passes_through() {
        let sys = two_dim_sys();
        let k = DMatrix::zeros(1, 2);
        let w = log(2, 5);
        let ctx = SurrogateContext::new(&sys, &k, &w, 2).unwrap();
        let window = vec![DacParams::from_flat(2, 1, 2, &[0.3, 0.1, -0.2, 0.05]).unwrap(); 3];
        assert_eq!(ideal_cost_f(&ctx, &window, &Constant(3.5), 4).unwrap(), 3.5);
        assert_eq!(surrogate_cost_g(&ctx, &window[0], &Constant(3.5), 4).unwrap(), 3.5);
    }

    #[test]
    fn scalar_closed_forms() {
        // n = m = 1, H = 1, A = 0, B = 1, K = 0: g(M) = Q·w² + R·(M·w)²
        let sys = scalar_sys();
        let k = DMatrix::zeros(1, 1);
        // w_1 = 0 keeps the replayed state independent of M
        let w = vec![DVector::zeros(1), DVector::from_vec(vec![0.7])];
        let ctx = SurrogateContext::new(&sys, &k, &w, 1).unwrap();
        let (q, r) = (0.45, 0.6);
        let cost = QuadraticCost::diagonal(&[q], &[r]).unwrap();
        for mv in [-1.0, -0.3, 0.0, 0.25, 0.9] {
            let m = DacParams::from_flat(1, 1, 1, &[mv]).unwrap();
            let g = surrogate_cost_g(&ctx, &m, &cost, 3).unwrap();
            let expected = q * 0.49 + r * (mv * 0.7) * (mv * 0.7);
            assert!((g - expected).abs() < 1e-14);
            let grad = surrogate_grad(&ctx, &m, &cost, 3).unwrap();
            assert!((grad.to_flat()[0] - 2.0 * r * mv * 0.49).abs() < 1e-14);
        }
    }

    #[test]
    fn g_equals_f_on_constant_window() {
        let sys = two_dim_sys();
        let k = DMatrix::from_row_slice(1, 2, &[0.15, 0.12]);
        let w = log(2, 20);
        let ctx = SurrogateContext::new(&sys, &k, &w, 3).unwrap();
        let cost = QuadraticCost::diagonal(&[0.5, 0.4], &[0.6]).unwrap();
        let m = DacParams::from_flat(3, 1, 2, &[0.4, -0.1, 0.2, 0.0, -0.05, 0.1]).unwrap();
        let f = ideal_cost_f(&ctx, &vec![m.clone(); 4], &cost, 15).unwrap();
        let g = surrogate_cost_g(&ctx, &m, &cost, 15).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn zero_disturbance_gradient_is_exactly_zero() {
        let sys = two_dim_sys();
        let k = DMatrix::from_row_slice(1, 2, &[0.15, 0.12]);
        let w = vec![DVector::zeros(2); 6];
        let ctx = SurrogateContext::new(&sys, &k, &w, 2).unwrap();
        let cost = QuadraticCost::diagonal(&[0.5, 0.4], &[0.6]).unwrap();
        let m = DacParams::from_flat(2, 1, 2, &[0.4, -0.1, 0.2, 0.3]).unwrap();
        let grad = surrogate_grad(&ctx, &m, &cost, 5).unwrap();
        assert!(grad.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_gradient_matches_jacobian_assembly() {
        let sys = two_dim_sys();
        let k = DMatrix::from_row_slice(1, 2, &[0.15, 0.12]);
        let w = log(2, 30);
        let h = 5;
        let ctx = SurrogateContext::new(&sys, &k, &w, h).unwrap();
        let cost = QuadraticCost::diagonal(&[0.5, 0.4], &[0.6]).unwrap();
        let theta: Vec<f64> = (0..h * 2).map(|i| ((i as f64) * 1.3).cos() * 0.3).collect();
        let m = DacParams::from_flat(h, 1, 2, &theta).unwrap();
        for t in [1i64, 3, 6, 20, 31] {
            let map = affine_map(&ctx, t).unwrap();
            let th = DVector::from_vec(theta.clone());
            let (s, a) = constant_window_pair(&ctx, &m, t);
            assert!((map.state(&th) - &s).norm() < 1e-13);
            assert!((map.action(&th) - &a).norm() < 1e-13);
            let (gx, gu) = cost.gradient(&s, &a);
            let via_jac = map.js.tr_mul(&gx) + map.ja.tr_mul(&gu);
            let adj = surrogate_grad(&ctx, &m, &cost, t).unwrap().to_flat();
            for (x, y) in via_jac.iter().zip(&adj) {
                assert!((x - y).abs() < 1e-13, "t={t}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn finite_difference_fallback_matches_quadratic_gradient() {
        let cost = QuadraticCost::diagonal(&[0.5, 0.4], &[0.6])
            .unwrap()
            .with_state_target(DVector::from_vec(vec![1.0, -0.5]))
            .unwrap();
        let x = DVector::from_vec(vec![0.3, 2.0]);
        let u = DVector::from_vec(vec![-0.7]);
        let (gx, gu) = cost.gradient(&x, &u);
        let (fx, fu) = finite_difference_gradient(&cost, &x, &u);
        assert!((gx - fx).norm() < 1e-9);
        assert!((gu - fu).norm() < 1e-9);
    }

    #[test]
    fn time_and_shape_validation() {
        let sys = two_dim_sys();
        let k = DMatrix::zeros(1, 2);
        let w = log(2, 4);
        let ctx = SurrogateContext::new(&sys, &k, &w, 2).unwrap();
        let m = DacParams::zeros(2, 1, 2);
        assert!(surrogate_cost_g(&ctx, &m, &Constant(1.0), 6).is_err());
        assert!(surrogate_cost_g(&ctx, &m, &Constant(1.0), 0).is_err());
        assert!(surrogate_cost_g(&ctx, &DacParams::zeros(3, 1, 2), &Constant(1.0), 3).is_err());
        assert!(ideal_state(&ctx, &[m.clone()], 3).is_err());
        assert!(ideal_cost_f(&ctx, &[m.clone(), m.clone()], &Constant(1.0), 3).is_err());
    }
}
