//! Disturbance-action control: `u_t = −K·x_t + Σ_{k=1..H} M^{[k]}·w_{t−k}`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{dims, Error, Result};
use crate::lds::{SystemBounds, SystemMatrices};

/// History length `H = ⌈ln T / ln(1/(1−γ))⌉`, at least 1.
pub fn horizon(task_len: usize, gamma: f64) -> Result<usize> {
    if task_len < 2 {
        return Err(Error::InvalidArgument(format!("task length must be ≥ 2, got {task_len}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("γ must lie in (0, 1), got {gamma}")));
    }
    let ratio = (task_len as f64).ln() / (1.0 / (1.0 - gamma)).ln();
    // exact integer ratios (T = 2, γ = 0.5) must not round up
    let h = (ratio - 1e-12).ceil();
    Ok((h as usize).max(1))
}

/// Policy parameter `M = (M^{[1]}, …, M^{[H]})`, each block `m×n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DacParams {
    blocks: Vec<DMatrix<f64>>,
}

impl DacParams {
    pub fn zeros(h: usize, m: usize, n: usize) -> Self {
        Self { blocks: vec![DMatrix::zeros(m, n); h] }
    }

    pub fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::InvalidArgument("DAC parameters need at least one block".into()))?;
        let (m, n) = first.shape();
        if m == 0 || n == 0 {
            return Err(Error::InvalidArgument("DAC blocks must be non-empty".into()));
        }
        for b in &blocks {
            if b.shape() != (m, n) {
                return Err(dims("DAC block", format!("{m}×{n}"), format!("{}×{}", b.nrows(), b.ncols())));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("DAC parameters must be finite".into()));
            }
        }
        Ok(Self { blocks })
    }

    /// Inverse of [`DacParams::to_flat`]: block-major, row-major within a block.
    pub fn from_flat(h: usize, m: usize, n: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != h * m * n {
            return Err(dims("flattened DAC parameters", h * m * n, flat.len()));
        }
        let blocks = flat.chunks(m * n).map(|c| DMatrix::from_row_slice(m, n, c)).collect();
        Self::from_blocks(blocks)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for b in &self.blocks {
            for r in 0..b.nrows() {
                for c in 0..b.ncols() {
                    out.push(b[(r, c)]);
                }
            }
        }
        out
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// `M^{[k]}` for `k = 1..=H`.
    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k - 1]
    }

    pub fn h(&self) -> usize {
        self.blocks.len()
    }

    pub fn m(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn n(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.h() * self.m() * self.n()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.h() == other.h() && self.m() == other.m() && self.n() == other.n()
    }

    fn check_shape(&self, other: &Self, context: &'static str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(dims(context, self.shape_str(), other.shape_str()));
        }
        Ok(())
    }

    fn shape_str(&self) -> String {
        format!("{}×({}×{})", self.h(), self.m(), self.n())
    }

    /// Frobenius norm over all blocks.
    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_shape(other, "DAC distance")?;
        Ok(self.sub(other)?.norm())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other, "DAC sum")?;
        Ok(Self { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_shape(other, "DAC difference")?;
        Ok(Self { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect() })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { blocks: self.blocks.iter().map(|b| b * s).collect() }
    }

    /// `self + s·other`
    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self> {
        self.check_shape(other, "DAC axpy")?;
        Ok(Self { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b * s).collect() })
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Arithmetic mean of a non-empty list.
    pub fn mean(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("mean of an empty parameter list".into()))?;
        let mut acc = first.clone();
        for p in &items[1..] {
            acc = acc.add(p)?;
        }
        Ok(acc.scale(1.0 / items.len() as f64))
    }
}

/// Feasible set `{M : ‖M^{[k]}‖_F ≤ κ³·κ_B·(1−γ)^k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DacDomain {
    radii: Vec<f64>,
    m: usize,
    n: usize,
}

impl DacDomain {
    pub fn new(h: usize, m: usize, n: usize, kappa: f64, kappa_b: f64, gamma: f64) -> Result<Self> {
        if h == 0 || m == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!("domain shape must be positive, got H={h}, m={m}, n={n}")));
        }
        if !(kappa > 0.0 && kappa_b > 0.0 && gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument("domain needs κ, κ_B > 0 and 0 < γ < 1".into()));
        }
        let base = kappa.powi(3) * kappa_b;
        let radii = (1..=h).map(|k| base * (1.0 - gamma).powi(k as i32)).collect();
        Ok(Self { radii, m, n })
    }

    pub fn from_bounds(h: usize, m: usize, n: usize, bounds: &SystemBounds) -> Result<Self> {
        Self::new(h, m, n, bounds.kappa, bounds.kappa_b, bounds.gamma)
    }

    pub fn h(&self) -> usize {
        self.radii.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `r_k` for `k = 1..=H`.
    pub fn radius(&self, k: usize) -> f64 {
        self.radii[k - 1]
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Diameter `2·√(Σ r_k²)` of the product of balls.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radii.iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    pub fn zero(&self) -> DacParams {
        DacParams::zeros(self.h(), self.m, self.n)
    }

    fn check(&self, params: &DacParams) -> Result<()> {
        if params.h() != self.h() || params.m() != self.m || params.n() != self.n {
            return Err(dims(
                "DAC parameters vs domain",
                format!("{}×({}×{})", self.h(), self.m, self.n),
                params.shape_str(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, params: &DacParams, tol: f64) -> bool {
        self.check(params).is_ok()
            && params.blocks.iter().zip(&self.radii).all(|(b, r)| b.norm() <= r + tol)
    }

    /// Euclidean projection: each block is pulled radially onto its ball.
    pub fn project(&self, params: &DacParams) -> Result<DacParams> {
        self.check(params)?;
        // shares the flat path so both layouts round identically
        let mut flat = params.to_flat();
        self.project_flat(&mut flat);
        DacParams::from_flat(self.h(), self.m, self.n, &flat)
    }

    /// Projection on the flattened layout of [`DacParams::to_flat`].
    pub fn project_flat(&self, flat: &mut [f64]) {
        let size = self.m * self.n;
        debug_assert_eq!(flat.len(), size * self.h());
        for (chunk, &r) in flat.chunks_mut(size).zip(&self.radii) {
            let norm = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > r {
                let s = r / norm;
                chunk.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

/// The last `H` recovered disturbances, newest first: `get(k) = w_{t−k}`.
#[derive(Debug, Clone)]
pub struct DisturbanceHistory {
    buf: VecDeque<DVector<f64>>,
    h: usize,
    n: usize,
}

impl DisturbanceHistory {
    /// Zero-padded history (`w_t = 0` for `t ≤ 0`).
    pub fn new(h: usize, n: usize) -> Self {
        Self { buf: (0..h).map(|_| DVector::zeros(n)).collect(), h, n }
    }

    pub fn push(&mut self, w: DVector<f64>) -> Result<()> {
        if w.len() != self.n {
            return Err(dims("disturbance history entry", self.n, w.len()));
        }
        self.buf.push_front(w);
        self.buf.truncate(self.h);
        Ok(())
    }

    /// `w_{t−k}` for `k = 1..=H`.
    pub fn get(&self, k: usize) -> &DVector<f64> {
        &self.buf[k - 1]
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// `Σ_k M^{[k]}·w_{t−k}` with `w_lag(k)` supplying `w_{t−k}`.
pub(crate) fn disturbance_feedforward<'a>(
    params: &DacParams,
    w_lag: impl Fn(usize) -> &'a DVector<f64>,
) -> DVector<f64> {
    let mut u = DVector::zeros(params.m());
    for k in 1..=params.h() {
        u.gemv(1.0, params.block(k), w_lag(k), 1.0);
    }
    u
}

/// `u_t = −K·x_t + Σ_k M^{[k]}·w_{t−k}`.
pub fn control_action(
    k: &DMatrix<f64>,
    params: &DacParams,
    x: &DVector<f64>,
    hist: &DisturbanceHistory,
) -> Result<DVector<f64>> {
    let (m, n) = (params.m(), params.n());
    if k.shape() != (m, n) {
        return Err(dims("gain K", format!("{m}×{n}"), format!("{}×{}", k.nrows(), k.ncols())));
    }
    if x.len() != n {
        return Err(dims("state x", n, x.len()));
    }
    if hist.h() != params.h() || hist.n() != n {
        return Err(dims("disturbance history", format!("H={} n={n}", params.h()), format!("H={} n={}", hist.h(), hist.n())));
    }
    let mut u = disturbance_feedforward(params, |lag| hist.get(lag));
    u.gemv(-1.0, k, x, 1.0);
    Ok(u)
}

/// `w_t = x_{t+1} − A·x_t − B·u_t`.
pub fn recover_disturbance(
    sys: &SystemMatrices,
    x: &DVector<f64>,
    u: &DVector<f64>,
    x_next: &DVector<f64>,
) -> Result<DVector<f64>> {
    sys.check_state(x, "state x_t")?;
    sys.check_input(u)?;
    sys.check_state(x_next, "state x_{t+1}")?;
    Ok(x_next - sys.a() * x - sys.b() * u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lds::step;
    use proptest::prelude::*;

    #[test]
    fn horizon_values() {
        assert_eq!(horizon(2, 0.5).unwrap(), 1);
        assert_eq!(horizon(25, 0.5).unwrap(), 5);
        assert_eq!(horizon(400, 0.5).unwrap(), 9);
        assert_eq!(horizon(4, 0.5).unwrap(), 2);
        assert!(horizon(1, 0.5).is_err());
        assert!(horizon(10, 1.0).is_err());
    }

    #[test]
    fn domain_radii_and_diameter() {
        let dom = DacDomain::new(3, 1, 2, 1.0, 1.0, 0.5).unwrap();
        assert_eq!(dom.radii(), &[0.5, 0.25, 0.125]);
        let expected = 2.0 * (0.25f64 + 0.0625 + 0.015625).sqrt();
        assert!((dom.diameter() - expected).abs() < 1e-15);
        assert!((dom.diameter() - 1.146).abs() < 1e-3);
        assert!(dom.radii().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn projection_scales_to_boundary() {
        let dom = DacDomain::new(1, 1, 2, 1.0, 1.0, 0.5).unwrap();
        let p = DacParams::from_blocks(vec![DMatrix::from_row_slice(1, 2, &[2.0, 0.0])]).unwrap();
        let q = dom.project(&p).unwrap();
        assert_eq!(q.block(1).as_slice(), &[0.5, 0.0]);
        let inside = DacParams::from_blocks(vec![DMatrix::from_row_slice(1, 2, &[0.1, -0.2])]).unwrap();
        assert_eq!(dom.project(&inside).unwrap(), inside);
    }

    #[test]
    fn projection_rejects_shape_mismatch() {
        let dom = DacDomain::new(2, 1, 2, 1.0, 1.0, 0.5).unwrap();
        assert!(dom.project(&DacParams::zeros(3, 1, 2)).is_err());
        assert!(dom.project(&DacParams::zeros(2, 2, 2)).is_err());
    }

    #[test]
    fn control_action_examples() {
        let k = DMatrix::from_row_slice(1, 2, &[0.1, 0.1]);
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let zero = DacParams::zeros(1, 1, 2);
        let hist = DisturbanceHistory::new(1, 2);
        let u = control_action(&k, &zero, &x, &hist).unwrap();
        assert!((u[0] + 0.2).abs() < 1e-15);

        let m = DacParams::from_blocks(vec![DMatrix::from_row_slice(1, 2, &[1.0, 0.0])]).unwrap();
        let mut hist = DisturbanceHistory::new(1, 2);
        hist.push(DVector::from_vec(vec![0.5, 0.0])).unwrap();
        let u = control_action(&k, &m, &x, &hist).unwrap();
        assert!((u[0] - 0.3).abs() < 1e-15);

        let u = control_action(&DMatrix::zeros(1, 2), &zero, &x, &hist).unwrap();
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn history_is_newest_first_and_zero_padded() {
        let mut hist = DisturbanceHistory::new(3, 1);
        assert_eq!(hist.get(3)[0], 0.0);
        for v in [1.0, 2.0, 3.0, 4.0] {
            hist.push(DVector::from_vec(vec![v])).unwrap();
        }
        assert_eq!((hist.get(1)[0], hist.get(2)[0], hist.get(3)[0]), (4.0, 3.0, 2.0));
        assert!(hist.push(DVector::zeros(2)).is_err());
    }

    #[test]
    fn recover_hand_example() {
        let sys = SystemMatrices::new(DMatrix::identity(2, 2) * 0.5, DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let w = recover_disturbance(
            &sys,
            &DVector::from_vec(vec![1.0, 1.0]),
            &DVector::from_vec(vec![1.0]),
            &DVector::from_vec(vec![2.0, 0.0]),
        )
        .unwrap();
        assert_eq!(w.as_slice(), &[0.5, -0.5]);
        assert!(recover_disturbance(&sys, &DVector::zeros(3), &DVector::zeros(1), &DVector::zeros(2)).is_err());
    }

    #[test]
    fn flat_layout_roundtrip() {
        let p = DacParams::from_blocks(vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0]),
        ])
        .unwrap();
        assert_eq!(p.to_flat(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(DacParams::from_flat(2, 2, 2, &p.to_flat()).unwrap(), p);
    }

    fn params_strategy(h: usize, m: usize, n: usize) -> impl Strategy<Value = DacParams> {
        proptest::collection::vec(-3.0f64..3.0, h * m * n).prop_map(move |v| DacParams::from_flat(h, m, n, &v).unwrap())
    }

    proptest! {
        #[test]
        fn projection_idempotent_feasible_nonexpansive(a in params_strategy(4, 1, 2), b in params_strategy(4, 1, 2)) {
            let dom = DacDomain::new(4, 1, 2, std::f64::consts::SQRT_2, 1.0, 0.5).unwrap();
            let pa = dom.project(&a).unwrap();
            let pb = dom.project(&b).unwrap();
            prop_assert!(dom.contains(&pa, 1e-12));
            prop_assert!(dom.project(&pa).unwrap().distance(&pa).unwrap() <= 1e-12);
            prop_assert!(pa.distance(&pb).unwrap() <= a.distance(&b).unwrap() + 1e-12);
        }

        #[test]
        fn projection_is_block_separable(a in params_strategy(3, 2, 2)) {
            let dom = DacDomain::new(3, 2, 2, 1.2, 0.8, 0.3).unwrap();
            let whole = dom.project(&a).unwrap();
            for k in 1..=3 {
                let single = DacDomain { radii: vec![dom.radius(k)], m: 2, n: 2 };
                let part = single.project(&DacParams::from_blocks(vec![a.block(k).clone()]).unwrap()).unwrap();
                prop_assert_eq!(part.block(1), whole.block(k));
            }
            let mut flat = a.to_flat();
            dom.project_flat(&mut flat);
            prop_assert_eq!(DacParams::from_flat(3, 2, 2, &flat).unwrap(), whole);
        }

        #[test]
        fn recover_roundtrips_step(v in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let sys = SystemMatrices::new(
                DMatrix::from_row_slice(2, 2, &[0.3, 0.05, 0.08, 0.28]),
                DMatrix::from_column_slice(2, 1, &[0.5, 0.5]),
            ).unwrap();
            let x = DVector::from_column_slice(&v[0..2]);
            let u = DVector::from_column_slice(&v[2..3]);
            let w = DVector::from_column_slice(&v[3..5]);
            let next = step(&sys, &x, &u, &w).unwrap();
            let rec = recover_disturbance(&sys, &x, &u, &next).unwrap();
            prop_assert!((rec - w).norm() <= 1e-12);
        }

        #[test]
        fn control_action_linearity(v in proptest::collection::vec(-2.0f64..2.0, 12), s in -3.0f64..3.0) {
            let k = DMatrix::from_row_slice(1, 2, &[0.2, -0.1]);
            let m1 = DacParams::from_flat(2, 1, 2, &v[0..4]).unwrap();
            let m2 = DacParams::from_flat(2, 1, 2, &v[4..8]).unwrap();
            let x = DVector::from_column_slice(&v[8..10]);
            let mut hist = DisturbanceHistory::new(2, 2);
            hist.push(DVector::from_column_slice(&v[10..12])).unwrap();
            hist.push(DVector::from_column_slice(&v[8..10])).unwrap();
            // linear in M for fixed (x, hist): u(M1 + s·M2) = u(M1) + s·(u(M2) − u(0))
            let u0 = control_action(&k, &DacParams::zeros(2, 1, 2), &x, &hist).unwrap();
            let lhs = control_action(&k, &m1.axpy(s, &m2).unwrap(), &x, &hist).unwrap();
            let rhs = control_action(&k, &m1, &x, &hist).unwrap()
                + (control_action(&k, &m2, &x, &hist).unwrap() - &u0) * s;
            prop_assert!((lhs - rhs).norm() < 1e-12);
            // linear in (x, hist) for fixed M
            let mut scaled = DisturbanceHistory::new(2, 2);
            scaled.push(DVector::from_column_slice(&v[10..12]) * s).unwrap();
            scaled.push(DVector::from_column_slice(&v[8..10]) * s).unwrap();
            let lhs = control_action(&k, &m1, &(&x * s), &scaled).unwrap();
            let rhs = control_action(&k, &m1, &x, &hist).unwrap() * s;
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
