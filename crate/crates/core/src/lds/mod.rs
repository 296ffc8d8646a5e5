//! Linear dynamical systems `x_{t+1} = A x_t + B u_t + w_t`, bounded disturbance
//! generators, and strong-stability certification of feedback gains.

mod disturbance;
mod stability;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::linalg::{all_finite, spectral_norm};

pub use disturbance::{DisturbanceKind, DisturbanceSource};
pub use stability::{
    certify_with_basis, synthesize_stabilizer, verify_strong_stability, StabilityCertificate,
    RECONSTRUCTION_TOLERANCE,
};

/// Problem-wide constants: system and disturbance magnitudes, the strong-stability
/// pair `(κ, γ)` and the cost regularity constants `G`, `β`, `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBounds {
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub kappa_w: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub g: f64,
    pub beta: f64,
    pub s: f64,
}

impl SystemBounds {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("kappa_a", self.kappa_a),
            ("kappa_b", self.kappa_b),
            ("kappa_w", self.kappa_w),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("g", self.g),
            ("beta", self.beta),
            ("s", self.s),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfiguration(format!(
                    "bound {name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        if self.gamma >= 1.0 {
            return Err(Error::InvalidConfiguration(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

impl Default for SystemBounds {
    /// Unit system/disturbance bounds with `κ = √2`, `γ = 0.5` (n = 2, m = 1) and
    /// the gradient constant of a quadratic cost whose weights are at most 0.625.
    fn default() -> Self {
        Self {
            kappa_a: 1.0,
            kappa_b: 1.0,
            kappa_w: 1.0,
            kappa: std::f64::consts::SQRT_2,
            gamma: 0.5,
            g: 1.25,
            beta: 0.625,
            s: 1.0,
        }
    }
}

/// The pair `(A, B)` of a linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl SystemMatrices {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(dims("A", "square n×n with n ≥ 1", format!("{}×{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(dims("B", format!("{n}×m with m ≥ 1"), format!("{}×{}", b.nrows(), b.ncols())));
        }
        if !all_finite(&a) || !all_finite(&b) {
            return Err(Error::InvalidArgument("system matrices must be finite".into()));
        }
        Ok(Self { a, b })
    }

    /// Builds the system and checks `‖A‖ ≤ κ_A`, `‖B‖ ≤ κ_B` in operator norm.
    pub fn with_bounds(a: DMatrix<f64>, b: DMatrix<f64>, bounds: &SystemBounds) -> Result<Self> {
        let sys = Self::new(a, b)?;
        let na = spectral_norm(&sys.a);
        let nb = spectral_norm(&sys.b);
        if na > bounds.kappa_a * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!("‖A‖ = {na} exceeds κ_A = {}", bounds.kappa_a)));
        }
        if nb > bounds.kappa_b * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!("‖B‖ = {nb} exceeds κ_B = {}", bounds.kappa_b)));
        }
        Ok(sys)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// State dimension n.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension m.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Closed-loop matrix `A − B·K`.
    pub fn closed_loop(&self, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_gain(k)?;
        Ok(&self.a - &self.b * k)
    }

    pub(crate) fn check_gain(&self, k: &DMatrix<f64>) -> Result<()> {
        if k.nrows() != self.m() || k.ncols() != self.n() {
            return Err(dims(
                "gain K",
                format!("{}×{}", self.m(), self.n()),
                format!("{}×{}", k.nrows(), k.ncols()),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_state(&self, x: &DVector<f64>, what: &'static str) -> Result<()> {
        if x.len() != self.n() {
            return Err(dims(what, self.n(), x.len()));
        }
        Ok(())
    }

    pub(crate) fn check_input(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.m() {
            return Err(dims("input u", self.m(), u.len()));
        }
        Ok(())
    }
}

/// One step of the dynamics: `A·x + B·u + w`.
pub fn step(
    sys: &SystemMatrices,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    sys.check_state(x, "state x")?;
    sys.check_input(u)?;
    sys.check_state(w, "disturbance w")?;
    Ok(sys.a() * x + sys.b() * u + w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half_identity_sys() -> SystemMatrices {
        SystemMatrices::new(DMatrix::identity(2, 2) * 0.5, DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap()
    }

    #[test]
    fn step_hand_example() {
        let sys = half_identity_sys();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let u = DVector::from_vec(vec![1.0]);
        let w = DVector::zeros(2);
        let next = step(&sys, &x, &u, &w).unwrap();
        assert_eq!(next.as_slice(), &[1.5, 0.5]);
    }

    #[test]
    fn step_zero_and_pure_disturbance() {
        let sys = half_identity_sys();
        let z = step(&sys, &DVector::zeros(2), &DVector::zeros(1), &DVector::zeros(2)).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 0.0]);

        let id = SystemMatrices::new(DMatrix::identity(2, 2), DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let w = DVector::from_vec(vec![0.3, -0.3]);
        let next = step(&id, &DVector::zeros(2), &DVector::zeros(1), &w).unwrap();
        assert_eq!(next.as_slice(), &[0.3, -0.3]);
    }

    #[test]
    fn step_rejects_bad_dimensions() {
        let sys = half_identity_sys();
        let err = step(&sys, &DVector::zeros(3), &DVector::zeros(1), &DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        assert!(step(&sys, &DVector::zeros(2), &DVector::zeros(2), &DVector::zeros(2)).is_err());
        assert!(step(&sys, &DVector::zeros(2), &DVector::zeros(1), &DVector::zeros(1)).is_err());
    }

    #[test]
    fn construction_checks_shapes_and_bounds() {
        assert!(SystemMatrices::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1)).is_err());
        assert!(SystemMatrices::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1)).is_err());
        assert!(SystemMatrices::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 0)).is_err());
        let bounds = SystemBounds::default();
        let big = DMatrix::identity(2, 2) * 1.5;
        assert!(SystemMatrices::with_bounds(big, DMatrix::zeros(2, 1), &bounds).is_err());
        let ok = SystemMatrices::with_bounds(DMatrix::identity(2, 2) * 0.3, DMatrix::from_element(2, 1, 0.5), &bounds);
        assert!(ok.is_ok());
    }

    #[test]
    fn bounds_validation() {
        assert!(SystemBounds::default().validate().is_ok());
        let bad = SystemBounds { gamma: 1.0, ..SystemBounds::default() };
        assert!(bad.validate().is_err());
        let bad = SystemBounds { kappa_w: 0.0, ..SystemBounds::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn step_is_linear(v in proptest::collection::vec(-2.0f64..2.0, 14)) {
            let sys = SystemMatrices::new(
                DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.4]),
                DMatrix::from_column_slice(2, 1, &[0.5, 0.5]),
            ).unwrap();
            let x1 = DVector::from_column_slice(&v[0..2]);
            let x2 = DVector::from_column_slice(&v[2..4]);
            let u1 = DVector::from_column_slice(&v[4..5]);
            let u2 = DVector::from_column_slice(&v[5..6]);
            let w1 = DVector::from_column_slice(&v[6..8]);
            let w2 = DVector::from_column_slice(&v[8..10]);
            let lhs = step(&sys, &(&x1 + &x2), &(&u1 + &u2), &(&w1 + &w2)).unwrap();
            let zero = step(&sys, &DVector::zeros(2), &DVector::zeros(1), &DVector::zeros(2)).unwrap();
            let rhs = step(&sys, &x1, &u1, &w1).unwrap() + step(&sys, &x2, &u2, &w2).unwrap() - zero;
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
