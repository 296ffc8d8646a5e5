//! Small dense helpers shared by the control modules.

use nalgebra::{DMatrix, DVector};

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn vector_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Integer power of a square matrix by repeated squaring.
pub fn matrix_power(m: &DMatrix<f64>, mut exp: u32) -> DMatrix<f64> {
    let mut base = m.clone();
    let mut acc = DMatrix::identity(m.nrows(), m.ncols());
    while exp > 0 {
        if exp & 1 == 1 {
            acc = &acc * &base;
        }
        base = &base * &base;
        exp >>= 1;
    }
    acc
}
