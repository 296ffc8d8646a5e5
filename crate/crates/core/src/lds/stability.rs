//! `(κ, γ)`-strong stability: a gain `K` qualifies when `A − BK = H·L·H⁻¹` with
//! `‖L‖ ≤ 1−γ` and `‖K‖, ‖H‖, ‖H⁻¹‖ ≤ κ` (operator norms).
//!
//! Certification searches for `H` in two families: a real eigenbasis of the closed
//! loop (block-diagonal `L` with norm equal to the spectral radius) and, when the
//! eigenbasis is ill-conditioned or rejected, a real Schur basis with graded
//! diagonal scaling that trades `‖L‖` against the conditioning of `H`.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use super::{SystemBounds, SystemMatrices};
use crate::error::{Error, Result, StabilityViolation};
use crate::linalg::spectral_norm;

/// Relative Frobenius tolerance for `A − BK = H·L·H⁻¹`.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-9;

/// Eigenbases with a larger condition number are abandoned for the Schur route.
const MAX_EIGEN_CONDITION: f64 = 1e8;

/// Slack applied to the norm inequalities to absorb SVD rounding.
const NORM_SLACK: f64 = 1e-9;

const SCHUR_GRADING: [f64; 10] = [1.0, 0.5, 0.3, 0.2, 0.1, 0.05, 0.03, 0.02, 0.01, 0.005];

const RICCATI_MAX_ITER: usize = 20_000;
const RICCATI_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Eigen,
    Schur,
    Supplied,
}

#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub k: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub h_inv: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub kappa_achieved: f64,
    pub gamma_achieved: f64,
    pub basis: BasisKind,
}

impl StabilityCertificate {
    /// Relative Frobenius error of `H·L·H⁻¹` against `closed_loop`.
    pub fn reconstruction_error(&self, closed_loop: &DMatrix<f64>) -> f64 {
        relative_error(&(&self.h * &self.l * &self.h_inv), closed_loop)
    }
}

fn relative_error(approx: &DMatrix<f64>, exact: &DMatrix<f64>) -> f64 {
    let diff = (approx - exact).norm();
    let scale = exact.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Checks the strong-stability inequalities for one explicit basis `H`.
pub fn certify_with_basis(
    sys: &SystemMatrices,
    k: &DMatrix<f64>,
    h: &DMatrix<f64>,
    kappa: f64,
    gamma: f64,
) -> Result<StabilityCertificate> {
    let closed = sys.closed_loop(k)?;
    if h.nrows() != sys.n() || h.ncols() != sys.n() {
        return Err(crate::error::dims("basis H", format!("{0}×{0}", sys.n()), format!("{}×{}", h.nrows(), h.ncols())));
    }
    certify(&closed, k, h.clone(), kappa, gamma, BasisKind::Supplied)
}

fn certify(
    closed: &DMatrix<f64>,
    k: &DMatrix<f64>,
    h: DMatrix<f64>,
    kappa: f64,
    gamma: f64,
    basis: BasisKind,
) -> Result<StabilityCertificate> {
    let h_inv = h
        .clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or(Error::Rejected(StabilityViolation::SingularBasis))?;
    let l = &h_inv * closed * &h;
    let cert = StabilityCertificate {
        kappa_achieved: spectral_norm(k).max(spectral_norm(&h)).max(spectral_norm(&h_inv)),
        gamma_achieved: 1.0 - spectral_norm(&l),
        k: k.clone(),
        h,
        h_inv,
        l,
        basis,
    };
    let recon = cert.reconstruction_error(closed);
    if recon > RECONSTRUCTION_TOLERANCE {
        return Err(Error::Rejected(StabilityViolation::Reconstruction { relative_error: recon }));
    }
    let slack = |bound: f64| bound * (1.0 + NORM_SLACK) + NORM_SLACK;
    let norm_l = spectral_norm(&cert.l);
    if norm_l > slack(1.0 - gamma) {
        return Err(Error::Rejected(StabilityViolation::ContractionMargin { norm: norm_l, bound: 1.0 - gamma }));
    }
    let norm_k = spectral_norm(k);
    if norm_k > slack(kappa) {
        return Err(Error::Rejected(StabilityViolation::GainNorm { norm: norm_k, bound: kappa }));
    }
    let norm_h = spectral_norm(&cert.h);
    if norm_h > slack(kappa) {
        return Err(Error::Rejected(StabilityViolation::BasisNorm { norm: norm_h, bound: kappa }));
    }
    let norm_hi = spectral_norm(&cert.h_inv);
    if norm_hi > slack(kappa) {
        return Err(Error::Rejected(StabilityViolation::InverseBasisNorm { norm: norm_hi, bound: kappa }));
    }
    Ok(cert)
}

/// Searches for a factorization certifying `K` as `(κ, γ)`-strongly stable.
///
/// The eigenbasis is tried first; the graded Schur bases follow. The rejection names
/// the inequality the first candidate violated.
pub fn verify_strong_stability(
    sys: &SystemMatrices,
    k: &DMatrix<f64>,
    kappa: f64,
    gamma: f64,
) -> Result<StabilityCertificate> {
    if !(kappa > 0.0 && gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("need κ > 0 and 0 < γ < 1, got κ = {kappa}, γ = {gamma}")));
    }
    let closed = sys.closed_loop(k)?;
    let mut first_rejection = None;
    let mut candidates: Vec<(DMatrix<f64>, BasisKind)> = Vec::new();
    if let Some(v) = eigen_basis(&closed) {
        candidates.push((v, BasisKind::Eigen));
    }
    candidates.extend(schur_bases(&closed).into_iter().map(|h| (h, BasisKind::Schur)));
    for (h, kind) in candidates {
        match certify(&closed, k, balance(h), kappa, gamma, kind) {
            Ok(cert) => return Ok(cert),
            Err(e) => {
                first_rejection.get_or_insert(e);
            }
        }
    }
    Err(first_rejection.unwrap_or(Error::Rejected(StabilityViolation::SingularBasis)))
}

/// Scales `h` so that `‖H‖ = ‖H⁻¹‖`, which minimizes their maximum.
fn balance(h: DMatrix<f64>) -> DMatrix<f64> {
    let Some(inv) = h.clone().try_inverse() else {
        return h;
    };
    let (nh, ni) = (spectral_norm(&h), spectral_norm(&inv));
    if nh > 0.0 && ni > 0.0 && nh.is_finite() && ni.is_finite() {
        h * (ni / nh).sqrt()
    } else {
        h
    }
}

fn condition(h: &DMatrix<f64>) -> f64 {
    match h.clone().try_inverse() {
        Some(inv) => spectral_norm(h) * spectral_norm(&inv),
        None => f64::INFINITY,
    }
}

/// Real basis `V` with `V⁻¹·M·V` block diagonal (1×1 real eigenvalues, 2×2
/// rotation-scaling blocks for complex pairs). `None` when `M` is defective or the
/// basis is too ill-conditioned.
fn eigen_basis(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let scale = m.norm().max(1.0);
    let group_tol = 1e-7 * scale;
    let eigs: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();

    // one representative per cluster of (numerically) equal eigenvalues in the upper half plane
    let mut groups: Vec<(Complex64, usize)> = Vec::new();
    for lam in eigs {
        let lam = if lam.im.abs() <= group_tol { Complex64::new(lam.re, 0.0) } else { lam };
        if lam.im < 0.0 {
            continue;
        }
        match groups.iter_mut().find(|(mu, _)| (mu - lam).norm() <= group_tol) {
            Some(g) => g.1 += 1,
            None => groups.push((lam, 1)),
        }
    }

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (lam, mult) in groups {
        if lam.im == 0.0 {
            let shifted = m - DMatrix::identity(n, n) * lam.re;
            let svd = shifted.svd(false, true);
            let v_t = svd.v_t?;
            for idx in smallest_indices(svd.singular_values.as_slice(), mult) {
                let col: Vec<f64> = v_t.row(idx).iter().copied().collect();
                let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
                columns.push(col.iter().map(|x| x / norm).collect());
            }
        } else {
            let shifted = m.map(|x| Complex64::new(x, 0.0)) - DMatrix::<Complex64>::identity(n, n) * lam;
            let svd = shifted.svd(false, true);
            let v_t = svd.v_t?;
            for idx in smallest_indices(svd.singular_values.as_slice(), mult) {
                let v: Vec<Complex64> = v_t.row(idx).iter().map(|z| z.conj()).collect();
                let (re, im) = orthogonal_parts(&v);
                columns.push(re);
                columns.push(im);
            }
        }
    }
    if columns.len() != n {
        return None;
    }
    let v = DMatrix::from_fn(n, n, |i, j| columns[j][i]);
    let cond = condition(&v);
    (cond.is_finite() && cond <= MAX_EIGEN_CONDITION).then_some(v)
}

fn smallest_indices(values: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx.truncate(count);
    idx
}

/// Rotates the complex vector's phase so its real and imaginary parts are orthogonal,
/// then returns both parts scaled to unit combined norm per part on average.
fn orthogonal_parts(v: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let rr: f64 = v.iter().map(|z| z.re * z.re).sum();
    let ii: f64 = v.iter().map(|z| z.im * z.im).sum();
    let ri: f64 = v.iter().map(|z| z.re * z.im).sum();
    let theta = 0.5 * (-2.0 * ri).atan2(rr - ii);
    let rot = Complex64::from_polar(1.0, theta);
    let rotated: Vec<Complex64> = v.iter().map(|z| z * rot).collect();
    let total: f64 = rotated.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let s = std::f64::consts::SQRT_2 / total;
    (
        rotated.iter().map(|z| z.re * s).collect(),
        rotated.iter().map(|z| z.im * s).collect(),
    )
}

/// Schur-based bases `Q·S·D_δ`: `S` is either `I` or normalizes each 2×2 diagonal
/// block to rotation-scaling form, and `D_δ = diag(δ^j)` grades the blocks so the strictly
/// upper part of `L` shrinks as `δ` decreases.
fn schur_bases(m: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let n = m.nrows();
    let Some(schur) = Schur::try_new(m.clone(), f64::EPSILON, 10_000) else {
        return Vec::new();
    };
    let (q, t) = schur.unpack();
    let tiny = 1e-14 * t.norm().max(1.0);

    // diagonal block layout
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > tiny {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }

    let mut s = DMatrix::<f64>::identity(n, n);
    for &(start, size) in &blocks {
        if size == 2 {
            if let Some(local) = rotation_form_basis(&t.view((start, start), (2, 2)).into_owned()) {
                s.view_mut((start, start), (2, 2)).copy_from(&local);
            }
        }
    }

    let plain = DMatrix::<f64>::identity(n, n);
    let normalizers: Vec<&DMatrix<f64>> = if s == plain { vec![&plain] } else { vec![&plain, &s] };
    let mut out = Vec::with_capacity(2 * SCHUR_GRADING.len());
    for delta in SCHUR_GRADING {
        let mut d = DMatrix::<f64>::zeros(n, n);
        for (bi, &(start, size)) in blocks.iter().enumerate() {
            let w = delta.powi(bi as i32);
            for j in start..start + size {
                d[(j, j)] = w;
            }
        }
        for norm in &normalizers {
            out.push(&q * *norm * &d);
        }
    }
    out
}

/// For a 2×2 block with complex eigenvalues `a ± iβ`, a basis `S` with
/// `S⁻¹·T·S = [[a, β], [−β, a]]`.
fn rotation_form_basis(t: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (p, b, c, d) = (t[(0, 0)], t[(0, 1)], t[(1, 0)], t[(1, 1)]);
    let a = 0.5 * (p + d);
    let disc = 0.25 * (p - d) * (p - d) + b * c;
    if disc >= 0.0 || b == 0.0 {
        return None;
    }
    let beta = (-disc).sqrt();
    // eigenvector for a + iβ: [b, (a − p) + iβ]
    let v = [Complex64::new(b, 0.0), Complex64::new(a - p, beta)];
    let (re, im) = orthogonal_parts(&v);
    let s = DMatrix::from_column_slice(2, 2, &[re[0], re[1], im[0], im[1]]);
    s.clone().try_inverse().map(|_| s)
}

/// Riccati gain with `Q = I`, `R = I`, certified against `(bounds.κ, bounds.γ)`.
pub fn synthesize_stabilizer(sys: &SystemMatrices, bounds: &SystemBounds) -> Result<StabilityCertificate> {
    let k = riccati_gain(sys)?;
    verify_strong_stability(sys, &k, bounds.kappa, bounds.gamma).map_err(|e| {
        let closed = sys.a() - sys.b() * &k;
        let radius = closed
            .complex_eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()));
        Error::SynthesisFailed(format!(
            "Riccati gain (‖K‖ = {:.4}, closed-loop spectral radius {:.4}) not certified for κ = {}, γ = {}: {e}",
            spectral_norm(&k),
            radius,
            bounds.kappa,
            bounds.gamma
        ))
    })
}

/// Fixed-point iteration of the discrete algebraic Riccati equation with unit weights.
pub(crate) fn riccati_gain(sys: &SystemMatrices) -> Result<DMatrix<f64>> {
    let a = sys.a();
    let b = sys.b();
    let (n, m) = (sys.n(), sys.m());
    let q = DMatrix::<f64>::identity(n, n);
    let r = DMatrix::<f64>::identity(m, m);
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = q.clone();
    for _ in 0..RICCATI_MAX_ITER {
        let s = &r + &bt * &p * b;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::SynthesisFailed("R + BᵀPB is singular".into()))?;
        let pa = &p * a;
        let next = &q + &at * &pa - &at * &p * b * &s_inv * &bt * &pa;
        let next = (&next + next.transpose()) * 0.5;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::SynthesisFailed("Riccati iteration produced non-finite values".into()));
        }
        let delta = (&next - &p).norm();
        p = next;
        if delta <= RICCATI_TOL * p.norm().max(1.0) {
            let s = &r + &bt * &p * b;
            let s_inv = s
                .try_inverse()
                .ok_or_else(|| Error::SynthesisFailed("R + BᵀPB is singular".into()))?;
            return Ok(s_inv * &bt * &p * a);
        }
    }
    Err(Error::SynthesisFailed(format!(
        "Riccati fixed-point iteration did not converge in {RICCATI_MAX_ITER} iterations"
    )))
}
