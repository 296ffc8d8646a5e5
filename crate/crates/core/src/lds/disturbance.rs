use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    Zero,
    UniformBall,
    Sinusoidal,
    SignAlternating,
    SeededRandomWalk,
}

impl DisturbanceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::UniformBall => "uniform-ball",
            Self::Sinusoidal => "sinusoidal",
            Self::SignAlternating => "sign-alternating",
            Self::SeededRandomWalk => "seeded-random-walk",
        }
    }
}

/// Step radius of the random walk, as a fraction of `κ_w`.
const WALK_STEP: f64 = 0.25;

/// Stream reserved for per-source parameters (sinusoid frequency and phases).
const PARAM_STREAM: u64 = u64::MAX;

/// Deterministic bounded disturbance generator.
///
/// Every emission is a function of `(kind, seed, t)` only: the per-step randomness
/// comes from a ChaCha stream selected by `t`, so `emit` can be called in any order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSource {
    pub kind: DisturbanceKind,
    pub kappa_w: f64,
    pub seed: u64,
    pub dim: usize,
}

impl DisturbanceSource {
    pub fn new(kind: DisturbanceKind, kappa_w: f64, seed: u64, dim: usize) -> Result<Self> {
        if !(kappa_w.is_finite() && kappa_w >= 0.0) {
            return Err(Error::InvalidArgument(format!("κ_w must be finite and non-negative, got {kappa_w}")));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("disturbance dimension must be ≥ 1".into()));
        }
        Ok(Self { kind, kappa_w, seed, dim })
    }

    fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Uniform sample from the ball of radius `radius`.
    fn ball_sample(&self, rng: &mut ChaCha8Rng, radius: f64) -> DVector<f64> {
        let n = self.dim;
        let dir = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = dir.norm();
        if norm == 0.0 {
            return DVector::zeros(n);
        }
        let u: f64 = rng.random();
        let r = radius * u.powf(1.0 / n as f64);
        clamp_norm(dir * (r / norm), radius)
    }

    /// Disturbance at time `t`. Indices `t ≤ 0` are history padding and return zero.
    pub fn emit(&self, t: i64) -> DVector<f64> {
        if t <= 0 {
            return DVector::zeros(self.dim);
        }
        match self.kind {
            DisturbanceKind::SeededRandomWalk => {
                let mut w = DVector::zeros(self.dim);
                for s in 1..=t {
                    w = self.walk_step(&w, s);
                }
                w
            }
            _ => self.emit_memoryless(t),
        }
    }

    /// `emit(1), …, emit(horizon)` in one pass.
    pub fn emit_sequence(&self, horizon: usize) -> Vec<DVector<f64>> {
        match self.kind {
            DisturbanceKind::SeededRandomWalk => {
                let mut out = Vec::with_capacity(horizon);
                let mut w = DVector::zeros(self.dim);
                for s in 1..=horizon as i64 {
                    w = self.walk_step(&w, s);
                    out.push(w.clone());
                }
                out
            }
            _ => (1..=horizon as i64).map(|t| self.emit_memoryless(t)).collect(),
        }
    }

    fn walk_step(&self, prev: &DVector<f64>, t: i64) -> DVector<f64> {
        let mut rng = self.stream(t as u64);
        let delta = self.ball_sample(&mut rng, WALK_STEP * self.kappa_w);
        clamp_norm(prev + delta, self.kappa_w)
    }

    fn emit_memoryless(&self, t: i64) -> DVector<f64> {
        let n = self.dim;
        let scale = self.kappa_w / (n as f64).sqrt();
        match self.kind {
            DisturbanceKind::Zero => DVector::zeros(n),
            DisturbanceKind::UniformBall => {
                let mut rng = self.stream(t as u64);
                self.ball_sample(&mut rng, self.kappa_w)
            }
            DisturbanceKind::Sinusoidal => {
                let mut rng = self.stream(PARAM_STREAM);
                let period: f64 = rng.random_range(6.0..14.0);
                let omega = 2.0 * PI / period;
                let w = DVector::from_iterator(
                    n,
                    (0..n).map(|_| {
                        let phase: f64 = rng.random_range(0.0..2.0 * PI);
                        scale * (omega * t as f64 + phase).sin()
                    }),
                );
                clamp_norm(w, self.kappa_w)
            }
            DisturbanceKind::SignAlternating => {
                let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
                DVector::from_element(n, sign * scale)
            }
            DisturbanceKind::SeededRandomWalk => unreachable!("random walk is not memoryless"),
        }
    }
}

/// Rescales `v` onto the ball of radius `radius` when it lies outside.
fn clamp_norm(v: DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = v.norm();
    if norm > radius && norm > 0.0 {
        let scaled = v * (radius / norm);
        // rounding can leave the rescaled norm one ulp above the radius
        if scaled.norm() > radius {
            scaled * (1.0 - f64::EPSILON)
        } else {
            scaled
        }
    } else {
        v
    }
}
