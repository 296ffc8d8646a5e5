use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{BRule, ExperimentConfig};
use crate::error::{Error, Result};
use crate::lds::{DisturbanceKind, DisturbanceSource, SystemMatrices};
use crate::linalg::spectral_norm;
use crate::oc::TaskSpec;
use crate::surrogate::{QuadraticCost, StageCost};

pub const SUITE_FORMAT_VERSION: u32 = 1;

/// Range of the diagonal cost weights.
pub const COST_WEIGHT_RANGE: (f64, f64) = (0.375, 0.625);

/// One task of a stored suite. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskArtifact {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// Diagonal of `Q_t` for every step.
    pub q_diag: Vec<Vec<f64>>,
    /// Diagonal of `R_t` for every step.
    pub r_diag: Vec<Vec<f64>>,
    pub disturbance_seed: u64,
}

/// Everything needed to rebuild a task suite bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteArtifact {
    pub version: u32,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub disturbance: DisturbanceKind,
    pub kappa_w: f64,
    pub tasks: Vec<TaskArtifact>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!("{what} must be {nrows}×{ncols}")));
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

fn clip_norm(m: DMatrix<f64>, limit: f64) -> DMatrix<f64> {
    let norm = spectral_norm(&m);
    if norm > limit {
        let scaled = &m * (limit / norm);
        // keep the clipped norm at or below the limit after rounding
        if spectral_norm(&scaled) > limit {
            scaled * (1.0 - 1e-15)
        } else {
            scaled
        }
    } else {
        m
    }
}

/// Draws a suite: `A_i = I/(2n) + W_i/(5n)` with `W_i` uniform on `[0, 1]`, `B_i` per the
/// configured rule, diagonal `Q_t, R_t` uniform on [`COST_WEIGHT_RANGE`] per step, and
/// one disturbance seed per task.
pub fn generate_suite_artifact(cfg: &ExperimentConfig, seed: u64, horizon: usize) -> Result<SuiteArtifact> {
    cfg.validate()?;
    let (n, m) = (cfg.n, cfg.m);
    let bounds = cfg.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = n as f64;
    let (lo, hi) = COST_WEIGHT_RANGE;
    let mut tasks = Vec::with_capacity(cfg.tasks);
    for _ in 0..cfg.tasks {
        let w = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
        let a = DMatrix::identity(n, n) / (2.0 * nf) + w / (5.0 * nf);
        let b = match cfg.b_rule {
            BRule::Constant => DMatrix::from_element(n, m, 0.5),
            BRule::Uniform => DMatrix::from_fn(n, m, |_, _| rng.random::<f64>()),
        };
        let b = clip_norm(b, bounds.kappa_b);
        let q_diag = (0..horizon).map(|_| (0..n).map(|_| rng.random_range(lo..=hi)).collect()).collect();
        let r_diag = (0..horizon).map(|_| (0..m).map(|_| rng.random_range(lo..=hi)).collect()).collect();
        tasks.push(TaskArtifact { a: rows(&a), b: rows(&b), q_diag, r_diag, disturbance_seed: rng.next_u64() });
    }
    Ok(SuiteArtifact {
        version: SUITE_FORMAT_VERSION,
        seed,
        n,
        m,
        horizon,
        disturbance: cfg.disturbance,
        kappa_w: bounds.kappa_w,
        tasks,
    })
}

/// Generated suite as runnable tasks plus its artifact.
pub fn generate_task_suite(cfg: &ExperimentConfig, seed: u64, horizon: usize) -> Result<(Vec<TaskSpec>, SuiteArtifact)> {
    let artifact = generate_suite_artifact(cfg, seed, horizon)?;
    Ok((artifact.tasks()?, artifact))
}

impl SuiteArtifact {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parse(msg));
        if self.version != SUITE_FORMAT_VERSION {
            return bad(format!("unsupported suite version {}", self.version));
        }
        if self.n == 0 || self.m == 0 || self.n > 64 || self.m > 64 {
            return bad(format!("dimensions n = {}, m = {} out of range", self.n, self.m));
        }
        if self.horizon < 2 {
            return bad(format!("T must be ≥ 2, got {}", self.horizon));
        }
        if self.tasks.is_empty() {
            return bad("suite has no tasks".into());
        }
        if !(self.kappa_w.is_finite() && self.kappa_w >= 0.0) {
            return bad(format!("kappa_w must be finite and non-negative, got {}", self.kappa_w));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            from_rows(&t.a, self.n, self.n, "A")?;
            from_rows(&t.b, self.n, self.m, "B")?;
            if t.q_diag.len() != self.horizon || t.r_diag.len() != self.horizon {
                return bad(format!("task {}: cost sequences must have T = {} entries", i + 1, self.horizon));
            }
            if t.q_diag.iter().any(|q| q.len() != self.n) || t.r_diag.iter().any(|r| r.len() != self.m) {
                return bad(format!("task {}: cost diagonal has the wrong length", i + 1));
            }
            let values = t.a.iter().chain(&t.b).chain(&t.q_diag).chain(&t.r_diag).flatten();
            if values.clone().any(|v| !v.is_finite()) {
                return bad(format!("task {}: non-finite entry", i + 1));
            }
            if t.q_diag.iter().chain(&t.r_diag).flatten().any(|&v| v < 0.0) {
                return bad(format!("task {}: negative cost weight", i + 1));
            }
        }
        Ok(())
    }

    pub fn tasks(&self) -> Result<Vec<TaskSpec>> {
        self.validate()?;
        self.tasks
            .iter()
            .map(|t| {
                let sys = SystemMatrices::new(from_rows(&t.a, self.n, self.n, "A")?, from_rows(&t.b, self.n, self.m, "B")?)?;
                let costs = t
                    .q_diag
                    .iter()
                    .zip(&t.r_diag)
                    .map(|(q, r)| QuadraticCost::diagonal(q, r).map(|c| Arc::new(c) as Arc<dyn StageCost>))
                    .collect::<Result<Vec<_>>>()?;
                let src = DisturbanceSource::new(self.disturbance, self.kappa_w, t.disturbance_seed, self.n)?;
                TaskSpec::new(sys, costs, src)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// SHA-256 of the compact JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("suite artifacts always serialize");
        hex::encode(Sha256::digest(&json))
    }
}

/// Parses and validates a stored suite.
pub fn parse_suite(text: &str) -> Result<SuiteArtifact> {
    let suite: SuiteArtifact = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    suite.validate()?;
    Ok(suite)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tasks: usize) -> ExperimentConfig {
        ExperimentConfig { tasks, ..ExperimentConfig::default() }
    }

    #[test]
    fn system_matrix_ranges() {
        let mut samples = 0;
        for seed in 0..50 {
            let art = generate_suite_artifact(&cfg(100), seed, 2).unwrap();
            for t in &art.tasks {
                for i in 0..2 {
                    for j in 0..2 {
                        let v = t.a[i][j];
                        if i == j {
                            assert!((0.25..=0.35).contains(&v));
                        } else {
                            assert!((0.0..=0.1).contains(&v));
                        }
                    }
                }
                assert_eq!(t.b, vec![vec![0.5], vec![0.5]]);
                samples += 1;
            }
        }
        assert!(samples >= 5000);
    }

    #[test]
    fn cost_weight_ranges() {
        let art = generate_suite_artifact(&cfg(20), 3, 50).unwrap();
        for t in &art.tasks {
            for v in t.q_diag.iter().chain(&t.r_diag).flatten() {
                assert!((0.375..=0.625).contains(v));
            }
        }
    }

    #[test]
    fn same_seed_same_suite() {
        let a = generate_suite_artifact(&cfg(5), 11, 25).unwrap();
        let b = generate_suite_artifact(&cfg(5), 11, 25).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        let c = generate_suite_artifact(&cfg(5), 12, 25).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let a = generate_suite_artifact(&cfg(3), 5, 25).unwrap();
        let back = parse_suite(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.hash(), a.hash());
    }

    #[test]
    fn uniform_b_rule_respects_norm() {
        let c = ExperimentConfig { b_rule: BRule::Uniform, n: 3, m: 2, ..cfg(30) };
        let art = generate_suite_artifact(&c, 1, 4).unwrap();
        for t in &art.tasks {
            let b = from_rows(&t.b, 3, 2, "B").unwrap();
            assert!(spectral_norm(&b) <= 1.0);
            assert!(b.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn parse_rejects_malformed() {
        let good = generate_suite_artifact(&cfg(2), 5, 3).unwrap();
        let mut bad = good.clone();
        bad.tasks[0].a.pop();
        assert!(parse_suite(&serde_json::to_string(&bad).unwrap()).is_err());
        let mut bad = good.clone();
        bad.tasks[1].q_diag.pop();
        assert!(parse_suite(&serde_json::to_string(&bad).unwrap()).is_err());
        let mut bad = good.clone();
        bad.version = 7;
        assert!(parse_suite(&serde_json::to_string(&bad).unwrap()).is_err());
        assert!(parse_suite("{").is_err());
        assert!(parse_suite("{\"version\":1}").is_err());
    }
}
