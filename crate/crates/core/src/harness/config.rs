use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bench::ComparatorChoice;
use crate::dac::horizon;
use crate::error::{Error, Result};
use crate::lds::{DisturbanceKind, SystemBounds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NonAdaptive,
    IndependentOc,
    Moc1,
    Moc2,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::NonAdaptive, Method::IndependentOc, Method::Moc1, Method::Moc2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::NonAdaptive => "non-adaptive",
            Self::IndependentOc => "independent-oc",
            Self::Moc1 => "moc1",
            Self::Moc2 => "moc2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the input matrices `B_i` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BRule {
    /// All entries 0.5, scaled down if needed so that `‖B‖ ≤ κ_B`.
    #[default]
    Constant,
    /// Entries uniform on `[0, 1]`, norm-clipped to `κ_B`.
    Uniform,
}

/// A single horizon or a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizons {
    One(usize),
    Sweep(Vec<usize>),
}

impl Horizons {
    pub fn values(&self) -> Vec<usize> {
        match self {
            Self::One(t) => vec![*t],
            Self::Sweep(v) => v.clone(),
        }
    }
}

/// Step scale of M-OC-1: a fixed number, or the empirical diameter of the hindsight
/// optima of the suite being run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DStar {
    Value(f64),
    Keyword(DStarKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DStarKeyword {
    Empirical,
}

/// Experiment configuration; every key is optional and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub tasks: usize,
    #[serde(rename = "T")]
    pub horizons: Horizons,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    #[serde(rename = "D_star")]
    pub d_star: DStar,
    pub epsilon: f64,
    /// Defaults to `(1 + ln T)/ln T`.
    pub zeta: Option<f64>,
    /// Defaults to unit system bounds with `κ = √(n·m)`, `γ = 0.5`.
    pub bounds: Option<SystemBounds>,
    /// Defaults to the seeded random walk; i.i.d. noise leaves no structure shared
    /// across tasks for a meta-learner to pick up.
    pub disturbance: DisturbanceKind,
    pub b_rule: BRule,
    pub output_dir: PathBuf,
    /// Dimension parameter of the step-size constants; defaults to `n`.
    pub d: Option<usize>,
    pub comparator: ComparatorChoice,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 2,
            m: 1,
            tasks: 30,
            horizons: Horizons::One(25),
            seeds: (0..10).collect(),
            methods: Method::ALL.to_vec(),
            d_star: DStar::Keyword(DStarKeyword::Empirical),
            epsilon: 0.01,
            zeta: None,
            bounds: None,
            disturbance: DisturbanceKind::SeededRandomWalk,
            b_rule: BRule::Constant,
            output_dir: PathBuf::from("out"),
            d: None,
            comparator: ComparatorChoice::HindsightDac,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfiguration(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfiguration(e.to_string()))
    }

    pub fn bounds(&self) -> SystemBounds {
        self.bounds.unwrap_or(SystemBounds {
            kappa: ((self.n * self.m) as f64).sqrt(),
            ..SystemBounds::default()
        })
    }

    pub fn dimension_parameter(&self) -> usize {
        self.d.unwrap_or(self.n)
    }

    pub fn zeta_for(&self, t: usize) -> f64 {
        self.zeta.unwrap_or_else(|| crate::meta::default_zeta(t))
    }

    pub fn horizon_list(&self) -> Vec<usize> {
        self.horizons.values()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfiguration(msg));
        if self.n == 0 || self.m == 0 {
            return bad(format!("n and m must be ≥ 1, got n = {}, m = {}", self.n, self.m));
        }
        if self.n > 64 || self.m > 64 {
            return bad("n and m are limited to 64".into());
        }
        if self.tasks == 0 {
            return bad("N must be ≥ 1".into());
        }
        let hs = self.horizon_list();
        if hs.is_empty() {
            return bad("T must list at least one horizon".into());
        }
        if let Some(t) = hs.iter().find(|&&t| !(2..=100_000).contains(&t)) {
            return bad(format!("every T must lie in 2..=100000, got {t}"));
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        if self.methods.is_empty() {
            return bad("methods must be non-empty".into());
        }
        if let DStar::Value(v) = self.d_star {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("D_star must be positive, got {v}"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if let Some(z) = self.zeta {
            if !(z.is_finite() && z > 1.0) {
                return bad(format!("zeta must exceed 1, got {z}"));
            }
        }
        if self.d == Some(0) {
            return bad("d must be ≥ 1".into());
        }
        let bounds = self.bounds();
        bounds.validate()?;
        for &t in &hs {
            horizon(t, bounds.gamma).map_err(|e| Error::InvalidConfiguration(e.to_string()))?;
        }
        if self.comparator == ComparatorChoice::GridLinearFeedback && self.n * self.m > 4 {
            return bad("grid-linear-feedback comparator needs n·m ≤ 4".into());
        }
        Ok(())
    }
}
