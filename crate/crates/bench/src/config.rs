use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tomo_core::design::qubit_count;
use tomo_core::estimators::{CvMetric, Method};

use crate::error::{BenchError, Result};

/// Environment variable overriding the configured master seed.
pub const SEED_ENV: &str = "TOMO_SEED";

/// Error function evaluated on each estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// `‖ρ̂ − ρ‖₂²`
    Frobenius,
    /// `‖ρ̂ − ρ‖₁`
    Trace,
    /// `‖ρ̂ − ρ‖_∞`
    Operator,
    /// `D_B(ρ̂, ρ)²`
    Bures,
    /// `D_H(λ̂, λ)²` between sorted spectra.
    Hellinger,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Frobenius,
        Metric::Trace,
        Metric::Operator,
        Metric::Bures,
        Metric::Hellinger,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Frobenius => "frobenius",
            Metric::Trace => "trace",
            Metric::Operator => "operator",
            Metric::Bures => "bures",
            Metric::Hellinger => "hellinger",
        }
    }

    /// Bures and Hellinger errors are defined for states only.
    pub fn needs_state(&self) -> bool {
        matches!(self, Metric::Bures | Metric::Hellinger)
    }

    /// CV discrepancy matched to this error function; Hellinger uses Bures.
    pub fn matched_cv(&self) -> CvMetric {
        match self {
            Metric::Frobenius => CvMetric::Frobenius,
            Metric::Trace => CvMetric::Trace,
            Metric::Operator => CvMetric::Operator,
            Metric::Bures | Metric::Hellinger => CvMetric::Bures,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| BenchError::Config(format!("unknown metric `{s}`")))
    }
}

/// Measurement design of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DesignSpec {
    /// All `3ⁿ` Pauli bases, `m` shots each.
    Pauli,
    /// `k` Haar-random bases drawn afresh for every trial, `m` shots each.
    Random { k: usize },
    /// `samples` single shots, each in a fresh Haar-random basis.
    Covariant { samples: u64 },
}

/// One Monte-Carlo experiment over a list of ranks.
///
/// Exactly one of `d` and `qubits` is given. States are rank-`r` with equal
/// nonzero eigenvalues and a Haar-random eigenbasis, drawn afresh per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubits: Option<usize>,
    pub ranks: Vec<usize>,
    pub design: DesignSpec,
    /// Shots per setting; required for Pauli and random designs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub estimators: Vec<Method>,
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub seed: u64,
    /// Fixed CV discrepancy for TLS/TGLS; matched to each metric when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_metric: Option<CvMetric>,
}

fn default_trials() -> usize {
    100
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the `TOMO_SEED` override.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(cfg)
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| BenchError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn dim(&self) -> Result<usize> {
        match (self.d, self.qubits) {
            (Some(d), None) => Ok(d),
            (None, Some(n)) => 1usize
                .checked_shl(n as u32)
                .filter(|_| n < 16)
                .ok_or_else(|| BenchError::Config(format!("{n} qubits is too many"))),
            (Some(d), Some(n)) if Some(n) == qubit_count(d) => Ok(d),
            _ => Err(BenchError::Config("give exactly one of `d` and `qubits`".into())),
        }
    }

    /// Number of settings `k`.
    pub fn settings(&self) -> Result<u64> {
        let d = self.dim()?;
        Ok(match self.design {
            DesignSpec::Pauli => {
                let n = qubit_count(d)
                    .ok_or_else(|| BenchError::Config(format!("Pauli design needs a power of two, got d={d}")))?;
                3u64.pow(n as u32)
            }
            DesignSpec::Random { k } => k as u64,
            DesignSpec::Covariant { samples } => samples,
        })
    }

    /// Shots per setting `m`.
    pub fn repetitions(&self) -> Result<u64> {
        match self.design {
            DesignSpec::Covariant { .. } => Ok(1),
            _ => self
                .m
                .ok_or_else(|| BenchError::Config("`m` is required for Pauli and random designs".into())),
        }
    }

    /// Total number of shots `N = k·m`.
    pub fn total_samples(&self) -> Result<u64> {
        Ok(self.settings()? * self.repetitions()?)
    }

    pub fn needs_batches(&self) -> bool {
        self.estimators.iter().any(Method::needs_batches)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim()?;
        if d < 2 {
            return Err(BenchError::Config(format!("dimension {d} must be at least 2")));
        }
        if self.trials < 2 {
            return Err(BenchError::Config("at least 2 trials are required".into()));
        }
        if self.ranks.is_empty() || self.ranks.iter().any(|&r| r == 0 || r > d) {
            return Err(BenchError::Config(format!("ranks must lie in 1..={d}")));
        }
        if self.estimators.is_empty() || self.metrics.is_empty() {
            return Err(BenchError::Config("no estimators or metrics requested".into()));
        }
        let k = self.settings()?;
        let m = self.repetitions()?;
        if k == 0 || m == 0 {
            return Err(BenchError::Config("the design takes no samples".into()));
        }
        if matches!(self.design, DesignSpec::Random { k } if k < d + 1) {
            return Err(BenchError::Config(format!(
                "{k} random bases cannot be informationally complete in dimension {d}"
            )));
        }
        if self.needs_batches() && !matches!(self.design, DesignSpec::Covariant { .. }) && m % 5 != 0 {
            return Err(BenchError::Config(format!(
                "TLS/TGLS split the data into 5 batches; m={m} is not a multiple of 5"
            )));
        }
        Ok(())
    }
}
