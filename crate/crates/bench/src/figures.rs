use std::fmt;
use std::str::FromStr;

use tomo_core::asymptotics;
use tomo_core::estimators::Method;

use crate::config::{DesignSpec, ExperimentConfig, Metric};
use crate::error::{BenchError, Result};
use crate::experiment::run_experiment;
use crate::report::{FigureReport, FigureRow, RiskRow};

/// Reference figures that can be regenerated as tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureName {
    /// LS and PLS Frobenius risk versus rank, covariant measurements.
    Fig3a,
    /// PLS Bures risk versus rank, covariant measurements.
    Fig3c,
    /// Frobenius risk of every estimator versus rank, Pauli measurements.
    Fig6Like,
    /// Bures risk of the constrained estimators versus rank, Pauli measurements.
    Fig8Like,
}

impl FigureName {
    pub const ALL: [FigureName; 4] = [FigureName::Fig3a, FigureName::Fig3c, FigureName::Fig6Like, FigureName::Fig8Like];

    pub fn name(&self) -> &'static str {
        match self {
            FigureName::Fig3a => "fig3a",
            FigureName::Fig3c => "fig3c",
            FigureName::Fig6Like => "fig6-like",
            FigureName::Fig8Like => "fig8-like",
        }
    }

    fn covariant(&self) -> bool {
        matches!(self, FigureName::Fig3a | FigureName::Fig3c)
    }
}

impl fmt::Display for FigureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigureName {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        FigureName::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| BenchError::UnknownFigure(s.into()))
    }
}

/// Scale of a reproduction; unset fields take the figure's defaults.
///
/// `samples` is the total `N` for covariant figures and the shots per
/// setting `m` for Pauli figures.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureOptions {
    pub d: Option<usize>,
    pub samples: Option<u64>,
    pub trials: usize,
    pub ranks: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            d: None,
            samples: None,
            trials: 100,
            ranks: None,
            seed: 0,
        }
    }
}

/// Experiment behind a figure at the requested scale.
pub fn figure_config(name: FigureName, opts: &FigureOptions) -> ExperimentConfig {
    let covariant = name.covariant();
    let d = opts.d.unwrap_or(if covariant { 32 } else { 8 });
    let ranks = opts.ranks.clone().unwrap_or_else(|| {
        if covariant {
            std::iter::successors(Some(1usize), |r| Some(r * 2)).take_while(|&r| r <= d).collect()
        } else {
            (1..=d).collect()
        }
    });
    let (design, m) = if covariant {
        (DesignSpec::Covariant { samples: opts.samples.unwrap_or(500_000) }, None)
    } else {
        (DesignSpec::Pauli, Some(opts.samples.unwrap_or(1000)))
    };
    let (estimators, metric) = match name {
        FigureName::Fig3a => (vec![Method::Ls, Method::Pls], Metric::Frobenius),
        FigureName::Fig3c => (vec![Method::Pls], Metric::Bures),
        FigureName::Fig6Like => (Method::ALL.to_vec(), Metric::Frobenius),
        FigureName::Fig8Like => (
            Method::ALL.into_iter().filter(Method::is_constrained).collect(),
            Metric::Bures,
        ),
    };
    ExperimentConfig {
        d: Some(d),
        qubits: None,
        ranks,
        design,
        m,
        trials: opts.trials,
        estimators,
        metrics: vec![metric],
        seed: opts.seed,
        cv_metric: None,
    }
}

/// Asymptotic value for a covariant risk row, where a closed form exists.
fn prediction(row: &RiskRow) -> Result<Option<f64>> {
    let n = row.n as f64;
    Ok(match (row.estimator.as_str(), row.metric.as_str()) {
        ("ls", "frobenius") => Some(asymptotics::ls_risk_frobenius(row.d, row.r)? / n),
        ("ls", "operator") => Some(asymptotics::ls_norm_asymptotes(row.d, n)?.operator),
        ("ls", "trace") => Some(asymptotics::ls_norm_asymptotes(row.d, n)?.trace),
        ("pls", "frobenius") if row.r < row.d => Some(asymptotics::pls_risk_frobenius(row.d, row.r, n)?.full),
        ("pls", "bures") if row.r < row.d => Some(asymptotics::pls_risk_bures(row.d, row.r, n)?.full),
        _ => None,
    })
}

/// Simulated risks of a figure next to the theoretical curve.
///
/// Predictions are the covariant formulas, so Pauli figures carry none.
pub fn reproduce_figure(name: FigureName, opts: &FigureOptions) -> Result<FigureReport> {
    let cfg = figure_config(name, opts);
    let report = run_experiment(&cfg)?;
    let rows = report
        .rows
        .iter()
        .map(|row| {
            let pred = if name.covariant() { prediction(row)? } else { None };
            Ok(FigureRow::new(row, pred))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FigureReport {
        name: name.name().into(),
        rows,
    })
}
