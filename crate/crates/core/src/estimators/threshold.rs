use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{covariance_estimate, estimate_gls, estimate_ls, estimate_ml, EstimatorConfig, LinearModel};
use crate::error::{Result, TomoError};
use crate::metrics;
use crate::qstate::{self, DensityMatrix, HermitianEstimate, Spectrum};
use crate::sampling::CountsDataset;

/// Discrepancy minimised when choosing the threshold constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvMetric {
    Frobenius,
    Trace,
    Operator,
    Bures,
}

impl FromStr for CvMetric {
    type Err = TomoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "frobenius" => Ok(CvMetric::Frobenius),
            "trace" => Ok(CvMetric::Trace),
            "operator" => Ok(CvMetric::Operator),
            "bures" => Ok(CvMetric::Bures),
            other => Err(TomoError::Parse(format!("unknown CV metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseEstimator {
    Ls,
    Gls,
}

#[derive(Debug, Clone)]
pub struct ThresholdEstimate {
    pub state: DensityMatrix,
    /// Selected constant `Ĉ`.
    pub constant: f64,
    /// `ν(Ĉ)`
    pub threshold: f64,
}

/// `ν = C √((4/m) log(2d))`, capped at 1.
pub fn threshold_for(constant: f64, repetitions: u64, dim: usize) -> f64 {
    let nu = constant * (4.0 / repetitions as f64 * (2.0 * dim as f64).ln()).sqrt();
    nu.min(1.0)
}

fn base_estimate(
    model: &LinearModel,
    data: &CountsDataset,
    base: BaseEstimator,
    cfg: &EstimatorConfig,
) -> Result<HermitianEstimate> {
    let f = data.frequencies();
    match base {
        BaseEstimator::Ls => estimate_ls(model, f.values()),
        BaseEstimator::Gls => {
            let cov = covariance_estimate(model, f.values(), data.repetitions(), cfg)?;
            estimate_gls(model, f.values(), &cov)
        }
    }
}

fn discrepancy(metric: CvMetric, estimate: &DensityMatrix, reference: &HermitianEstimate) -> Result<f64> {
    match metric {
        CvMetric::Frobenius => metrics::frobenius_sq(estimate.matrix(), reference.matrix()),
        CvMetric::Trace => metrics::trace_norm(estimate.matrix(), reference.matrix()),
        CvMetric::Operator => metrics::operator_norm(estimate.matrix(), reference.matrix()),
        CvMetric::Bures => Err(TomoError::Unsupported(
            "Bures discrepancy needs a state reference".into(),
        )),
    }
}

/// First grid point attaining the minimum of `scores`.
fn arg_min(grid: &[f64], scores: &[f64]) -> f64 {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    grid[best]
}

/// Chooses the threshold constant on `grid`.
///
/// Frobenius, trace and operator discrepancies are averaged over
/// hold-one-batch-out folds, each comparing the thresholded estimate from the
/// other batches with the LS estimate of the held-out batch. Bures compares
/// the thresholded pooled estimate with the pooled ML estimate.
pub fn cross_validate_threshold(
    model: &LinearModel,
    batches: &[CountsDataset],
    grid: &[f64],
    metric: CvMetric,
    base: BaseEstimator,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    if batches.len() < cfg.cv_folds {
        return Err(TomoError::InsufficientBatches {
            needed: cfg.cv_folds,
            got: batches.len(),
        });
    }
    if grid.is_empty() {
        return Err(TomoError::InvalidSize("empty threshold grid".into()));
    }
    let d = model.dim();
    let pooled = CountsDataset::pool(batches)?;
    let m = pooled.repetitions();
    let mut scores = vec![0.0; grid.len()];

    if metric == CvMetric::Bures {
        let spectrum = base_estimate(model, &pooled, base, cfg)?.spectrum();
        let ml = estimate_ml(model, &pooled, cfg)?.state;
        for (score, &constant) in scores.iter_mut().zip(grid) {
            let candidate = qstate::project_from_spectrum(&spectrum, threshold_for(constant, m, d))?;
            *score = metrics::bures_sq(&candidate, &ml)?;
        }
        return Ok(arg_min(grid, &scores));
    }

    for held_out in 0..batches.len() {
        let training: Vec<CountsDataset> = batches
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != held_out)
            .map(|(_, b)| b.clone())
            .collect();
        let spectrum: Spectrum = base_estimate(model, &CountsDataset::pool(&training)?, base, cfg)?.spectrum();
        let reference = estimate_ls(model, batches[held_out].frequencies().values())?;
        for (score, &constant) in scores.iter_mut().zip(grid) {
            let candidate = qstate::project_from_spectrum(&spectrum, threshold_for(constant, m, d))?;
            *score += discrepancy(metric, &candidate, &reference)? / batches.len() as f64;
        }
    }
    Ok(arg_min(grid, &scores))
}

fn thresholded(
    model: &LinearModel,
    batches: &[CountsDataset],
    metric: CvMetric,
    base: BaseEstimator,
    cfg: &EstimatorConfig,
) -> Result<ThresholdEstimate> {
    let constant = cross_validate_threshold(model, batches, &cfg.grid(), metric, base, cfg)?;
    let pooled = CountsDataset::pool(batches)?;
    let threshold = threshold_for(constant, pooled.repetitions(), model.dim());
    let estimate = base_estimate(model, &pooled, base, cfg)?;
    Ok(ThresholdEstimate {
        state: qstate::project_to_states(&estimate, threshold)?,
        constant,
        threshold,
    })
}

/// Thresholded LS: the pooled LS estimate projected with the cross-validated threshold.
pub fn estimate_tls(
    model: &LinearModel,
    batches: &[CountsDataset],
    metric: CvMetric,
    cfg: &EstimatorConfig,
) -> Result<ThresholdEstimate> {
    thresholded(model, batches, metric, BaseEstimator::Ls, cfg)
}

/// Thresholded GLS.
pub fn estimate_tgls(
    model: &LinearModel,
    batches: &[CountsDataset],
    metric: CvMetric,
    cfg: &EstimatorConfig,
) -> Result<ThresholdEstimate> {
    thresholded(model, batches, metric, BaseEstimator::Gls, cfg)
}
