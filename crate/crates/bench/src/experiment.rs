use std::collections::HashMap;

use log::{info, warn};
use rayon::prelude::*;
use tomo_core::design::{pauli_design, qubit_count, random_bases_design};
use tomo_core::estimators::{self, estimate_ls_covariant, CvMetric, EstimatorConfig, LinearModel, Method};
use tomo_core::linalg::CMatrix;
use tomo_core::metrics;
use tomo_core::qstate::{self, DensityMatrix};
use tomo_core::sampling::{self, CountsDataset};
use tomo_core::TomoError;

use crate::config::{DesignSpec, ExperimentConfig, Metric};
use crate::error::{BenchError, Result};
use crate::report::{RiskReport, RiskRow, Skipped};
use crate::rng::{derive_substream, trial_key, Stage};
use crate::stats::Welford;

/// Number of batches the data is split into when TLS/TGLS are requested.
const CV_BATCHES: u64 = 5;

/// (estimator, metric) pairs to evaluate, and those left out with a reason.
fn plan(cfg: &ExperimentConfig) -> (Vec<(Method, Metric)>, Vec<Skipped>) {
    let covariant = matches!(cfg.design, DesignSpec::Covariant { .. });
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    let mut estimators = cfg.estimators.clone();
    estimators.dedup();
    let mut metrics = cfg.metrics.clone();
    metrics.dedup();
    for &method in &estimators {
        for &metric in &metrics {
            let reason = if covariant && !matches!(method, Method::Ls | Method::Pls) {
                Some("covariant designs are streamed; only LS and PLS are available".to_string())
            } else if metric.needs_state() && !method.is_constrained() {
                Some(format!("{metric} error is defined for density matrices only"))
            } else {
                None
            };
            match reason {
                Some(reason) => {
                    info!("skipping {method}/{metric}: {reason}");
                    skipped.push(Skipped {
                        estimator: method.name().into(),
                        metric: metric.name().into(),
                        reason,
                    });
                }
                None => pairs.push((method, metric)),
            }
        }
    }
    (pairs, skipped)
}

pub(crate) fn evaluate(metric: Metric, estimate: &CMatrix, truth: &DensityMatrix) -> Result<f64> {
    Ok(match metric {
        Metric::Frobenius => metrics::frobenius_sq(estimate, truth.matrix())?,
        Metric::Trace => metrics::trace_norm(estimate, truth.matrix())?,
        Metric::Operator => metrics::operator_norm(estimate, truth.matrix())?,
        Metric::Bures => metrics::bures_sq(&DensityMatrix::new(estimate.clone())?, truth)?,
        Metric::Hellinger => {
            let est = DensityMatrix::new(estimate.clone())?;
            metrics::hellinger_sq(&est.spectrum().values, &truth.spectrum().values)?
        }
    })
}

struct Trial<'a> {
    cfg: &'a ExperimentConfig,
    pairs: &'a [(Method, Metric)],
    pauli: Option<&'a LinearModel>,
    d: usize,
    m: u64,
    estimator_cfg: EstimatorConfig,
}

impl Trial<'_> {
    fn cv_metric(&self, method: Method, metric: Metric) -> Option<CvMetric> {
        method
            .needs_batches()
            .then(|| self.cfg.cv_metric.unwrap_or_else(|| metric.matched_cv()))
    }

    fn run(&self, r: usize, rank_index: usize, t: usize) -> Result<Vec<f64>> {
        let seed = self.cfg.seed;
        let key = trial_key(rank_index, t);
        let rho = qstate::random_rank_r_state(self.d, r, &mut derive_substream(seed, key, Stage::State.tag()))?;
        let mut data_rng = derive_substream(seed, key, Stage::Data.tag());
        let mut estimates: HashMap<(Method, Option<CvMetric>), CMatrix> = HashMap::new();

        match self.cfg.design {
            DesignSpec::Covariant { samples } => {
                let summary = sampling::stream_covariant(&rho, samples as usize, &mut data_rng)?;
                let ls = estimate_ls_covariant(&summary)?;
                let pls = qstate::project_to_states(&ls, 0.0)?;
                estimates.insert((Method::Ls, None), ls.into_matrix());
                estimates.insert((Method::Pls, None), pls.into_matrix());
            }
            DesignSpec::Pauli | DesignSpec::Random { .. } => {
                let owned;
                let model = match (self.pauli, self.cfg.design) {
                    (Some(model), _) => model,
                    (None, DesignSpec::Random { k }) => {
                        let mut design_rng = derive_substream(seed, key, Stage::Design.tag());
                        owned = LinearModel::new(&random_bases_design(self.d, k, &mut design_rng)?)?;
                        &owned
                    }
                    _ => unreachable!("Pauli models are built once per experiment"),
                };
                let batches: Vec<CountsDataset> = if self.cfg.needs_batches() {
                    (0..CV_BATCHES)
                        .map(|_| sampling::simulate_counts(&rho, model.design(), self.m / CV_BATCHES, &mut data_rng))
                        .collect::<std::result::Result<_, TomoError>>()?
                } else {
                    vec![sampling::simulate_counts(&rho, model.design(), self.m, &mut data_rng)?]
                };
                for &(method, metric) in self.pairs {
                    let cv = self.cv_metric(method, metric);
                    if estimates.contains_key(&(method, cv)) {
                        continue;
                    }
                    let est = estimators::estimate(
                        method,
                        model,
                        &batches,
                        cv.unwrap_or(CvMetric::Frobenius),
                        &self.estimator_cfg,
                    )?;
                    if est.converged == Some(false) {
                        warn!("{method} did not converge (rank {r}, trial {t})");
                    }
                    estimates.insert((method, cv), est.matrix);
                }
            }
        }

        if let (Some(ls), Some(pls)) = (estimates.get(&(Method::Ls, None)), estimates.get(&(Method::Pls, None))) {
            let before = metrics::frobenius_sq(ls, rho.matrix())?;
            let after = metrics::frobenius_sq(pls, rho.matrix())?;
            if after > before + 1e-12 {
                return Err(BenchError::Tomo(TomoError::ContractViolation(format!(
                    "projection increased the Frobenius error from {before} to {after}"
                ))));
            }
        }

        self.pairs
            .iter()
            .map(|&(method, metric)| evaluate(metric, &estimates[&(method, self.cv_metric(method, metric))], &rho))
            .collect()
    }
}

/// Monte-Carlo risks for every rank, estimator and metric of `cfg`.
///
/// Trials run in parallel on independent substreams and are aggregated in
/// trial order, so the report depends only on the configuration and seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RiskReport> {
    cfg.validate()?;
    let d = cfg.dim()?;
    let k = cfg.settings()?;
    let m = cfg.repetitions()?;
    let total = cfg.total_samples()?;
    let (pairs, skipped) = plan(cfg);
    let pauli = match cfg.design {
        DesignSpec::Pauli => {
            let n = qubit_count(d).ok_or_else(|| BenchError::Config(format!("d={d} is not a power of two")))?;
            Some(LinearModel::new(&pauli_design(n)?)?)
        }
        _ => None,
    };
    let trial = Trial {
        cfg,
        pairs: &pairs,
        pauli: pauli.as_ref(),
        d,
        m,
        estimator_cfg: EstimatorConfig::default(),
    };

    let mut rows = Vec::new();
    for (rank_index, &r) in cfg.ranks.iter().enumerate() {
        info!("rank {r}: {} trials", cfg.trials);
        let results = (0..cfg.trials)
            .into_par_iter()
            .map(|t| trial.run(r, rank_index, t))
            .collect::<Result<Vec<_>>>()?;
        for (j, &(method, metric)) in pairs.iter().enumerate() {
            let stats: Welford = results.iter().map(|values| values[j]).collect();
            rows.push(RiskRow {
                estimator: method.name().into(),
                metric: metric.name().into(),
                d,
                r,
                k,
                m,
                n: total,
                trials: cfg.trials,
                mean: stats.mean(),
                stderr: stats.stderr(),
            });
        }
    }
    Ok(RiskReport { rows, skipped })
}
