//! Linear, thresholded, positivity-constrained and maximum-likelihood estimators.

mod gls;
mod ls;
mod ml;
mod positive;
mod threshold;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::design::{self, ChannelKind, DesignKind, MeasurementDesign, OperatorBasis, ReductionMaps};
use crate::error::{Result, TomoError};
use crate::linalg::CMatrix;
use crate::qstate::DensityMatrix;
use crate::sampling::CountsDataset;

pub use gls::{covariance_estimate, estimate_gls, CovarianceModel};
pub use ls::{estimate_ls, estimate_ls_covariant, estimate_ls_normal_equations, estimate_pls};
pub use ml::{estimate_ml, log_likelihood, MlEstimate};
pub use positive::{estimate_posgls, estimate_posls, ConstrainedEstimate};
pub use threshold::{
    cross_validate_threshold, estimate_tgls, estimate_tls, threshold_for, BaseEstimator, CvMetric,
    ThresholdEstimate,
};

/// Solver and cross-validation settings shared by the estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Stop iterating once the objective improves by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Number of equispaced threshold constants in `[0, 1]`.
    pub cv_grid: usize,
    pub cv_folds: usize,
    /// Floor on estimated probabilities; `None` means `1/(10·m·d)`.
    pub probability_floor: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 20_000,
            cv_grid: 21,
            cv_folds: 5,
            probability_floor: None,
        }
    }
}

impl EstimatorConfig {
    pub fn grid(&self) -> Vec<f64> {
        match self.cv_grid {
            0 => Vec::new(),
            1 => vec![0.0],
            n => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
        }
    }

    pub fn floor(&self, repetitions: u64, dim: usize) -> f64 {
        self.probability_floor
            .unwrap_or(1.0 / (10.0 * repetitions as f64 * dim as f64))
    }
}

/// The linear-regression view of a design: `f ≈ X β` with `β_i = Tr(τ_i ρ)`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    design: MeasurementDesign,
    x: DMatrix<f64>,
    basis: OperatorBasis,
    normal: Option<Cholesky<f64, Dyn>>,
    reduction: ReductionMaps,
    /// `V* X J`
    reduced_x: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(design: &MeasurementDesign) -> Result<Self> {
        let dm = design::design_matrix(design)?;
        let gram = dm.x.transpose() * &dm.x;
        let eigs = gram.clone().symmetric_eigenvalues();
        let max = eigs.max();
        let complete = max > 0.0 && eigs.min() > 1e-10 * max;
        let normal = if complete { gram.cholesky() } else { None };
        let reduction = design::reduction_maps(design);
        let n = dm.x.ncols();
        let reduced_x = reduction.reduce_rows(&dm.x.columns(0, n - 1).into_owned());
        Ok(Self {
            design: design.clone(),
            x: dm.x,
            basis: dm.basis,
            normal,
            reduction,
            reduced_x,
        })
    }

    pub fn design(&self) -> &MeasurementDesign {
        &self.design
    }

    pub fn dim(&self) -> usize {
        self.design.dim()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn basis(&self) -> &OperatorBasis {
        &self.basis
    }

    pub fn reduction(&self) -> &ReductionMaps {
        &self.reduction
    }

    pub fn reduced_x(&self) -> &DMatrix<f64> {
        &self.reduced_x
    }

    pub fn is_informationally_complete(&self) -> bool {
        self.normal.is_some()
    }

    pub(crate) fn normal_equations(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.normal.as_ref().ok_or(TomoError::NotInformationallyComplete)
    }

    /// Channel whose inverse gives the LS estimate in closed form, if any.
    pub fn channel(&self) -> Option<ChannelKind> {
        match self.design.kind() {
            DesignKind::Pauli { qubits } => Some(ChannelKind::Pauli { qubits }),
            DesignKind::Covariant => Some(ChannelKind::TwoDesign {
                dim: self.design.dim(),
            }),
            DesignKind::RandomBases => None,
        }
    }

    pub(crate) fn check_frequencies(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.x.nrows() {
            return Err(TomoError::DimensionMismatch {
                expected: self.x.nrows(),
                got: f.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_dataset(&self, data: &CountsDataset) -> Result<()> {
        if data.dim() != self.dim() || data.num_settings() != self.design.num_settings() {
            return Err(TomoError::DimensionMismatch {
                expected: self.x.nrows(),
                got: data.counts().len(),
            });
        }
        Ok(())
    }

    /// `β̃ ↦ Σ_{i<d²} β̃_i τ_i + I/d`
    pub fn matrix_from_reduced(&self, reduced: &DVector<f64>) -> CMatrix {
        let d = self.dim();
        let mut beta = DVector::zeros(d * d);
        beta.rows_mut(0, d * d - 1).copy_from(reduced);
        beta[d * d - 1] = 1.0 / (d as f64).sqrt();
        self.basis.matrix(&beta)
    }

    /// Coordinates of `m` without the identity component.
    pub fn reduced_coordinates(&self, m: &CMatrix) -> DVector<f64> {
        let d = self.dim();
        self.basis.coordinates(m).rows(0, d * d - 1).into_owned()
    }
}

/// The estimators exposed by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ls,
    Gls,
    Tls,
    Tgls,
    PosLs,
    PosGls,
    Ml,
    Pls,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Ls,
        Method::Gls,
        Method::Tls,
        Method::Tgls,
        Method::PosLs,
        Method::PosGls,
        Method::Ml,
        Method::Pls,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::Gls => "gls",
            Method::Tls => "tls",
            Method::Tgls => "tgls",
            Method::PosLs => "posls",
            Method::PosGls => "posgls",
            Method::Ml => "ml",
            Method::Pls => "pls",
        }
    }

    /// Whether the output is always a density matrix.
    pub fn is_constrained(&self) -> bool {
        !matches!(self, Method::Ls | Method::Gls)
    }

    pub fn needs_batches(&self) -> bool {
        matches!(self, Method::Tls | Method::Tgls)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = TomoError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| TomoError::Parse(format!("unknown estimator `{s}`")))
    }
}

/// Result of any estimator, with solver diagnostics where they apply.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub method: Method,
    pub matrix: CMatrix,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub threshold_constant: Option<f64>,
}

impl Estimate {
    fn plain(method: Method, matrix: CMatrix) -> Self {
        Self {
            method,
            matrix,
            iterations: None,
            converged: None,
            threshold_constant: None,
        }
    }

    pub fn state(&self) -> Result<DensityMatrix> {
        DensityMatrix::new(self.matrix.clone())
    }
}

/// Runs `method` on the given batches; all but TLS/TGLS use the pooled data.
pub fn estimate(
    method: Method,
    model: &LinearModel,
    batches: &[CountsDataset],
    cv_metric: CvMetric,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    let pooled = CountsDataset::pool(batches)?;
    model.check_dataset(&pooled)?;
    let f = pooled.frequencies();
    let m = pooled.repetitions();
    let covariance = || covariance_estimate(model, f.values(), m, cfg);
    Ok(match method {
        Method::Ls => Estimate::plain(method, estimate_ls(model, f.values())?.into_matrix()),
        Method::Pls => Estimate::plain(method, estimate_pls(model, f.values())?.into_matrix()),
        Method::Gls => Estimate::plain(
            method,
            estimate_gls(model, f.values(), &covariance()?)?.into_matrix(),
        ),
        Method::Tls | Method::Tgls => {
            let out = if method == Method::Tls {
                estimate_tls(model, batches, cv_metric, cfg)?
            } else {
                estimate_tgls(model, batches, cv_metric, cfg)?
            };
            Estimate {
                threshold_constant: Some(out.constant),
                ..Estimate::plain(method, out.state.into_matrix())
            }
        }
        Method::PosLs | Method::PosGls => {
            let out = if method == Method::PosLs {
                estimate_posls(model, f.values(), cfg)?
            } else {
                estimate_posgls(model, f.values(), &covariance()?, cfg)?
            };
            Estimate {
                iterations: Some(out.iterations),
                converged: Some(out.converged),
                ..Estimate::plain(method, out.state.into_matrix())
            }
        }
        Method::Ml => {
            let out = estimate_ml(model, &pooled, cfg)?;
            Estimate {
                iterations: Some(out.iterations),
                converged: Some(out.converged),
                ..Estimate::plain(method, out.state.into_matrix())
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{pauli_design, random_bases_design};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn config_defaults() {
        let cfg = EstimatorConfig::default();
        let grid = cfg.grid();
        assert_eq!(grid.len(), 21);
        assert_eq!(grid[0], 0.0);
        assert_eq!(grid[20], 1.0);
        assert!((cfg.floor(100, 4) - 1.0 / 4000.0).abs() < 1e-18);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("foo".parse::<Method>().is_err());
    }

    #[test]
    fn completeness_detection() {
        let model = LinearModel::new(&pauli_design(2).unwrap()).unwrap();
        assert!(model.is_informationally_complete());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sparse = LinearModel::new(&random_bases_design(4, 2, &mut rng).unwrap()).unwrap();
        assert!(!sparse.is_informationally_complete());
        assert!(matches!(
            estimate_ls(&sparse, &[0.25; 8]),
            Err(TomoError::NotInformationallyComplete)
        ));
    }

    #[test]
    fn reduced_coordinates_round_trip() {
        let model = LinearModel::new(&pauli_design(2).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = crate::qstate::random_full_rank_state(4, 0.0, &mut rng).unwrap();
        let back = model.matrix_from_reduced(&model.reduced_coordinates(rho.matrix()));
        assert!((back - rho.matrix()).norm() < 1e-12);
    }
}
