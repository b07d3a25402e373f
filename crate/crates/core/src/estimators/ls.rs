use nalgebra::DVector;

use super::LinearModel;
use crate::design::{channel_invert, ChannelKind};
use crate::error::{Result, TomoError};
use crate::qstate::{self, DensityMatrix, HermitianEstimate};
use crate::sampling::CovariantSummary;

/// Least-squares estimate `β̂ = (XᵀX)⁻¹ Xᵀ f`.
///
/// Pauli designs invert the product depolarising channel, which solves the
/// same normal equations exactly. Covariant designs invert the 2-design
/// channel, the large-sample form of the normal equations.
pub fn estimate_ls(model: &LinearModel, f: &[f64]) -> Result<HermitianEstimate> {
    model.check_frequencies(f)?;
    match model.channel() {
        Some(kind) => {
            let k = model.design().num_settings() as f64;
            let averaged = model.design().weighted_projector_sum(f)?.unscale(k);
            HermitianEstimate::new(channel_invert(kind, &averaged)?)
        }
        None => estimate_ls_normal_equations(model, f),
    }
}

/// Least squares by Cholesky solve of the normal equations, for any design.
pub fn estimate_ls_normal_equations(model: &LinearModel, f: &[f64]) -> Result<HermitianEstimate> {
    model.check_frequencies(f)?;
    let chol = model.normal_equations()?;
    let rhs = model.x().transpose() * DVector::from_column_slice(f);
    let beta = chol.solve(&rhs);
    HermitianEstimate::new(model.basis().matrix(&beta))
}

/// `(d + 1) S/N − I` from the summed projectors `S` of `N` covariant shots.
pub fn estimate_ls_covariant(summary: &CovariantSummary) -> Result<HermitianEstimate> {
    if summary.samples == 0 {
        return Err(TomoError::InvalidSize("no samples".into()));
    }
    let d = summary.projector_sum.nrows();
    let mean = summary.projector_sum.unscale(summary.samples as f64);
    HermitianEstimate::new(channel_invert(ChannelKind::TwoDesign { dim: d }, &mean)?)
}

/// Frobenius-nearest density matrix to the LS estimate.
pub fn estimate_pls(model: &LinearModel, f: &[f64]) -> Result<DensityMatrix> {
    qstate::project_to_states(&estimate_ls(model, f)?, 0.0)
}
