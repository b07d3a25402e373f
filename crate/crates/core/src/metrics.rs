//! Error functions between states, classical Fisher information of a design
//! and the Fisher-predicted asymptotic risk.

use log::warn;
use nalgebra::DMatrix;

use crate::design::{MeasurementDesign, OperatorBasis};
use crate::error::{Result, TomoError};
use crate::linalg::{self, c, CMatrix, I, ONE};
use crate::qstate::DensityMatrix;

const PSD_TOL: f64 = 1e-10;
/// Outcomes with probability at or below this carry no Fisher information.
pub const FISHER_PROBABILITY_FLOOR: f64 = 1e-12;

fn check_same_dim(a: &CMatrix, b: &CMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TomoError::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    Ok(())
}

/// `Tr[(a − b)²]`
pub fn frobenius_sq(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok((a - b).norm_squared())
}

/// `Tr|a − b|`
pub fn trace_norm(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(linalg::eigvalsh(&(a - b)).iter().map(|v| v.abs()).sum())
}

/// Largest absolute eigenvalue of `a − b`.
pub fn operator_norm(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(linalg::eigvalsh(&(a - b))
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// `Tr√(√b a √b) = ‖√a √b‖₁`
pub fn fidelity_root(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    let sa = linalg::psd_sqrt(a, PSD_TOL)?;
    let sb = linalg::psd_sqrt(b, PSD_TOL)?;
    Ok((sa * sb).singular_values().iter().sum())
}

/// `2(1 − Tr√(√ρ ρ̂ √ρ))`, clamped to `[0, 2]`.
pub fn bures_sq(estimate: &DensityMatrix, truth: &DensityMatrix) -> Result<f64> {
    let f = fidelity_root(estimate.matrix(), truth.matrix())?;
    Ok((2.0 * (1.0 - f)).clamp(0.0, 2.0))
}

fn check_distribution(values: &[f64]) -> Result<()> {
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if values.windows(2).any(|w| w[0] < w[1] - 1e-12 * scale) {
        return Err(TomoError::ContractViolation(
            "spectrum must be sorted descending".into(),
        ));
    }
    if let Some(&v) = values.iter().find(|&&v| v < -PSD_TOL) {
        return Err(TomoError::Domain(format!("negative weight {v:e}")));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(TomoError::Normalization(total));
    }
    Ok(())
}

/// `2(1 − Σ √(λ̂_i λ_i))` between spectra sorted descending.
pub fn hellinger_sq(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(TomoError::DimensionMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    check_distribution(estimate)?;
    check_distribution(truth)?;
    let overlap: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a.max(0.0) * b.max(0.0)).sqrt())
        .sum();
    Ok((2.0 * (1.0 - overlap)).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParametrisationKind {
    /// All `d² − 1` directions in the eigenbasis of the reference state:
    /// real parts of `δ_ij` (`i < j`), imaginary parts, then `δ_ii` for `i ≥ 2`
    /// with `δ_11 = −Σ_{i≥2} δ_ii`.
    FullRank,
    /// Directions keeping the rank: traceless `A` on the leading `r`
    /// eigenvectors (same layout as `FullRank`) followed by the real and
    /// imaginary parts of the `r × (d − r)` block `B`.
    RankR(usize),
    /// Coordinates `β_i = Tr(τ_i ρ)`, `i < d²`, of the operator basis; the
    /// identity coordinate is fixed by the trace.
    OperatorBasis,
}

/// Affine chart `θ ↦ ρ + δρ(θ)` around a reference state.
#[derive(Debug, Clone)]
pub struct LocalParametrisation {
    kind: ParametrisationKind,
    reference: DensityMatrix,
    /// Columns are the eigenvectors of the reference, descending eigenvalues.
    frame: CMatrix,
    /// `∂ρ/∂θ_a` in the computational basis.
    tangents: Vec<CMatrix>,
}

/// Unit-norm matrix units of a traceless Hermitian block of size `n`, laid out
/// as real off-diagonal, imaginary off-diagonal, then diagonal (`E_kk − E_00`).
fn hermitian_block_units(n: usize) -> Vec<CMatrix> {
    let mut units = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut m = CMatrix::zeros(n, n);
            m[(i, j)] = ONE;
            m[(j, i)] = ONE;
            units.push(m);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut m = CMatrix::zeros(n, n);
            m[(i, j)] = I;
            m[(j, i)] = -I;
            units.push(m);
        }
    }
    for k in 1..n {
        let mut m = CMatrix::zeros(n, n);
        m[(k, k)] = ONE;
        m[(0, 0)] = -ONE;
        units.push(m);
    }
    units
}

impl LocalParametrisation {
    pub fn new(kind: ParametrisationKind, reference: &DensityMatrix) -> Result<Self> {
        let d = reference.dim();
        let frame = reference.spectrum().basis;
        let rotate = |m: &CMatrix| linalg::hermitize(&(&frame * m * frame.adjoint()));
        let tangents: Vec<CMatrix> = match kind {
            ParametrisationKind::FullRank => hermitian_block_units(d).iter().map(rotate).collect(),
            ParametrisationKind::RankR(r) => {
                if r == 0 || r > d {
                    return Err(TomoError::InvalidRank { rank: r, dim: d });
                }
                let mut units: Vec<CMatrix> = hermitian_block_units(r)
                    .into_iter()
                    .map(|a| {
                        let mut m = CMatrix::zeros(d, d);
                        m.view_mut((0, 0), (r, r)).copy_from(&a);
                        m
                    })
                    .collect();
                for phase in [ONE, I] {
                    for i in 0..r {
                        for j in r..d {
                            let mut m = CMatrix::zeros(d, d);
                            m[(i, j)] = phase;
                            m[(j, i)] = phase.conj();
                            units.push(m);
                        }
                    }
                }
                units.iter().map(rotate).collect()
            }
            ParametrisationKind::OperatorBasis => {
                let basis = OperatorBasis::new(d)?;
                basis.elements()[..d * d - 1].to_vec()
            }
        };
        Ok(Self {
            kind,
            reference: reference.clone(),
            frame,
            tangents,
        })
    }

    pub fn kind(&self) -> ParametrisationKind {
        self.kind
    }

    pub fn reference(&self) -> &DensityMatrix {
        &self.reference
    }

    pub fn dim(&self) -> usize {
        self.reference.dim()
    }

    pub fn num_params(&self) -> usize {
        self.tangents.len()
    }

    pub fn tangents(&self) -> &[CMatrix] {
        &self.tangents
    }

    /// `δρ(θ) = Σ θ_a ∂ρ/∂θ_a`
    pub fn displacement(&self, theta: &[f64]) -> Result<CMatrix> {
        if theta.len() != self.tangents.len() {
            return Err(TomoError::DimensionMismatch {
                expected: self.tangents.len(),
                got: theta.len(),
            });
        }
        let d = self.dim();
        let mut acc = CMatrix::zeros(d, d);
        for (t, &x) in self.tangents.iter().zip(theta) {
            acc += t.scale(x);
        }
        Ok(acc)
    }

    pub fn frame(&self) -> &CMatrix {
        &self.frame
    }
}

/// Classical Fisher information averaged over settings.
#[derive(Debug, Clone)]
pub struct FisherInformation {
    pub matrix: DMatrix<f64>,
    /// Set when the matrix is numerically singular (under-complete design).
    pub singular: bool,
}

/// `I_ab = (1/k) Σ_s Σ_{o: p > 1e-12} ∂_a p(o|s) ∂_b p(o|s) / p(o|s)`.
pub fn fisher_information(
    rho: &DensityMatrix,
    design: &MeasurementDesign,
    param: &LocalParametrisation,
) -> Result<FisherInformation> {
    if rho.dim() != design.dim() || param.dim() != design.dim() {
        return Err(TomoError::DimensionMismatch {
            expected: design.dim(),
            got: rho.dim(),
        });
    }
    let probs = design.probabilities(rho.matrix());
    let derivs: Vec<Vec<f64>> = param
        .tangents()
        .iter()
        .map(|t| design.probabilities(t))
        .collect();
    let n = param.num_params();
    let mut matrix = DMatrix::zeros(n, n);
    for (row, &p) in probs.iter().enumerate() {
        if p <= FISHER_PROBABILITY_FLOOR {
            continue;
        }
        for a in 0..n {
            let da = derivs[a][row] / p;
            if da == 0.0 {
                continue;
            }
            for b in a..n {
                matrix[(a, b)] += da * derivs[b][row];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            matrix[(a, b)] = matrix[(b, a)];
        }
    }
    matrix /= design.num_settings() as f64;
    let singular = is_singular(&matrix);
    Ok(FisherInformation { matrix, singular })
}

fn is_singular(m: &DMatrix<f64>) -> bool {
    let sv = m.singular_values();
    let max = sv.max();
    max == 0.0 || sv.min() <= 1e-12 * max * m.nrows() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMetric {
    Frobenius,
    /// Bures metric at the maximally mixed state.
    BuresMixed,
}

/// Quadratic form `G` with `d(θ̂, θ) ≈ (θ̂ − θ)ᵀ G (θ̂ − θ)`.
pub fn weight_matrix(metric: WeightMetric, param: &LocalParametrisation) -> Result<DMatrix<f64>> {
    let frobenius = frobenius_weight(param);
    match metric {
        WeightMetric::Frobenius => Ok(frobenius),
        WeightMetric::BuresMixed => {
            let d = param.dim();
            let mixed = linalg::identity(d).unscale(d as f64);
            if (param.reference().matrix() - mixed).norm() > 1e-10 {
                return Err(TomoError::Unsupported(
                    "Bures weight is only available at the maximally mixed state".into(),
                ));
            }
            Ok(frobenius * (d as f64 / 4.0))
        }
    }
}

/// Weight of the off-diagonal and diagonal coordinates of a traceless block.
fn block_weight(g: &mut DMatrix<f64>, offset: usize, n: usize) {
    let offdiag = n * (n - 1);
    for a in 0..offdiag {
        g[(offset + a, offset + a)] = 2.0;
    }
    let diag = offset + offdiag;
    for a in 0..n - 1 {
        for b in 0..n - 1 {
            g[(diag + a, diag + b)] = if a == b { 2.0 } else { 1.0 };
        }
    }
}

fn frobenius_weight(param: &LocalParametrisation) -> DMatrix<f64> {
    let n = param.num_params();
    let d = param.dim();
    let mut g = DMatrix::zeros(n, n);
    match param.kind() {
        ParametrisationKind::FullRank => block_weight(&mut g, 0, d),
        ParametrisationKind::RankR(r) => {
            block_weight(&mut g, 0, r);
            for a in r * r - 1..n {
                g[(a, a)] = 2.0;
            }
        }
        ParametrisationKind::OperatorBasis => g.fill_with_identity(),
    }
    g
}

/// `Tr(I⁻¹ G)/N`, falling back to the pseudo-inverse when `I` is singular.
pub fn predicted_risk(information: &DMatrix<f64>, weight: &DMatrix<f64>, samples: f64) -> Result<f64> {
    if information.shape() != weight.shape() || !information.is_square() {
        return Err(TomoError::DimensionMismatch {
            expected: information.nrows(),
            got: weight.nrows(),
        });
    }
    if !(samples > 0.0) {
        return Err(TomoError::Domain(format!("sample count {samples} must be positive")));
    }
    let inverse = match information.clone().cholesky() {
        Some(chol) if !is_singular(information) => chol.inverse(),
        _ => {
            warn!("Fisher information is singular; using the pseudo-inverse");
            information
                .clone()
                .pseudo_inverse(1e-12 * information.norm())
                .map_err(|e| TomoError::Domain(e.to_string()))?
        }
    };
    Ok((inverse * weight).trace() / samples)
}

/// `ρ(θ)` assembled from its blocks in the eigenframe; independent of the
/// tangent construction and used as a finite-difference oracle.
pub fn state_at(param: &LocalParametrisation, theta: &[f64]) -> Result<CMatrix> {
    if theta.len() != param.num_params() {
        return Err(TomoError::DimensionMismatch {
            expected: param.num_params(),
            got: theta.len(),
        });
    }
    let d = param.dim();
    let traceless = |n: usize, coords: &[f64]| -> CMatrix {
        let pairs = n * (n - 1) / 2;
        let mut m = CMatrix::zeros(n, n);
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                let z = c(coords[idx], coords[pairs + idx]);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
                idx += 1;
            }
        }
        let diag = &coords[2 * pairs..];
        m[(0, 0)] = c(-diag.iter().sum::<f64>(), 0.0);
        for (k, &v) in diag.iter().enumerate() {
            m[(k + 1, k + 1)] = c(v, 0.0);
        }
        m
    };
    let shift = match param.kind() {
        ParametrisationKind::FullRank => traceless(d, theta),
        ParametrisationKind::RankR(r) => {
            let mut m = CMatrix::zeros(d, d);
            let a_len = r * r - 1;
            m.view_mut((0, 0), (r, r)).copy_from(&traceless(r, &theta[..a_len]));
            let b = &theta[a_len..];
            let cols = d - r;
            for i in 0..r {
                for j in 0..cols {
                    let z = c(b[i * cols + j], b[r * cols + i * cols + j]);
                    m[(i, r + j)] = z;
                    m[(r + j, i)] = z.conj();
                }
            }
            m
        }
        ParametrisationKind::OperatorBasis => {
            let basis = OperatorBasis::new(d)?;
            let mut beta = basis.coordinates(param.reference().matrix());
            for (a, &x) in theta.iter().enumerate() {
                beta[a] += x;
            }
            return Ok(basis.matrix(&beta));
        }
    };
    let frame = param.frame();
    Ok(param.reference().matrix() + frame * shift * frame.adjoint())
}
