//! Density matrices, trace-one Hermitian estimates, Haar sampling and the
//! eigenvalue thresholding used by the projected estimators.

use log::debug;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::linalg::{self, c, CMatrix, MatrixJson};

const HERMITIAN_TOL: f64 = 1e-12;
const STATE_TRACE_TOL: f64 = 1e-10;
const ESTIMATE_TRACE_TOL: f64 = 1e-8;
const NEGATIVE_EIGEN_TOL: f64 = 1e-10;
const SPECTRUM_SUM_TOL: f64 = 1e-6;

/// A positive semidefinite, trace-one complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates `matrix` as a state.
    ///
    /// Eigenvalues in `[-1e-10, 0)` are clamped to zero and the trace is restored.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let defect = linalg::hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL {
            return Err(TomoError::StateValidity(format!(
                "not Hermitian (defect {defect:e})"
            )));
        }
        let trace = linalg::trace_re(&matrix);
        if (trace - 1.0).abs() > STATE_TRACE_TOL {
            return Err(TomoError::StateValidity(format!("trace is {trace}")));
        }
        let (values, basis) = linalg::eigh(&matrix);
        let min = values.last().copied().unwrap_or(0.0);
        if min < -NEGATIVE_EIGEN_TOL {
            return Err(TomoError::StateValidity(format!(
                "negative eigenvalue {min:e}"
            )));
        }
        if min < 0.0 {
            return Self::from_spectrum(&values, &basis);
        }
        Ok(Self {
            matrix: linalg::hermitize(&matrix),
        })
    }

    /// Builds `basis · diag(values) · basis*`, clamping round-off negatives.
    pub fn from_spectrum(values: &[f64], basis: &CMatrix) -> Result<Self> {
        if values.len() != basis.ncols() || basis.nrows() != basis.ncols() {
            return Err(TomoError::DimensionMismatch {
                expected: basis.ncols(),
                got: values.len(),
            });
        }
        let mut clamped = Vec::with_capacity(values.len());
        for &v in values {
            if v < -NEGATIVE_EIGEN_TOL {
                return Err(TomoError::StateValidity(format!(
                    "negative eigenvalue {v:e}"
                )));
            }
            clamped.push(v.max(0.0));
        }
        let total: f64 = clamped.iter().sum();
        if (total - 1.0).abs() > STATE_TRACE_TOL {
            return Err(TomoError::StateValidity(format!("trace is {total}")));
        }
        for v in &mut clamped {
            *v /= total;
        }
        Ok(Self {
            matrix: linalg::from_spectrum(&clamped, basis),
        })
    }

    pub fn maximally_mixed(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(TomoError::InvalidDimension(d));
        }
        Ok(Self {
            matrix: linalg::identity(d).unscale(d as f64),
        })
    }

    /// Diagonal state with the given probabilities.
    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        let d = probabilities.len();
        if d == 0 {
            return Err(TomoError::InvalidDimension(d));
        }
        Self::from_spectrum(probabilities, &linalg::identity(d))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum::of(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_product_re(&self.matrix, &self.matrix)
    }

    /// View as an (incidentally positive) Hermitian estimate.
    pub fn to_estimate(&self) -> HermitianEstimate {
        HermitianEstimate {
            matrix: self.matrix.clone(),
        }
    }
}

/// A trace-one Hermitian matrix that may have negative eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianEstimate {
    matrix: CMatrix,
}

impl HermitianEstimate {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let defect = linalg::hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL {
            return Err(TomoError::ContractViolation(format!(
                "estimate not Hermitian (defect {defect:e})"
            )));
        }
        let trace = linalg::trace_re(&matrix);
        if (trace - 1.0).abs() > ESTIMATE_TRACE_TOL {
            return Err(TomoError::ContractViolation(format!(
                "estimate has trace {trace}"
            )));
        }
        Ok(Self {
            matrix: linalg::hermitize(&matrix),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum::of(&self.matrix)
    }
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() == 0 {
        return Err(TomoError::InvalidDimension(0));
    }
    if m.nrows() != m.ncols() {
        return Err(TomoError::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    Ok(())
}

/// Eigenvalues sorted descending together with the matching eigenvectors.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub basis: CMatrix,
}

impl Spectrum {
    pub fn of(m: &CMatrix) -> Self {
        let (values, basis) = linalg::eigh(m);
        Self { values, basis }
    }

    pub fn reconstruct(&self) -> CMatrix {
        linalg::from_spectrum(&self.values, &self.basis)
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> linalg::C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases of
/// `R`'s diagonal folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<CMatrix> {
    if d == 0 {
        return Err(TomoError::InvalidDimension(d));
    }
    let z = CMatrix::from_fn(d, d, |_, _| complex_gaussian(rng));
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            linalg::ONE
        };
        q.column_mut(j).iter_mut().for_each(|x| *x *= phase);
    }
    Ok(q)
}

/// Rank-`r` state with spectrum `(1/r, …, 1/r, 0, …, 0)` in a Haar-random basis.
pub fn random_rank_r_state<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> Result<DensityMatrix> {
    if d == 0 {
        return Err(TomoError::InvalidDimension(d));
    }
    let basis = haar_unitary(d, rng)?;
    DensityMatrix::from_spectrum(&equal_spectrum(d, r)?, &basis)
}

/// `ρ_r = Σ_{i<r} |i⟩⟨i| / r` in the standard basis.
pub fn diagonal_rank_r_state(d: usize, r: usize) -> Result<DensityMatrix> {
    DensityMatrix::diagonal(&equal_spectrum(d, r)?)
}

pub fn equal_spectrum(d: usize, r: usize) -> Result<Vec<f64>> {
    if r == 0 || r > d {
        return Err(TomoError::InvalidRank { rank: r, dim: d });
    }
    let mut values = vec![0.0; d];
    values[..r].fill(1.0 / r as f64);
    Ok(values)
}

/// Full-rank state in a Haar-random basis whose spectrum is
/// `min_eigenvalue + (1 - d·min_eigenvalue)·w` with `w` uniform on the simplex.
pub fn random_full_rank_state<R: Rng + ?Sized>(
    d: usize,
    min_eigenvalue: f64,
    rng: &mut R,
) -> Result<DensityMatrix> {
    if d == 0 {
        return Err(TomoError::InvalidDimension(d));
    }
    if !(0.0..1.0 / d as f64).contains(&min_eigenvalue) {
        return Err(TomoError::Domain(format!(
            "minimum eigenvalue {min_eigenvalue} outside [0, 1/d)"
        )));
    }
    let weights: Vec<f64> = (0..d)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = weights.iter().sum();
    let slack = 1.0 - d as f64 * min_eigenvalue;
    let mut values: Vec<f64> = weights
        .iter()
        .map(|w| min_eigenvalue + slack * w / total)
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let basis = haar_unitary(d, rng)?;
    DensityMatrix::from_spectrum(&values, &basis)
}

/// Thresholds a descending spectrum: repeatedly zero the smallest surviving
/// value if it is below `threshold` and spread the deficit `1 - Σ survivors`
/// evenly over the survivors.
///
/// With `threshold = 0` this is the Euclidean projection onto the simplex.
pub fn project_spectrum(values: &[f64], threshold: f64) -> Result<Vec<f64>> {
    let d = values.len();
    if d == 0 {
        return Err(TomoError::InvalidDimension(0));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(TomoError::ContractViolation(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if values
        .windows(2)
        .any(|w| w[0] < w[1] - 1e-12 * scale)
    {
        return Err(TomoError::ContractViolation(
            "eigenvalues must be sorted descending".into(),
        ));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > SPECTRUM_SUM_TOL {
        return Err(TomoError::Normalization(total));
    }

    let mut out = values.to_vec();
    for p in 1..=d {
        let idx = d - p;
        if out[idx] >= threshold {
            break;
        }
        let survivors = d - p;
        if survivors == 0 {
            // only reachable when every value sits below a threshold above 1/d·Σ
            debug!("thresholding removed every eigenvalue; keeping the largest");
            out[0] = 1.0;
            break;
        }
        out[idx] = 0.0;
        let shift = (1.0 - out[..survivors].iter().sum::<f64>()) / survivors as f64;
        for v in &mut out[..survivors] {
            *v += shift;
        }
    }
    if let Some(low) = out.iter().copied().filter(|&v| v > 0.0).reduce(f64::min) {
        if low < threshold {
            debug!("surviving eigenvalue {low} below threshold {threshold}");
        }
    }
    Ok(out)
}

/// Replaces the spectrum of `est` by its thresholded version, keeping the eigenbasis.
///
/// For `threshold = 0` the result is the Frobenius-nearest density matrix.
pub fn project_to_states(est: &HermitianEstimate, threshold: f64) -> Result<DensityMatrix> {
    project_hermitian(est.matrix(), threshold)
}

pub(crate) fn project_hermitian(m: &CMatrix, threshold: f64) -> Result<DensityMatrix> {
    let spectrum = Spectrum::of(m);
    project_from_spectrum(&spectrum, threshold)
}

pub(crate) fn project_from_spectrum(spectrum: &Spectrum, threshold: f64) -> Result<DensityMatrix> {
    let values = project_spectrum(&spectrum.values, threshold)?;
    DensityMatrix::from_spectrum(&values, &spectrum.basis)
}

/// Blocks of `√N·(estimate − ρ_r)` split at the rank of the reference state.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub rank: usize,
    /// `r × r`
    pub a: CMatrix,
    /// `r × (d − r)`
    pub b: CMatrix,
    /// `(d − r) × (d − r)`
    pub c: CMatrix,
}

impl BlockDecomposition {
    /// Rebuilds `reference + (A B; B* C)/√N`.
    pub fn reassemble(&self, reference: &DensityMatrix, samples: f64) -> CMatrix {
        let d = reference.dim();
        let r = self.rank;
        let mut err = CMatrix::zeros(d, d);
        err.view_mut((0, 0), (r, r)).copy_from(&self.a);
        err.view_mut((0, r), (r, d - r)).copy_from(&self.b);
        err.view_mut((r, 0), (d - r, r)).copy_from(&self.b.adjoint());
        err.view_mut((r, r), (d - r, d - r)).copy_from(&self.c);
        reference.matrix() + err.unscale(samples.sqrt())
    }
}

/// Splits `√N·(estimate − ρ_r)` into the `A`, `B`, `C` blocks.
///
/// `reference` must be diagonal with spectrum `(1/r, …, 1/r, 0, …, 0)`.
pub fn block_decompose(
    est: &CMatrix,
    reference: &DensityMatrix,
    samples: f64,
) -> Result<BlockDecomposition> {
    let d = reference.dim();
    if est.nrows() != d || est.ncols() != d {
        return Err(TomoError::DimensionMismatch {
            expected: d,
            got: est.nrows(),
        });
    }
    let rho = reference.matrix();
    for i in 0..d {
        for j in 0..d {
            if i != j && rho[(i, j)].norm() > 1e-12 {
                return Err(TomoError::ContractViolation(
                    "reference state must be diagonal".into(),
                ));
            }
        }
    }
    let rank = (0..d).take_while(|&i| rho[(i, i)].re > 1e-12).count();
    if rank == 0 || (rank..d).any(|i| rho[(i, i)].re.abs() > 1e-12) {
        return Err(TomoError::ContractViolation(
            "reference spectrum must be (1/r, …, 1/r, 0, …, 0)".into(),
        ));
    }
    let level = 1.0 / rank as f64;
    if (0..rank).any(|i| (rho[(i, i)].re - level).abs() > 1e-10) {
        return Err(TomoError::ContractViolation(
            "reference eigenvalues must be equal".into(),
        ));
    }
    let scaled = (est - rho).scale(samples.sqrt());
    Ok(BlockDecomposition {
        rank,
        a: scaled.view((0, 0), (rank, rank)).into_owned(),
        b: scaled.view((0, rank), (rank, d - rank)).into_owned(),
        c: scaled.view((rank, rank), (d - rank, d - rank)).into_owned(),
    })
}

/// JSON wrapper used by the CLI for estimates and states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateJson(pub MatrixJson);
