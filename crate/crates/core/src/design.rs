//! Measurement designs, the operator basis used for vectorisation, the design
//! matrix, depolarising channels and the reduction isometries.
//!
//! Ordering conventions:
//! - Pauli settings run over `{x, y, z}^n` lexicographically, first qubit most
//!   significant.
//! - Outcomes within a setting run over `{+1, -1}^n` lexicographically, so
//!   outcome index bit `n-1-j` is 1 when qubit `j` reads `-1`.
//! - Pauli operator words run over `{I, x, y, z}^n` lexicographically with the
//!   all-identity word moved to the end.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::linalg::{self, c, CMatrix, CVector, MatrixJson, I, ONE, ZERO};
use crate::qstate;

pub const MAX_QUBITS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    Pauli { qubits: usize },
    RandomBases,
    /// Single-shot Haar bases realised by covariant sampling.
    Covariant,
}

/// An ordered list of orthonormal bases; column `o` of setting `s` is the
/// vector whose projector is `P_o^s`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementDesign {
    dim: usize,
    kind: DesignKind,
    seed: Option<u64>,
    settings: Vec<CMatrix>,
}

fn single_qubit_basis(axis: usize) -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match axis {
        0 => CMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]),
        1 => CMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), I * h, -I * h]),
        _ => linalg::identity(2),
    }
}

/// Base-`radix` digits of `index`, most significant first.
pub(crate) fn digits(mut index: usize, radix: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = index % radix;
        index /= radix;
    }
    out
}

/// Number of qubits if `d` is a power of two.
pub fn qubit_count(d: usize) -> Option<usize> {
    (d.is_power_of_two() && d >= 2).then(|| d.trailing_zeros() as usize)
}

/// Tensor products of single-qubit Pauli eigenbases.
pub fn pauli_design(n: usize) -> Result<MeasurementDesign> {
    if !(1..=MAX_QUBITS).contains(&n) {
        return Err(TomoError::InvalidSize(format!(
            "qubit count {n} outside 1..={MAX_QUBITS}"
        )));
    }
    let singles: Vec<CMatrix> = (0..3).map(single_qubit_basis).collect();
    let k = 3usize.pow(n as u32);
    let settings = (0..k)
        .map(|s| {
            digits(s, 3, n)
                .iter()
                .fold(CMatrix::identity(1, 1), |acc, &a| linalg::kron(&acc, &singles[a]))
        })
        .collect();
    Ok(MeasurementDesign {
        dim: 1 << n,
        kind: DesignKind::Pauli { qubits: n },
        seed: None,
        settings,
    })
}

/// `k` independent Haar-random bases.
pub fn random_bases_design<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<MeasurementDesign> {
    if d < 2 {
        return Err(TomoError::InvalidDimension(d));
    }
    if k == 0 {
        return Err(TomoError::InvalidSize("at least one setting is required".into()));
    }
    let settings = (0..k)
        .map(|_| qstate::haar_unitary(d, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementDesign {
        dim: d,
        kind: DesignKind::RandomBases,
        seed: None,
        settings,
    })
}

impl MeasurementDesign {
    /// Wraps explicit bases; each must be a `d × d` unitary.
    pub fn from_bases(kind: DesignKind, settings: Vec<CMatrix>) -> Result<Self> {
        let first = settings
            .first()
            .ok_or_else(|| TomoError::InvalidSize("design has no settings".into()))?;
        let dim = first.nrows();
        if dim < 2 {
            return Err(TomoError::InvalidDimension(dim));
        }
        for u in &settings {
            if u.nrows() != dim || u.ncols() != dim {
                return Err(TomoError::DimensionMismatch {
                    expected: dim,
                    got: u.nrows().max(u.ncols()),
                });
            }
            let defect = (u.adjoint() * u - linalg::identity(dim)).norm();
            if defect > 1e-10 {
                return Err(TomoError::ContractViolation(format!(
                    "setting is not unitary (defect {defect:e})"
                )));
            }
        }
        if let DesignKind::Pauli { qubits } = kind {
            if dim != 1 << qubits || settings.len() != 3usize.pow(qubits as u32) {
                return Err(TomoError::InvalidSize(
                    "Pauli design needs 3^n settings of dimension 2^n".into(),
                ));
            }
        }
        Ok(Self {
            dim,
            kind,
            seed: None,
            settings,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn num_settings(&self) -> usize {
        self.settings.len()
    }

    pub fn settings(&self) -> &[CMatrix] {
        &self.settings
    }

    pub fn basis(&self, s: usize) -> &CMatrix {
        &self.settings[s]
    }

    pub fn basis_vector(&self, s: usize, o: usize) -> CVector {
        self.settings[s].column(o).into_owned()
    }

    pub fn projector(&self, s: usize, o: usize) -> CMatrix {
        linalg::outer(&self.basis_vector(s, o))
    }

    /// `Tr(m P_o^s)` for all outcomes, setting-major.
    pub fn probabilities(&self, m: &CMatrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * self.settings.len());
        for u in &self.settings {
            let mu = m * u;
            for o in 0..self.dim {
                out.push(u.column(o).dotc(&mu.column(o)).re);
            }
        }
        out
    }

    /// `Σ_{s,o} w(o|s) P_o^s` for a setting-major weight vector.
    pub fn weighted_projector_sum(&self, weights: &[f64]) -> Result<CMatrix> {
        let d = self.dim;
        if weights.len() != d * self.settings.len() {
            return Err(TomoError::DimensionMismatch {
                expected: d * self.settings.len(),
                got: weights.len(),
            });
        }
        let mut acc = CMatrix::zeros(d, d);
        for (s, u) in self.settings.iter().enumerate() {
            let mut scaled = u.clone();
            for o in 0..d {
                scaled.column_mut(o).scale_mut(weights[s * d + o]);
            }
            acc += scaled * u.adjoint();
        }
        Ok(linalg::hermitize(&acc))
    }

    pub fn to_json(&self) -> DesignJson {
        let (kind, qubits) = match self.kind {
            DesignKind::Pauli { qubits } => ("pauli", Some(qubits)),
            DesignKind::RandomBases => ("random", None),
            DesignKind::Covariant => ("covariant", None),
        };
        DesignJson {
            d: self.dim,
            kind: kind.to_string(),
            qubits,
            seed: self.seed,
            settings: self.settings.iter().map(MatrixJson::from_matrix).collect(),
        }
    }

    pub fn from_json(json: &DesignJson) -> Result<Self> {
        let kind = match json.kind.as_str() {
            "pauli" => DesignKind::Pauli {
                qubits: json
                    .qubits
                    .or_else(|| qubit_count(json.d))
                    .ok_or_else(|| TomoError::Parse("Pauli design needs d = 2^n".into()))?,
            },
            "random" => DesignKind::RandomBases,
            "covariant" => DesignKind::Covariant,
            other => return Err(TomoError::Parse(format!("unknown design kind `{other}`"))),
        };
        let settings = json
            .settings
            .iter()
            .map(MatrixJson::to_matrix)
            .collect::<Result<Vec<_>>>()?;
        let design = Self::from_bases(kind, settings)?;
        if design.dim != json.d {
            return Err(TomoError::DimensionMismatch {
                expected: json.d,
                got: design.dim,
            });
        }
        Ok(Self {
            seed: json.seed,
            ..design
        })
    }
}

/// Serialised design: `{d, kind, seed?, settings: [unitary matrices]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignJson {
    pub d: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubits: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub settings: Vec<MatrixJson>,
}

/// Orthonormal Hermitian operator basis `{τ_i}` with `τ_{d²} = I/√d` last.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    dim: usize,
    elements: Vec<CMatrix>,
    /// Per-element Pauli word (`0 = I, 1 = x, 2 = y, 3 = z`) when `d = 2^n`.
    words: Option<Vec<Vec<usize>>>,
}

fn pauli_matrix(letter: usize) -> CMatrix {
    match letter {
        0 => linalg::identity(2),
        1 => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        2 => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        _ => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    }
}

impl OperatorBasis {
    /// Normalised Pauli words for `d = 2^n`, generalised Gell-Mann matrices otherwise.
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(TomoError::InvalidDimension(d));
        }
        match qubit_count(d) {
            Some(n) => Ok(Self::pauli(n)),
            None => Ok(Self::gell_mann(d)),
        }
    }

    fn pauli(n: usize) -> Self {
        let d = 1usize << n;
        let norm = 1.0 / (d as f64).sqrt();
        let mut words: Vec<Vec<usize>> = (1..d * d).map(|w| digits(w, 4, n)).collect();
        words.push(vec![0; n]);
        let elements = words
            .iter()
            .map(|w| {
                w.iter()
                    .fold(CMatrix::identity(1, 1), |acc, &l| linalg::kron(&acc, &pauli_matrix(l)))
                    .scale(norm)
            })
            .collect();
        Self {
            dim: d,
            elements,
            words: Some(words),
        }
    }

    fn gell_mann(d: usize) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut elements = Vec::with_capacity(d * d);
        for j in 0..d {
            for k in j + 1..d {
                let mut sym = CMatrix::zeros(d, d);
                sym[(j, k)] = c(h, 0.0);
                sym[(k, j)] = c(h, 0.0);
                elements.push(sym);
                let mut asym = CMatrix::zeros(d, d);
                asym[(j, k)] = c(0.0, -h);
                asym[(k, j)] = c(0.0, h);
                elements.push(asym);
            }
        }
        for l in 1..d {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut diag = CMatrix::zeros(d, d);
            for i in 0..l {
                diag[(i, i)] = c(norm, 0.0);
            }
            diag[(l, l)] = c(-(l as f64) * norm, 0.0);
            elements.push(diag);
        }
        elements.push(linalg::identity(d).unscale((d as f64).sqrt()));
        Self {
            dim: d,
            elements,
            words: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn pauli_words(&self) -> Option<&[Vec<usize>]> {
        self.words.as_deref()
    }

    /// `β_i = Tr(τ_i m)`; the real part, as `m` is expected Hermitian.
    pub fn coordinates(&self, m: &CMatrix) -> DVector<f64> {
        DVector::from_iterator(
            self.elements.len(),
            self.elements.iter().map(|t| linalg::trace_product_re(t, m)),
        )
    }

    /// `Σ β_i τ_i`
    pub fn matrix(&self, beta: &DVector<f64>) -> CMatrix {
        let mut acc = CMatrix::zeros(self.dim, self.dim);
        for (t, &b) in self.elements.iter().zip(beta.iter()) {
            acc += t.scale(b);
        }
        linalg::hermitize(&acc)
    }
}

/// `X` with `X_{(o|s),i} = Tr(τ_i P_o^s)`, rows setting-major.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub basis: OperatorBasis,
}

/// Builds the design matrix; Pauli designs use the product structure of the
/// expectation of a Pauli word in a product eigenstate.
pub fn design_matrix(design: &MeasurementDesign) -> Result<DesignMatrix> {
    let d = design.dim();
    let k = design.num_settings();
    let basis = OperatorBasis::new(d)?;
    let mut x = DMatrix::zeros(k * d, d * d);
    match (design.kind(), basis.pauli_words()) {
        (DesignKind::Pauli { qubits }, Some(words)) => {
            let norm = 1.0 / (d as f64).sqrt();
            for s in 0..k {
                let axes = digits(s, 3, qubits);
                for o in 0..d {
                    let signs = digits(o, 2, qubits);
                    for (i, word) in words.iter().enumerate() {
                        let mut value = norm;
                        for q in 0..qubits {
                            match word[q] {
                                0 => {}
                                letter if letter == axes[q] + 1 => {
                                    if signs[q] == 1 {
                                        value = -value;
                                    }
                                }
                                _ => {
                                    value = 0.0;
                                    break;
                                }
                            }
                        }
                        x[(s * d + o, i)] = value;
                    }
                }
            }
        }
        _ => {
            for (s, u) in design.settings().iter().enumerate() {
                let ua = u.adjoint();
                for (i, t) in basis.elements().iter().enumerate() {
                    let rotated = &ua * t * u;
                    for o in 0..d {
                        x[(s * d + o, i)] = rotated[(o, o)].re;
                    }
                }
            }
        }
    }
    Ok(DesignMatrix { x, basis })
}

/// Depolarising channels whose inverses give closed-form LS estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// `ρ ↦ (ρ + Tr(ρ) I) / (d + 1)`
    TwoDesign { dim: usize },
    /// `ρ ↦ ρ/3 + (2/3) Tr(ρ) I/2` on every qubit.
    Pauli { qubits: usize },
}

impl ChannelKind {
    pub fn dim(&self) -> usize {
        match *self {
            ChannelKind::TwoDesign { dim } => dim,
            ChannelKind::Pauli { qubits } => 1 << qubits,
        }
    }

    fn check(&self, m: &CMatrix) -> Result<()> {
        let d = self.dim();
        if m.nrows() != d || m.ncols() != d {
            return Err(TomoError::DimensionMismatch {
                expected: d,
                got: m.nrows(),
            });
        }
        Ok(())
    }
}

/// `Tr_j(z) ⊗ I_j` with the identity re-inserted at qubit `j`.
fn partial_trace_replace(z: &CMatrix, qubits: usize, j: usize) -> CMatrix {
    let d = z.nrows();
    let bit = 1usize << (qubits - 1 - j);
    CMatrix::from_fn(d, d, |a, b| {
        if (a & bit) != (b & bit) {
            return ZERO;
        }
        z[(a & !bit, b & !bit)] + z[(a | bit, b | bit)]
    })
}

pub fn channel_apply(kind: ChannelKind, m: &CMatrix) -> Result<CMatrix> {
    kind.check(m)?;
    match kind {
        ChannelKind::TwoDesign { dim } => {
            let tr = linalg::trace_re(m);
            let mut out = m.clone();
            for i in 0..dim {
                out[(i, i)] += c(tr, 0.0);
            }
            Ok(out.unscale(dim as f64 + 1.0))
        }
        ChannelKind::Pauli { qubits } => {
            let mut z = m.clone();
            for j in 0..qubits {
                z = (z.clone() + partial_trace_replace(&z, qubits, j)).unscale(3.0);
            }
            Ok(z)
        }
    }
}

pub fn channel_invert(kind: ChannelKind, m: &CMatrix) -> Result<CMatrix> {
    kind.check(m)?;
    match kind {
        ChannelKind::TwoDesign { dim } => {
            let tr = linalg::trace_re(m);
            let mut out = m.scale(dim as f64 + 1.0);
            for i in 0..dim {
                out[(i, i)] -= c(tr, 0.0);
            }
            Ok(out)
        }
        ChannelKind::Pauli { qubits } => {
            let mut z = m.clone();
            for j in 0..qubits {
                z = z.scale(3.0) - partial_trace_replace(&z, qubits, j);
            }
            Ok(z)
        }
    }
}

/// Per-setting Helmert isometry `V_s` (orthogonal to the all-ones vector) and
/// the embedding `J` that drops the last vectorisation coordinate.
#[derive(Debug, Clone)]
pub struct ReductionMaps {
    /// `d × (d − 1)`, shared by every setting.
    pub helmert: DMatrix<f64>,
    pub settings: usize,
}

/// Column `j` has `1/√((j+1)(j+2))` in rows `0..=j` and `-(j+1)/√((j+1)(j+2))` in row `j+1`.
pub fn helmert(d: usize) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(d, d.saturating_sub(1));
    for j in 0..d.saturating_sub(1) {
        let norm = (((j + 1) * (j + 2)) as f64).sqrt();
        for i in 0..=j {
            v[(i, j)] = 1.0 / norm;
        }
        v[(j + 1, j)] = -((j + 1) as f64) / norm;
    }
    v
}

pub fn reduction_maps(design: &MeasurementDesign) -> ReductionMaps {
    ReductionMaps {
        helmert: helmert(design.dim()),
        settings: design.num_settings(),
    }
}

impl ReductionMaps {
    pub fn dim(&self) -> usize {
        self.helmert.nrows()
    }

    /// `V* y` for a setting-major vector (or the rows of a matrix).
    pub fn reduce_rows(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(self.settings * (d - 1), y.ncols());
        let vt = self.helmert.transpose();
        for s in 0..self.settings {
            let block = &vt * y.rows(s * d, d);
            out.rows_mut(s * (d - 1), d - 1).copy_from(&block);
        }
        out
    }

    pub fn reduce_vector(&self, y: &[f64]) -> DVector<f64> {
        let m = DMatrix::from_column_slice(y.len(), 1, y);
        DVector::from_column_slice(self.reduce_rows(&m).as_slice())
    }

    /// Dense block-diagonal `V`, `kd × k(d − 1)`.
    pub fn dense_v(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut v = DMatrix::zeros(self.settings * d, self.settings * (d - 1));
        for s in 0..self.settings {
            v.view_mut((s * d, s * (d - 1)), (d, d - 1)).copy_from(&self.helmert);
        }
        v
    }

    /// Dense `J`, `d² × (d² − 1)`.
    pub fn dense_j(&self) -> DMatrix<f64> {
        let n = self.dim() * self.dim();
        DMatrix::identity(n, n - 1)
    }
}
