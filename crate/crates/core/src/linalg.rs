//! Dense complex matrix helpers shared by the rest of the crate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = Complex { re: 0.0, im: 0.0 };
pub const ONE: C64 = Complex { re: 1.0, im: 0.0 };
pub const I: C64 = Complex { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// `(m + m*) / 2`
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn trace_re(m: &CMatrix) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted descending.
///
/// The input is symmetrized first, so tiny round-off asymmetries are absorbed.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let h = hermitize(m);
    let n = h.nrows();
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut basis = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        basis.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, basis)
}

pub fn eigvalsh(m: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = hermitize(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `basis · diag(values) · basis*`, symmetrized.
pub fn from_spectrum(values: &[f64], basis: &CMatrix) -> CMatrix {
    let mut scaled = basis.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    hermitize(&(scaled * basis.adjoint()))
}

pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// `⟨v|m|v⟩`, real part.
pub fn expectation(m: &CMatrix, v: &CVector) -> f64 {
    v.dotc(&(m * v)).re
}

/// `Re Tr(a b)` without forming the product.
pub fn trace_product_re(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = a[(i, j)];
            let y = b[(j, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Square root of a positive semidefinite matrix via its spectrum.
///
/// Eigenvalues below `-tol` are rejected; everything else negative is clamped to 0,
/// as are positive eigenvalues at the level of eigensolver round-off.
pub fn psd_sqrt(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let (values, basis) = eigh(m);
    let floor = round_off_floor(&values);
    let mut roots = Vec::with_capacity(values.len());
    for v in values {
        if v < -tol {
            return Err(TomoError::Domain(format!("matrix has eigenvalue {v:e}")));
        }
        roots.push(if v <= floor { 0.0 } else { v.sqrt() });
    }
    Ok(from_spectrum(&roots, &basis))
}

/// Eigenvalues at or below this level are indistinguishable from zero.
pub(crate) fn round_off_floor(values: &[f64]) -> f64 {
    let scale = values.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    64.0 * f64::EPSILON * scale
}

/// Wire form of a dense complex matrix: row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let dim = m.nrows();
        let mut re = Vec::with_capacity(dim * dim);
        let mut im = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Self { dim, re, im }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let n = self.dim * self.dim;
        if self.re.len() != n || self.im.len() != n {
            return Err(TomoError::Parse(format!(
                "matrix of dim {} needs {} entries, got re={} im={}",
                self.dim,
                n,
                self.re.len(),
                self.im.len()
            )));
        }
        Ok(CMatrix::from_fn(self.dim, self.dim, |i, j| {
            c(self.re[i * self.dim + j], self.im[i * self.dim + j])
        }))
    }
}
