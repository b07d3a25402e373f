use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{estimate_pls, EstimatorConfig, LinearModel};
use crate::error::{Result, TomoError};
use crate::qstate::HermitianEstimate;

/// Per-setting multinomial covariance `Ω_s = diag(p_s) − p_s p_sᵀ` of a single
/// shot, with its reduced form `Ω̃_s = V_sᵀ Ω_s V_s`.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    dim: usize,
    probabilities: Vec<f64>,
    reduced: Vec<DMatrix<f64>>,
    whitening: Vec<Cholesky<f64, Dyn>>,
}

impl CovarianceModel {
    /// Uses the given probabilities as they are; fails if any reduced block
    /// is not positive definite.
    pub fn from_probabilities(model: &LinearModel, probabilities: Vec<f64>) -> Result<Self> {
        model.check_frequencies(&probabilities)?;
        let d = model.dim();
        let v = &model.reduction().helmert;
        let mut reduced = Vec::new();
        let mut whitening = Vec::new();
        for p in probabilities.chunks(d) {
            let omega = Self::block_of(p);
            let r = v.transpose() * omega * v;
            let chol = r.clone().cholesky().ok_or_else(|| {
                TomoError::Domain("reduced covariance is not positive definite".into())
            })?;
            reduced.push(r);
            whitening.push(chol);
        }
        Ok(Self {
            dim: d,
            probabilities,
            reduced,
            whitening,
        })
    }

    fn block_of(p: &[f64]) -> DMatrix<f64> {
        let pv = DVector::from_column_slice(p);
        DMatrix::from_diagonal(&pv) - &pv * pv.transpose()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_settings(&self) -> usize {
        self.reduced.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `Ω_s`
    pub fn block(&self, s: usize) -> DMatrix<f64> {
        Self::block_of(&self.probabilities[s * self.dim..(s + 1) * self.dim])
    }

    /// `Ω̃_s`
    pub fn reduced_block(&self, s: usize) -> &DMatrix<f64> {
        &self.reduced[s]
    }

    /// `(Σ_s X̃_sᵀ Ω̃_s⁻¹ X̃_s, Σ_s X̃_sᵀ Ω̃_s⁻¹ f̃_s)`
    pub(crate) fn normal_system(&self, model: &LinearModel, f: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.dim;
        let xt = model.reduced_x();
        let ft = model.reduction().reduce_vector(f);
        let n = xt.ncols();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for (s, chol) in self.whitening.iter().enumerate() {
            let rows = s * (d - 1)..(s + 1) * (d - 1);
            let l = chol.l();
            let wx = l
                .solve_lower_triangular(&xt.rows(rows.start, d - 1).into_owned())
                .expect("Cholesky factor is nonsingular");
            let wf = l
                .solve_lower_triangular(&ft.rows(rows.start, d - 1).into_owned())
                .expect("Cholesky factor is nonsingular");
            a += wx.transpose() * &wx;
            b += wx.transpose() * wf;
        }
        (a, b)
    }

    /// `X̃ᵀ Ω̃⁻¹ X̃ / k`, the information matrix of the GLS regression.
    pub fn information(&self, model: &LinearModel) -> DMatrix<f64> {
        let zeros = vec![0.0; self.probabilities.len()];
        let (a, _) = self.normal_system(model, &zeros);
        a / self.num_settings() as f64
    }
}

/// Plug-in covariance from the PLS probabilities, floored at `1/(10·m·d)`
/// (or the configured floor) and renormalised per setting.
pub fn covariance_estimate(
    model: &LinearModel,
    f: &[f64],
    repetitions: u64,
    cfg: &EstimatorConfig,
) -> Result<CovarianceModel> {
    let d = model.dim();
    let pls = estimate_pls(model, f)?;
    let floor = cfg.floor(repetitions, d);
    let mut probs = model.design().probabilities(pls.matrix());
    for block in probs.chunks_mut(d) {
        block.iter_mut().for_each(|p| *p = p.max(floor));
        let total: f64 = block.iter().sum();
        block.iter_mut().for_each(|p| *p /= total);
    }
    CovarianceModel::from_probabilities(model, probs)
}

/// Generalised least squares in the reduced coordinates, with the identity
/// coefficient fixed at `1/√d`.
pub fn estimate_gls(model: &LinearModel, f: &[f64], covariance: &CovarianceModel) -> Result<HermitianEstimate> {
    model.check_frequencies(f)?;
    let (a, b) = covariance.normal_system(model, f);
    let chol = a.cholesky().ok_or(TomoError::NotInformationallyComplete)?;
    HermitianEstimate::new(model.matrix_from_reduced(&chol.solve(&b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::pauli_design;
    use crate::estimators::estimate_ls;
    use crate::qstate;
    use crate::sampling;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_covariance_blocks() {
        let design = pauli_design(2).unwrap();
        let model = LinearModel::new(&design).unwrap();
        let mixed = qstate::DensityMatrix::maximally_mixed(4).unwrap();
        let f = design.probabilities(mixed.matrix());
        let cov = covariance_estimate(&model, &f, 100, &EstimatorConfig::default()).unwrap();
        let expected = DMatrix::from_diagonal_element(4, 4, 0.25) - DMatrix::from_element(4, 4, 1.0 / 16.0);
        for s in 0..9 {
            let block = cov.block(s);
            assert!((&block - &expected).norm() < 1e-12);
            let row_sums = &block * DVector::from_element(4, 1.0);
            assert!(row_sums.norm() < 1e-12);
        }
    }

    #[test]
    fn floored_covariance_is_positive_definite() {
        let design = pauli_design(2).unwrap();
        let model = LinearModel::new(&design).unwrap();
        let pure = qstate::diagonal_rank_r_state(4, 1).unwrap();
        let f = design.probabilities(pure.matrix());
        let m = 100;
        let cfg = EstimatorConfig::default();
        let cov = covariance_estimate(&model, &f, m, &cfg).unwrap();
        let floor = cfg.floor(m, 4);
        for s in 0..9 {
            let min = cov.reduced_block(s).clone().symmetric_eigenvalues().min();
            assert!(min >= floor * (1.0 - floor * 4.0) - 1e-15, "{min}");
        }
    }

    #[test]
    fn noiseless_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let design = pauli_design(2).unwrap();
        let model = LinearModel::new(&design).unwrap();
        let rho = qstate::random_rank_r_state(4, 2, &mut rng).unwrap();
        let f = design.probabilities(rho.matrix());
        let cov = covariance_estimate(&model, &f, 1000, &EstimatorConfig::default()).unwrap();
        let est = estimate_gls(&model, &f, &cov).unwrap();
        assert!((est.matrix() - rho.matrix()).norm() < 1e-9);
    }

    #[test]
    fn identity_weighting_gives_ls() {
        // Uniform probabilities over d outcomes give Ω̃_s = I/d.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let design = pauli_design(2).unwrap();
        let model = LinearModel::new(&design).unwrap();
        let cov = CovarianceModel::from_probabilities(&model, vec![0.25; 36]).unwrap();
        for s in 0..9 {
            let r = cov.reduced_block(s);
            assert!((r - DMatrix::from_diagonal_element(3, 3, 0.25)).norm() < 1e-12);
        }
        let rho = qstate::random_rank_r_state(4, 1, &mut rng).unwrap();
        let data = sampling::simulate_counts(&rho, &design, 30, &mut rng).unwrap();
        let f = data.frequencies();
        let gls = estimate_gls(&model, f.values(), &cov).unwrap();
        let ls = estimate_ls(&model, f.values()).unwrap();
        assert!((gls.matrix() - ls.matrix()).norm() < 1e-10);
    }
}
