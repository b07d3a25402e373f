use log::debug;

use super::{EstimatorConfig, LinearModel};
use crate::design::MeasurementDesign;
use crate::error::{Result, TomoError};
use crate::linalg::{self, CMatrix};
use crate::qstate::DensityMatrix;
use crate::sampling::CountsDataset;

/// Probability floor used when forming the `R` operator.
const R_PROBABILITY_FLOOR: f64 = 1e-14;
const MIN_DILUTION: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MlEstimate {
    pub state: DensityMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood of every accepted iterate, starting at `I/d`.
    pub log_likelihoods: Vec<f64>,
}

fn log_likelihood_from_probs(probs: &[f64], data: &CountsDataset) -> f64 {
    let mut total = 0.0;
    for (&n, &p) in data.counts().iter().zip(probs) {
        if n == 0 {
            continue;
        }
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += n as f64 * p.ln();
    }
    total
}

/// `Σ N(o|s) log Tr(τ P_o^s)` over cells with nonzero counts.
pub fn log_likelihood(tau: &CMatrix, data: &CountsDataset, design: &MeasurementDesign) -> Result<f64> {
    if data.dim() != design.dim() || data.num_settings() != design.num_settings() {
        return Err(TomoError::DimensionMismatch {
            expected: design.dim() * design.num_settings(),
            got: data.counts().len(),
        });
    }
    Ok(log_likelihood_from_probs(&design.probabilities(tau), data))
}

/// Maximum likelihood by the diluted `RρR` iteration.
///
/// Each step moves to `(I + εR̄)τ(I + εR̄)/Tr(·)` with `R̄ = R(τ) − I`,
/// halving `ε` from 1 until the likelihood does not decrease.
pub fn estimate_ml(model: &LinearModel, data: &CountsDataset, cfg: &EstimatorConfig) -> Result<MlEstimate> {
    model.check_dataset(data)?;
    let design = model.design();
    let d = design.dim();
    let total = data.total() as f64;
    let identity = linalg::identity(d);
    let mut tau = identity.unscale(d as f64);
    let mut probs = design.probabilities(&tau);
    let mut ll = log_likelihood_from_probs(&probs, data);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut floored = false;
        let weights: Vec<f64> = data
            .counts()
            .iter()
            .zip(&probs)
            .map(|(&n, &p)| {
                if n == 0 {
                    return 0.0;
                }
                if p < R_PROBABILITY_FLOOR {
                    floored = true;
                }
                n as f64 / p.max(R_PROBABILITY_FLOOR)
            })
            .collect();
        if floored {
            debug!("model probability floored at {R_PROBABILITY_FLOOR:e} in iteration {iterations}");
        }
        let r_bar = design.weighted_projector_sum(&weights)?.unscale(total) - &identity;

        let mut dilution = 1.0;
        let accepted = loop {
            let step = &identity + r_bar.scale(dilution);
            let candidate = &step * &tau * &step;
            let candidate = linalg::hermitize(&candidate.unscale(linalg::trace_re(&candidate)));
            let candidate_probs = design.probabilities(&candidate);
            let candidate_ll = log_likelihood_from_probs(&candidate_probs, data);
            if candidate_ll >= ll {
                break Some((candidate, candidate_probs, candidate_ll));
            }
            dilution *= 0.5;
            if dilution < MIN_DILUTION {
                break None;
            }
        };
        let Some((candidate, candidate_probs, candidate_ll)) = accepted else {
            converged = true;
            break;
        };
        let gain = candidate_ll - ll;
        tau = candidate;
        probs = candidate_probs;
        ll = candidate_ll;
        trace.push(ll);
        if gain < cfg.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        debug!("ML stopped after {iterations} iterations without converging");
    }
    Ok(MlEstimate {
        state: DensityMatrix::new(tau)?,
        iterations,
        converged,
        log_likelihoods: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::pauli_design;
    use crate::qstate;
    use crate::sampling;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_likelihood_of_uniform_counts() {
        let design = pauli_design(2).unwrap();
        let data = CountsDataset::new(4, 9, vec![5; 36]).unwrap();
        let mixed = linalg::identity(4).unscale(4.0);
        let ll = log_likelihood(&mixed, &data, &design).unwrap();
        assert!((ll - 180.0 * 0.25f64.ln()).abs() < 1e-9);

        let zero = qstate::diagonal_rank_r_state(4, 1).unwrap();
        assert_eq!(log_likelihood(zero.matrix(), &data, &design).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn recovers_exact_frequencies() {
        let design = pauli_design(1).unwrap();
        let model = LinearModel::new(&design).unwrap();
        let rho = DensityMatrix::diagonal(&[0.7, 0.3]).unwrap();
        let counts: Vec<u64> = design
            .probabilities(rho.matrix())
            .iter()
            .map(|p| (p * 1000.0).round() as u64)
            .collect();
        let data = CountsDataset::new(2, 3, counts).unwrap();
        let est = estimate_ml(&model, &data, &EstimatorConfig::default()).unwrap();
        assert!(est.converged);
        assert!((est.state.matrix() - rho.matrix()).norm() < 1e-6);
    }

    #[test]
    fn likelihood_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let design = pauli_design(2).unwrap();
        let model = LinearModel::new(&design).unwrap();
        for _ in 0..5 {
            let rho = qstate::random_rank_r_state(4, 1, &mut rng).unwrap();
            let data = sampling::simulate_counts(&rho, &design, 100, &mut rng).unwrap();
            let est = estimate_ml(&model, &data, &EstimatorConfig::default()).unwrap();
            assert!(est.log_likelihoods.windows(2).all(|w| w[1] >= w[0]));
            let final_ll = log_likelihood(est.state.matrix(), &data, &design).unwrap();
            assert!((final_ll - est.log_likelihoods.last().unwrap()).abs() < 1e-6);
        }
    }
}
