use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tomo_core::design::pauli_design;
use tomo_core::estimators::*;
use tomo_core::metrics::{self, LocalParametrisation, ParametrisationKind};
use tomo_core::qstate::{self, DensityMatrix};
use tomo_core::sampling::{self, CountsDataset};

/// Smallest win count out of 100 with one-sided binomial tail below 0.05.
const SIGN_TEST_WINS: usize = 59;

fn random_frequencies(d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut f = Vec::with_capacity(d * k);
    for _ in 0..k {
        let w: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let t: f64 = w.iter().sum();
        f.extend(w.iter().map(|x| x / t));
    }
    f
}

fn batches(rho: &DensityMatrix, model: &LinearModel, m: u64, rng: &mut ChaCha8Rng) -> Vec<CountsDataset> {
    (0..5)
        .map(|_| sampling::simulate_counts(rho, model.design(), m / 5, rng).unwrap())
        .collect()
}

#[test]
fn qubit_pauli_map_is_isometric_on_traceless_part() {
    let design = pauli_design(1).unwrap();
    let model = LinearModel::new(&design).unwrap();
    let xj = model.x().columns(0, 3).into_owned();
    let gram = xj.transpose() * xj;
    let scale = gram[(0, 0)];
    assert!((gram - DMatrix::identity(3, 3) * scale).norm() < 1e-12);
}

#[test]
fn posls_equals_pls_on_qubit_pauli() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let design = pauli_design(1).unwrap();
    let model = LinearModel::new(&design).unwrap();
    let cfg = EstimatorConfig::default();
    for _ in 0..100 {
        let f = random_frequencies(2, 3, &mut rng);
        let posls = estimate_posls(&model, &f, &cfg).unwrap();
        let pls = estimate_pls(&model, &f).unwrap();
        assert!((posls.state.matrix() - pls.matrix()).norm() < 1e-6);
    }
}

#[test]
fn gls_information_equals_fisher_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let design = pauli_design(2).unwrap();
    let model = LinearModel::new(&design).unwrap();
    for _ in 0..3 {
        let rho = qstate::random_full_rank_state(4, 0.05, &mut rng).unwrap();
        let cov = CovarianceModel::from_probabilities(&model, design.probabilities(rho.matrix())).unwrap();
        let gls = cov.information(&model);
        let param = LocalParametrisation::new(ParametrisationKind::OperatorBasis, &rho).unwrap();
        let fisher = metrics::fisher_information(&rho, &design, &param).unwrap().matrix;
        assert!((&gls - &fisher).norm() / fisher.norm() < 1e-8);
    }
}

#[test]
fn gls_beats_ls_on_full_rank_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let design = pauli_design(2).unwrap();
    let model = LinearModel::new(&design).unwrap();
    let cfg = EstimatorConfig::default();
    let rho = qstate::random_full_rank_state(4, 0.02, &mut rng).unwrap();
    let m = 10_000;
    let mut wins = 0;
    for _ in 0..100 {
        let data = sampling::simulate_counts(&rho, &design, m, &mut rng).unwrap();
        let f = data.frequencies();
        let ls = estimate_ls(&model, f.values()).unwrap();
        let cov = covariance_estimate(&model, f.values(), m, &cfg).unwrap();
        let gls = estimate_gls(&model, f.values(), &cov).unwrap();
        let e_ls = metrics::frobenius_sq(ls.matrix(), rho.matrix()).unwrap();
        let e_gls = metrics::frobenius_sq(gls.matrix(), rho.matrix()).unwrap();
        wins += usize::from(e_gls < e_ls);
    }
    assert!(wins >= SIGN_TEST_WINS, "GLS won {wins}/100");
}

#[test]
fn tls_beats_ls_on_pure_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let design = pauli_design(3).unwrap();
    let model = LinearModel::new(&design).unwrap();
    let cfg = EstimatorConfig::default();
    let mut wins = 0;
    for _ in 0..100 {
        let rho = qstate::random_rank_r_state(8, 1, &mut rng).unwrap();
        let batches = batches(&rho, &model, 500, &mut rng);
        let pooled = CountsDataset::pool(&batches).unwrap();
        let ls = estimate_ls(&model, pooled.frequencies().values()).unwrap();
        let tls = estimate_tls(&model, &batches, CvMetric::Frobenius, &cfg).unwrap();
        let e_ls = metrics::frobenius_sq(ls.matrix(), rho.matrix()).unwrap();
        let e_tls = metrics::frobenius_sq(tls.state.matrix(), rho.matrix()).unwrap();
        wins += usize::from(e_tls < e_ls);
    }
    assert!(wins >= SIGN_TEST_WINS, "TLS won {wins}/100");
}

#[test]
fn tls_recovers_rank_of_pure_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let design = pauli_design(3).unwrap();
    let model = LinearModel::new(&design).unwrap();
    let cfg = EstimatorConfig::default();
    let trials = 50;
    let mut rank_one = 0;
    for _ in 0..trials {
        let rho = qstate::random_rank_r_state(8, 1, &mut rng).unwrap();
        let batches = batches(&rho, &model, 1000, &mut rng);
        let tls = estimate_tls(&model, &batches, CvMetric::Frobenius, &cfg).unwrap();
        let rank = tls.state.spectrum().values.iter().filter(|&&v| v > 1e-10).count();
        assert!(rank <= 8);
        rank_one += usize::from(rank == 1);
    }
    assert!(2 * rank_one >= trials, "rank one in {rank_one}/{trials}");
}

#[test]
fn ml_likelihood_monotone_over_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let design = pauli_design(2).unwrap();
    let model = LinearModel::new(&design).unwrap();
    let cfg = EstimatorConfig::default();
    for run in 0..50 {
        let rho = qstate::random_rank_r_state(4, 1 + run % 4, &mut rng).unwrap();
        let data = sampling::simulate_counts(&rho, &design, 200, &mut rng).unwrap();
        let ml = estimate_ml(&model, &data, &cfg).unwrap();
        assert!(ml.log_likelihoods.windows(2).all(|w| w[1] >= w[0]));
        let eigs = ml.state.spectrum().values;
        assert!(eigs.iter().all(|&v| v >= -1e-12));
    }
}

#[test]
fn posgls_close_to_ml_at_large_m() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let design = pauli_design(2).unwrap();
    let model = LinearModel::new(&design).unwrap();
    let cfg = EstimatorConfig::default();
    let m = 100_000;
    for _ in 0..5 {
        let rho = qstate::random_rank_r_state(4, 2, &mut rng).unwrap();
        let data = sampling::simulate_counts(&rho, &design, m, &mut rng).unwrap();
        let f = data.frequencies();
        let cov = covariance_estimate(&model, f.values(), m, &cfg).unwrap();
        let posgls = estimate_posgls(&model, f.values(), &cov, &cfg).unwrap();
        let ml = estimate_ml(&model, &data, &cfg).unwrap();
        let gap = metrics::trace_norm(posgls.state.matrix(), ml.state.matrix()).unwrap();
        assert!(gap < 0.02, "{gap}");
    }
}

#[test]
fn constrained_solvers_reach_stationarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let cfg = EstimatorConfig::default();
    for n in [2, 3] {
        let design = pauli_design(n).unwrap();
        let model = LinearModel::new(&design).unwrap();
        for &m in &[100u64, 10_000] {
            let rho = qstate::random_rank_r_state(1 << n, 1, &mut rng).unwrap();
            let data = sampling::simulate_counts(&rho, &design, m, &mut rng).unwrap();
            let f = data.frequencies();
            let cov = covariance_estimate(&model, f.values(), m, &cfg).unwrap();
            for est in [
                estimate_posls(&model, f.values(), &cfg).unwrap(),
                estimate_posgls(&model, f.values(), &cov, &cfg).unwrap(),
            ] {
                assert!(est.converged);
                assert!(est.gradient_mapping_norm < 1e-6);
                assert!(est.objective_trace.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }
}

#[test]
fn dispatcher_covers_every_method() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let design = pauli_design(2).unwrap();
    let model = LinearModel::new(&design).unwrap();
    let cfg = EstimatorConfig::default();
    let rho = qstate::random_rank_r_state(4, 2, &mut rng).unwrap();
    let batches = batches(&rho, &model, 1000, &mut rng);
    for method in Method::ALL {
        let est = estimate(method, &model, &batches, CvMetric::Frobenius, &cfg).unwrap();
        assert_eq!(est.method, method);
        let trace: f64 = (0..4).map(|i| est.matrix[(i, i)].re).sum();
        assert!((trace - 1.0).abs() < 1e-9);
        if method.is_constrained() {
            assert!(est.state().is_ok());
        }
    }
}
