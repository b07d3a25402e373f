use tomo_bench::{reproduce_figure, run_experiment, DesignSpec, ExperimentConfig, FigureName, FigureOptions, Metric};
use tomo_core::asymptotics;
use tomo_core::estimators::Method;

fn pauli_config(qubits: usize, ranks: Vec<usize>, m: u64, trials: usize, estimators: Vec<Method>) -> ExperimentConfig {
    ExperimentConfig {
        d: None,
        qubits: Some(qubits),
        ranks,
        design: DesignSpec::Pauli,
        m: Some(m),
        trials,
        estimators,
        metrics: vec![Metric::Frobenius],
        seed: 17,
        cv_metric: None,
    }
}

fn csv(cfg: &ExperimentConfig) -> Vec<u8> {
    let mut out = Vec::new();
    run_experiment(cfg).unwrap().write_csv(&mut out).unwrap();
    out
}

#[test]
fn same_seed_gives_bit_identical_csv() {
    let mut cfg = pauli_config(2, vec![1, 3], 100, 6, vec![Method::Ls, Method::Tls, Method::PosGls, Method::Pls]);
    cfg.metrics.push(Metric::Bures);
    let first = csv(&cfg);
    assert_eq!(first, csv(&cfg));
    cfg.seed += 1;
    assert_ne!(first, csv(&cfg));
}

#[test]
fn random_design_is_deterministic() {
    let cfg = ExperimentConfig {
        d: Some(3),
        qubits: None,
        ranks: vec![1],
        design: DesignSpec::Random { k: 6 },
        m: Some(50),
        trials: 4,
        estimators: vec![Method::Ls, Method::Ml],
        metrics: vec![Metric::Trace],
        seed: 3,
        cv_metric: None,
    };
    assert_eq!(csv(&cfg), csv(&cfg));
}

#[test]
fn qubit_pauli_ls_risk_matches_exact_value() {
    // For a pure qubit state each Bloch coordinate has variance (1 − x_i²)/m,
    // so E‖ρ̂ − ρ‖₂² = Σ(1 − x_i²)/(2m) = 1/m = 3/N. The covariant formula gives
    // 4/N at d=2: Pauli bases are a 2-design but not a 3-design.
    let cfg = pauli_config(1, vec![1], 10_000, 1000, vec![Method::Ls]);
    let report = run_experiment(&cfg).unwrap();
    let row = report.find("ls", "frobenius", 1).unwrap();
    let n = row.n as f64;
    assert!((row.mean * n / 3.0 - 1.0).abs() < 0.05, "N·risk {}", row.mean * n);
    assert!((asymptotics::ls_risk_frobenius(2, 1).unwrap() - 4.0).abs() < 1e-12);
    assert!(row.stderr > 0.0 && row.stderr < row.mean);
}

#[test]
fn constrained_estimators_beat_ls_on_pure_states() {
    let cfg = pauli_config(3, vec![1], 500, 100, vec![Method::Ls, Method::Pls, Method::Tls, Method::Ml]);
    let report = run_experiment(&cfg).unwrap();
    let ls = report.find("ls", "frobenius", 1).unwrap().mean;
    for method in ["pls", "tls", "ml"] {
        let risk = report.find(method, "frobenius", 1).unwrap().mean;
        assert!(risk < ls, "{method}: {risk} vs LS {ls}");
    }
}

#[test]
fn pauli_ls_risk_is_rank_independent() {
    let opts = FigureOptions {
        trials: 20,
        ..FigureOptions::default()
    };
    let fig = reproduce_figure(FigureName::Fig6Like, &opts).unwrap();
    let ls: Vec<f64> = (1..=8).map(|r| fig.find("ls", "frobenius", r).unwrap().mean).collect();
    let (lo, hi) = ls.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    assert!(hi / lo < 1.3, "{ls:?}");
    assert!(fig.rows.iter().all(|row| row.prediction.is_none()));
    assert_eq!(fig.rows.len(), 8 * Method::ALL.len());
}

#[test]
fn covariant_bures_curve_peaks_inside() {
    let opts = FigureOptions {
        d: Some(16),
        samples: Some(100_000),
        trials: 20,
        ranks: None,
        seed: 5,
    };
    let fig = reproduce_figure(FigureName::Fig3c, &opts).unwrap();
    let curve: Vec<f64> = [1, 2, 4, 8, 16].iter().map(|&r| fig.find("pls", "bures", r).unwrap().mean).collect();
    let peak = curve.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!(peak > 0 && peak < curve.len() - 1, "{curve:?}");
}
