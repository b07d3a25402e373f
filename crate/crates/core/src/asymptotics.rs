//! Closed-form large-sample predictions for the LS and PLS estimators under
//! covariant measurements and for ML at the maximally mixed state.
//!
//! Throughout, `d` is the dimension, `r` the rank of a state with equal
//! nonzero eigenvalues and `N` the total number of single-shot samples.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Result, TomoError};
use crate::quadrature;

const QUADRATURE_TOL: f64 = 1e-10;

fn check_rank(d: usize, r: usize) -> Result<()> {
    if d == 0 {
        return Err(TomoError::InvalidDimension(d));
    }
    if r == 0 || r > d {
        return Err(TomoError::InvalidRank { rank: r, dim: d });
    }
    Ok(())
}

fn check_samples(samples: f64) -> Result<()> {
    if !(samples > 0.0 && samples.is_finite()) {
        return Err(TomoError::Domain(format!("sample count {samples} must be positive")));
    }
    Ok(())
}

/// Semicircle density on `[-radius, radius]`.
pub fn wigner_density(x: f64, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(TomoError::Domain(format!("radius {radius} must be positive")));
    }
    if x.abs() >= radius {
        return Ok(0.0);
    }
    Ok(2.0 / (PI * radius * radius) * (radius * radius - x * x).sqrt())
}

pub fn semicircle_cdf(x: f64, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(TomoError::Domain(format!("radius {radius} must be positive")));
    }
    if x <= -radius {
        return Ok(0.0);
    }
    if x >= radius {
        return Ok(1.0);
    }
    let t = x / radius;
    Ok(0.5 + (t * (1.0 - t * t).sqrt() + t.asin()) / PI)
}

/// Kolmogorov–Smirnov distance between the empirical law of `eigs` and the semicircle.
pub fn semicircle_ks(eigs: &[f64], radius: f64) -> Result<f64> {
    if eigs.is_empty() {
        return Err(TomoError::InvalidSize("no eigenvalues".into()));
    }
    let mut sorted = eigs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = semicircle_cdf(x, radius)?;
        worst = worst.max(cdf - i as f64 / n).max((i + 1) as f64 / n - cdf);
    }
    Ok(worst)
}

/// Second moments of the `A`, `B`, `C` blocks of `√N (ρ̂_LS − ρ_r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockVariancePrediction {
    /// Variance of an off-diagonal entry of `A` (real and imaginary parts summed).
    pub v_a: f64,
    /// Variance of an entry of `B`.
    pub v_b: f64,
    /// Variance of an off-diagonal entry of `C`.
    pub v_c: f64,
    pub var_c_diag: f64,
    pub cov_c_diag: f64,
    pub var_a_diag: f64,
    pub cov_a_diag: f64,
}

pub fn ls_block_variances(d: usize, r: usize) -> Result<BlockVariancePrediction> {
    check_rank(d, r)?;
    let (df, rf) = (d as f64, r as f64);
    let v_c = (df + 1.0) / (df + 2.0);
    let shift = (1.0 + 1.0 / rf).powi(2);
    Ok(BlockVariancePrediction {
        v_a: (rf + 2.0) / rf * v_c,
        v_b: (rf + 1.0) / rf * v_c,
        v_c,
        var_c_diag: df / (df + 2.0),
        cov_c_diag: -1.0 / (df + 2.0),
        var_a_diag: 2.0 * v_c * (rf + 2.0) / rf - shift,
        cov_a_diag: v_c * (rf + 2.0) / rf - shift,
    })
}

/// `E‖A‖₂²` for the LS error block on the support.
fn a_block_energy(df: f64, rf: f64) -> f64 {
    (rf + 1.0) * (rf + 2.0) * (df + 1.0) / (df + 2.0) - (rf + 1.0).powi(2) / rf
}

/// `N · E‖ρ̂_LS − ρ_r‖₂²` summed over the blocks.
pub fn ls_risk_frobenius(d: usize, r: usize) -> Result<f64> {
    check_rank(d, r)?;
    let (df, rf) = (d as f64, r as f64);
    let v = (df + 1.0) / (df + 2.0);
    let off = df - rf;
    Ok(a_block_energy(df, rf)
        + 2.0 * (rf + 1.0) * off * v
        + off * (off - 1.0) * v
        + off * df / (df + 2.0))
}

/// Leading term `d²` of [`ls_risk_frobenius`].
pub fn ls_risk_frobenius_leading(d: usize) -> f64 {
    (d * d) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormPrediction {
    pub operator: f64,
    pub trace: f64,
}

/// Operator norm `2√(d/N)` and trace norm `8d^{3/2}/(3π√N)` of the LS error.
pub fn ls_norm_asymptotes(d: usize, samples: f64) -> Result<NormPrediction> {
    if d == 0 {
        return Err(TomoError::InvalidDimension(d));
    }
    check_samples(samples)?;
    let df = d as f64;
    Ok(NormPrediction {
        operator: 2.0 * (df / samples).sqrt(),
        trace: 8.0 * df.powf(1.5) / (3.0 * PI * samples.sqrt()),
    })
}

/// `∫_ε^1 (y − ε)^power √(1 − y²) dy`
fn tail_moment(epsilon: f64, power: i32) -> f64 {
    quadrature::integrate(
        |y| (y - epsilon).powi(power) * (1.0 - y * y).max(0.0).sqrt(),
        epsilon,
        1.0,
        QUADRATURE_TOL,
    )
}

/// `rε − (2(d − r)/π) ∫_ε^1 (y − ε)√(1 − y²) dy`, increasing in `ε`.
pub fn epsilon_residual(r: usize, d: usize, epsilon: f64) -> f64 {
    r as f64 * epsilon - 2.0 * (d - r) as f64 / PI * tail_moment(epsilon, 1)
}

/// Root in `(0, 1)` of [`epsilon_residual`], by bisection.
pub fn solve_epsilon(r: usize, d: usize) -> Result<f64> {
    check_rank(d, r)?;
    if r >= d {
        return Err(TomoError::Domain(format!("rank {r} must be below dimension {d}")));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if epsilon_residual(r, d, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A full prediction and its quoted leading-order term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskPrediction {
    pub full: f64,
    pub leading: f64,
}

/// `E‖ρ̂_PLS − ρ_r‖₂²`; the leading term is `6rd/N`.
pub fn pls_risk_frobenius(d: usize, r: usize, samples: f64) -> Result<RiskPrediction> {
    check_samples(samples)?;
    let epsilon = solve_epsilon(r, d)?;
    let (df, rf) = (d as f64, r as f64);
    let off = df - rf;
    let a_term = a_block_energy(df, rf) + 4.0 * rf * off * epsilon * epsilon;
    let shrink = 1.0 - 2.0 * rf * (off / samples).sqrt() * epsilon;
    let b_term = 2.0 * (df + 1.0) * off * (rf + 1.0) / (df + 2.0) * shrink * shrink;
    let c_term = 8.0 * off * off / PI * tail_moment(epsilon, 2);
    Ok(RiskPrediction {
        full: (a_term + b_term + c_term) / samples,
        leading: 6.0 * rf * df / samples,
    })
}

/// Bures risk of PLS; the leading term is `2r√(d − r)ε/√N`.
pub fn pls_risk_bures(d: usize, r: usize, samples: f64) -> Result<RiskPrediction> {
    check_samples(samples)?;
    let epsilon = solve_epsilon(r, d)?;
    let (df, rf) = (d as f64, r as f64);
    let off = df - rf;
    let leading = 2.0 * rf * off.sqrt() * epsilon / samples.sqrt();
    let second = rf / (4.0 * samples) * (a_block_energy(df, rf) + 4.0 * rf * off * epsilon * epsilon);
    Ok(RiskPrediction {
        full: leading + second,
        leading,
    })
}

/// Lower bounds `2√(d − r)ε/√N` (operator) and `4r√(d − r)ε/√N` (trace) on the PLS error.
pub fn pls_norm_lower_bounds(d: usize, r: usize, samples: f64) -> Result<NormPrediction> {
    check_samples(samples)?;
    let epsilon = solve_epsilon(r, d)?;
    let operator = 2.0 * ((d - r) as f64).sqrt() * epsilon / samples.sqrt();
    Ok(NormPrediction {
        operator,
        trace: 2.0 * r as f64 * operator,
    })
}

/// `(d² − 1)(d + 1)/(4N)`: Bures risk of ML at the maximally mixed state under
/// random-basis measurements.
pub fn ml_bures_mixed(d: usize, samples: f64) -> Result<f64> {
    if d == 0 {
        return Err(TomoError::InvalidDimension(d));
    }
    check_samples(samples)?;
    let df = d as f64;
    Ok((df * df - 1.0) * (df + 1.0) / (4.0 * samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `∫_ε^1 (y − ε)√(1 − y²) dy` in closed form.
    fn tail_first_moment_exact(e: f64) -> f64 {
        let s = (1.0 - e * e).sqrt();
        s.powi(3) / 3.0 - e * (PI / 4.0 - (e * s + e.asin()) / 2.0)
    }

    /// `∫_ε^1 (y − ε)²√(1 − y²) dy` in closed form, from
    /// `∫y²√(1−y²) = (arcsin y)/8 − y(1−2y²)√(1−y²)/8`.
    fn tail_second_moment_exact(e: f64) -> f64 {
        let s = (1.0 - e * e).sqrt();
        let y2 = PI / 16.0 - (e.asin() / 8.0 - e * (1.0 - 2.0 * e * e) * s / 8.0);
        let y1 = s.powi(3) / 3.0;
        let y0 = PI / 4.0 - (e * s + e.asin()) / 2.0;
        y2 - 2.0 * e * y1 + e * e * y0
    }

    #[test]
    fn wigner_values() {
        assert!((wigner_density(0.0, 2.0).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert_eq!(wigner_density(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(wigner_density(-2.0, 2.0).unwrap(), 0.0);
        let mass = quadrature::integrate(|x| wigner_density(x, 1.7).unwrap(), -1.7, 1.7, 1e-12);
        assert!((mass - 1.0).abs() < 1e-8);
        assert!(wigner_density(0.0, 0.0).is_err());
    }

    #[test]
    fn cdf_matches_density_integral() {
        for x in [-1.5, -0.3, 0.0, 0.9, 1.99] {
            let num = quadrature::integrate(|t| wigner_density(t, 2.0).unwrap(), -2.0, x, 1e-12);
            assert!((semicircle_cdf(x, 2.0).unwrap() - num).abs() < 1e-9);
        }
    }

    #[test]
    fn ks_statistic() {
        assert!((semicircle_ks(&[0.0; 10], 2.0).unwrap() - 0.5).abs() < 1e-15);
        // quantiles at (i + 1/2)/n, found by bisection on the CDF
        let n = 200;
        let eigs: Vec<f64> = (0..n)
            .map(|i| {
                let target = (i as f64 + 0.5) / n as f64;
                let (mut lo, mut hi) = (-2.0, 2.0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if semicircle_cdf(mid, 2.0).unwrap() < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            })
            .collect();
        assert!(semicircle_ks(&eigs, 2.0).unwrap() <= 1.0 / n as f64);
        assert!(semicircle_ks(&[], 2.0).is_err());
    }

    #[test]
    fn block_variances() {
        let v = ls_block_variances(2, 1).unwrap();
        assert!((v.v_c - 0.75).abs() < 1e-15);
        let big = ls_block_variances(100_000, 100_000).unwrap();
        assert!((big.v_a - 1.0).abs() < 1e-4);
        assert!(ls_block_variances(4, 0).is_err());
    }

    #[test]
    fn ls_risk_values() {
        assert!((ls_risk_frobenius(2, 1).unwrap() - 4.0).abs() < 1e-12);
        assert!((ls_risk_frobenius(2, 2).unwrap() - 4.5).abs() < 1e-12);
        let v = ls_risk_frobenius(128, 1).unwrap();
        assert!((v / 16384.0 - 1.0).abs() < 0.01);
        assert!((v - 16510.0).abs() < 1.0);
        // Summing the blocks reproduces d² + d − 1 − Tr ρ_r².
        for d in [3, 8, 32] {
            for r in 1..=d {
                let total = (d * d + d) as f64 - 1.0 - 1.0 / r as f64;
                assert!((ls_risk_frobenius(d, r).unwrap() - total).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ls_norms() {
        let p = ls_norm_asymptotes(128, 1e6).unwrap();
        assert!((p.operator - 0.02263).abs() < 5e-6);
        assert!((p.trace - 1.229).abs() < 5e-4);
        let q = ls_norm_asymptotes(128, 4e6).unwrap();
        assert!((q.operator - p.operator / 2.0).abs() < 1e-15);
        assert!((q.trace - p.trace / 2.0).abs() < 1e-15);
    }

    #[test]
    fn tail_moments_match_closed_forms() {
        for e in [0.0, 0.1, 0.5, 0.8204, 0.99] {
            assert!((tail_moment(e, 1) - tail_first_moment_exact(e)).abs() < 1e-10);
            assert!((tail_moment(e, 2) - tail_second_moment_exact(e)).abs() < 1e-10);
        }
    }

    #[test]
    fn epsilon_solutions() {
        assert!(solve_epsilon(1, 1_000_000).unwrap() > 0.95);
        let e = solve_epsilon(1, 256).unwrap();
        assert!((e - 0.81).abs() < 0.02);
        let mut previous = 1.0;
        for r in [1, 2, 4, 8] {
            let e = solve_epsilon(r, 128).unwrap();
            assert!(e < previous);
            previous = e;
        }
        for d in [2, 16, 64, 256] {
            for r in 1..d {
                let e = solve_epsilon(r, d).unwrap();
                assert!(e > 0.0 && e < 1.0);
                let exact = r as f64 * e - 2.0 * (d - r) as f64 / PI * tail_first_moment_exact(e);
                assert!(exact.abs() < 1e-8, "d={d} r={r} residual {exact}");
            }
        }
        assert!(matches!(solve_epsilon(4, 4), Err(TomoError::Domain(_))));
    }

    #[test]
    fn pls_predictions() {
        let f = pls_risk_frobenius(256, 1, 1e5).unwrap();
        assert!((f.full - 0.016).abs() < 0.001);
        let lead = pls_risk_frobenius(128, 1, 1e6).unwrap();
        assert!((lead.full / lead.leading - 1.0).abs() < 0.15);

        let b = pls_risk_bures(256, 1, 1e5).unwrap();
        let e = solve_epsilon(1, 256).unwrap();
        let expected = 2.0 * 255f64.sqrt() * e / 1e5f64.sqrt()
            + (1.0 / 4e5) * (6.0 * 257.0 / 258.0 - 4.0 + 4.0 * 255.0 * e * e);
        assert!((b.full - expected).abs() < 1e-12);
        assert!((b.full - 0.0836).abs() < 0.02 * 0.0836);
        let quarter = pls_risk_bures(256, 1, 4e5).unwrap();
        assert!((quarter.leading - b.leading / 2.0).abs() < 1e-15);
        assert!(pls_risk_bures(32, 4, 1e6).unwrap().full > pls_risk_bures(32, 1, 1e6).unwrap().full);
    }

    #[test]
    fn pls_below_ls_at_low_rank() {
        for d in [16usize, 32, 64, 128] {
            for r in 1..=d / 4 {
                let n = 1e6;
                let pls = pls_risk_frobenius(d, r, n).unwrap().full;
                assert!(pls < ls_risk_frobenius(d, r).unwrap() / n, "d={d} r={r}");
            }
        }
    }

    #[test]
    fn pls_norm_bounds() {
        let a = pls_norm_lower_bounds(256, 1, 1e5).unwrap();
        assert!((a.operator - 0.08).abs() < 0.01);
        assert!((a.trace - 0.16).abs() < 0.01);
        let b = pls_norm_lower_bounds(128, 10, 1e6).unwrap();
        assert!((b.operator - 0.01).abs() < 0.001);
        assert!((b.trace - 20.0 * b.operator).abs() < 1e-15);
    }

    #[test]
    fn ml_bures_values() {
        assert!((ml_bures_mixed(8, 1e5).unwrap() - 0.0014175).abs() < 1e-12);
        assert!((ml_bures_mixed(16, 1e5).unwrap() - 0.0108375).abs() < 1e-12);
        assert!((ml_bures_mixed(2, 1.0).unwrap() - 2.25).abs() < 1e-15);
    }
}
