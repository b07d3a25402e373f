use log::debug;
use nalgebra::{DMatrix, DVector};

use super::{estimate_gls, estimate_pls, CovarianceModel, EstimatorConfig, LinearModel};
use crate::error::{Result, TomoError};
use crate::qstate::{self, DensityMatrix};

/// Gradient-mapping norm below which a stalled run counts as converged.
const STATIONARITY_TOL: f64 = 1e-6;
const POWER_ITERATION_TOL: f64 = 1e-6;

/// Output of the projected-gradient solvers.
#[derive(Debug, Clone)]
pub struct ConstrainedEstimate {
    pub state: DensityMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted iterate, starting with the warm start and
    /// accumulated from exact increments.
    pub objective_trace: Vec<f64>,
    /// `L ‖x − Π(x − ∇F(x)/L)‖` at the returned point, for the objective
    /// normalised to `λmax(Q) = 1` (so `L = 2`).
    pub gradient_mapping_norm: f64,
}

/// `F(x) = xᵀ Q x − 2 cᵀ x + constant` over reduced coordinates.
struct Quadratic {
    q: DMatrix<f64>,
    c: DVector<f64>,
    constant: f64,
}

impl Quadratic {
    fn value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.q * x)) - 2.0 * self.c.dot(x) + self.constant
    }

    /// `F(z) − F(x)` without cancellation between two large values.
    fn difference(&self, z: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let delta = z - x;
        delta.dot(&(&self.q * (z + x))) - 2.0 * self.c.dot(&delta)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.q * x - &self.c) * 2.0
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..100_000 {
        let w = m * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - estimate).abs() <= POWER_ITERATION_TOL * next.abs() {
            return next.max(norm);
        }
        estimate = next;
    }
    estimate
}

struct Projector<'a> {
    model: &'a LinearModel,
}

impl Projector<'_> {
    fn apply(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DensityMatrix)> {
        let m = self.model.matrix_from_reduced(x);
        let state = qstate::project_hermitian(&m, 0.0)?;
        Ok((self.model.reduced_coordinates(state.matrix()), state))
    }
}

/// Accelerated projected gradient with monotone restart.
fn minimize(
    model: &LinearModel,
    objective: &Quadratic,
    start: &DensityMatrix,
    cfg: &EstimatorConfig,
) -> Result<ConstrainedEstimate> {
    let projector = Projector { model };
    // Work with F/λmax(Q) so the stationarity test does not depend on the
    // arbitrary scale of the weights; the trace stays in the original units.
    let scale = largest_eigenvalue(&objective.q);
    if scale <= 0.0 {
        return Err(TomoError::NotInformationallyComplete);
    }
    let original = objective;
    let objective = &Quadratic {
        q: &original.q / scale,
        c: &original.c / scale,
        constant: original.constant / scale,
    };
    let lipschitz = 2.0;
    let step = 1.0 / lipschitz;
    let (mut x, mut state) = projector.apply(&model.reduced_coordinates(start.matrix()))?;
    let mut fx = original.value(&x);
    let mut trace = vec![fx];
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;

    let gradient_step = |p: &DVector<f64>| -> Result<(DVector<f64>, DensityMatrix)> {
        projector.apply(&(p - objective.gradient(p) * step))
    };
    let mapping_norm = |p: &DVector<f64>| -> Result<f64> {
        let (next, _) = gradient_step(p)?;
        Ok((p - next).norm() * lipschitz)
    };

    while iterations < cfg.max_iterations {
        iterations += 1;
        let (mut z, mut z_state) = gradient_step(&y)?;
        let mut change = objective.difference(&z, &x);
        if change > 0.0 {
            // momentum overshot: restart from the current iterate
            t = 1.0;
            (z, z_state) = gradient_step(&x)?;
            change = objective.difference(&z, &x);
            if change > 0.0 {
                // no descent left at working precision
                converged = mapping_norm(&x)? < STATIONARITY_TOL;
                break;
            }
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &z + (&z - &x) * ((t - 1.0) / t_next);
        x = z;
        state = z_state;
        fx += change * scale;
        t = t_next;
        trace.push(fx);
        if -change < cfg.tolerance {
            if mapping_norm(&x)? < STATIONARITY_TOL {
                converged = true;
                break;
            }
            y = x.clone();
            t = 1.0;
        }
    }
    let gradient_mapping_norm = mapping_norm(&x)?;
    if !converged {
        debug!("projected gradient stopped after {iterations} iterations without converging");
    }
    Ok(ConstrainedEstimate {
        state,
        iterations,
        converged,
        objective_trace: trace,
        gradient_mapping_norm,
    })
}

/// `arg min_{τ ∈ S_d} ‖X β(τ) − f‖²`, warm-started at PLS.
pub fn estimate_posls(model: &LinearModel, f: &[f64], cfg: &EstimatorConfig) -> Result<ConstrainedEstimate> {
    model.check_frequencies(f)?;
    model.normal_equations()?;
    let d = model.dim();
    let n = d * d - 1;
    let xj = model.x().columns(0, n);
    let centred = DVector::from_iterator(f.len(), f.iter().map(|v| v - 1.0 / d as f64));
    let objective = Quadratic {
        q: xj.transpose() * xj,
        c: xj.transpose() * &centred,
        constant: centred.norm_squared(),
    };
    let start = estimate_pls(model, f)?;
    minimize(model, &objective, &start, cfg)
}

/// `arg min_{τ ∈ S_d} ‖Ω̃^{-1/2}(X̃ β̃(τ) − f̃)‖²` up to an additive constant,
/// warm-started at the projected GLS estimate.
pub fn estimate_posgls(
    model: &LinearModel,
    f: &[f64],
    covariance: &CovarianceModel,
    cfg: &EstimatorConfig,
) -> Result<ConstrainedEstimate> {
    model.check_frequencies(f)?;
    let (q, c) = covariance.normal_system(model, f);
    let objective = Quadratic { q, c, constant: 0.0 };
    let start = qstate::project_to_states(&estimate_gls(model, f, covariance)?, 0.0)?;
    minimize(model, &objective, &start, cfg)
}
