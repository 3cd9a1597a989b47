//! Damped Newton ascent in internal (log-transformed) coordinates.

use log::debug;

use crate::error::{MisfitError, Result};
use crate::mixture_lik::Transform;
use crate::numerics::linalg::{floor_eigenvalues, sym_solve, Mat, Vector};

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Convergence threshold on the natural-scale gradient max-norm.
    pub grad_tol: f64,
    /// Floor for eigenvalues of the negative Hessian.
    pub eig_floor: f64,
    pub max_halvings: usize,
    /// Largest allowed step (max-norm) in internal coordinates.
    pub max_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iter: 200, grad_tol: 1e-8, eig_floor: 1e-8, max_halvings: 50, max_step: 3.0 }
    }
}

/// Natural-scale value, gradient and Hessian of the objective.
pub struct Eval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Mat,
}

#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Mat,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes `objective` starting from natural-scale `x0`.
pub fn maximize(
    objective: &dyn Fn(&[f64]) -> Result<Eval>,
    x0: &[f64],
    transforms: &[Transform],
    opts: SolverOptions,
) -> Result<SolverOutcome> {
    let to_nat = |t: &[f64]| -> Vec<f64> { t.iter().zip(transforms).map(|(v, tr)| tr.to_natural(*v)).collect() };
    let mut t: Vec<f64> = x0.iter().zip(transforms).map(|(v, tr)| tr.to_internal(*v)).collect();
    let mut x = to_nat(&t);
    let mut cur = objective(&x)?;
    if !cur.value.is_finite() {
        return Err(MisfitError::invalid("init", "log-likelihood is not finite at the starting point"));
    }
    let p = x.len();
    let mut iterations = 0;
    loop {
        let gnorm = max_norm(&cur.grad);
        if gnorm <= opts.grad_tol {
            return Ok(outcome(x, cur, iterations, true));
        }
        if iterations >= opts.max_iter {
            return Ok(outcome(x, cur, iterations, false));
        }
        iterations += 1;
        // internal-coordinate gradient and Hessian
        let chain: Vec<(f64, f64)> = x.iter().zip(transforms).map(|(v, tr)| tr.chain(*v)).collect();
        let gt = Vector::from_iterator(p, (0..p).map(|i| cur.grad[i] * chain[i].0));
        let mut ht = Mat::from_fn(p, p, |i, j| cur.hess[(i, j)] * chain[i].0 * chain[j].0);
        for i in 0..p {
            ht[(i, i)] += chain[i].1 * cur.grad[i];
        }
        if ht.iter().any(|v| !v.is_finite()) || gt.iter().any(|v| !v.is_finite()) {
            return Err(MisfitError::numerical("non-finite derivatives during Newton iteration", gnorm));
        }
        let neg = floor_eigenvalues(&(-ht), opts.eig_floor);
        let mut step = sym_solve(&neg, &gt)?;
        let smax = step.amax();
        if smax > opts.max_step {
            step *= opts.max_step / smax;
        }
        let slope = gt.dot(&step);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let tn: Vec<f64> = (0..p).map(|i| t[i] + alpha * step[i]).collect();
            let xn = to_nat(&tn);
            if xn.iter().all(|v| v.is_finite()) {
                if let Ok(ev) = objective(&xn) {
                    if ev.value.is_finite() {
                        let armijo = ev.value >= cur.value + 1e-4 * alpha * slope;
                        // at rounding level, accept steps that shrink the gradient
                        let flat = ev.value >= cur.value - 1e-11 * cur.value.abs().max(1.0)
                            && max_norm(&ev.grad) < 0.9 * gnorm;
                        if armijo || flat {
                            accepted = Some((tn, xn, ev));
                            break;
                        }
                    }
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((tn, xn, ev)) => {
                debug!("newton iter {iterations}: value {:.12e}, |g| {:.3e}, alpha {alpha}", ev.value, gnorm);
                t = tn;
                x = xn;
                cur = ev;
            }
            None => {
                if gnorm <= 1e3 * opts.grad_tol {
                    // stationary to within rounding but not to tolerance
                    return Ok(outcome(x, cur, iterations, false));
                }
                return Err(MisfitError::numerical(
                    format!("line search failed at {x:?} after {iterations} iterations"),
                    gnorm,
                ));
            }
        }
    }
}

fn outcome(x: Vec<f64>, ev: Eval, iterations: usize, converged: bool) -> SolverOutcome {
    let gradient_norm = max_norm(&ev.grad);
    SolverOutcome { x, value: ev.value, grad: ev.grad, hess: ev.hess, iterations, converged, gradient_norm }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_a_concave_function_with_log_coordinates() {
        // f(a, b) = 3 log a − a + 2 log b − 4b, maximized at a = 3, b = 0.5
        let f = |x: &[f64]| -> Result<Eval> {
            Ok(Eval {
                value: 3.0 * x[0].ln() - x[0] + 2.0 * x[1].ln() - 4.0 * x[1],
                grad: vec![3.0 / x[0] - 1.0, 2.0 / x[1] - 4.0],
                hess: Mat::from_row_slice(2, 2, &[-3.0 / (x[0] * x[0]), 0.0, 0.0, -2.0 / (x[1] * x[1])]),
            })
        };
        let out = maximize(&f, &[50.0, 0.001], &[Transform::Log, Transform::Log], SolverOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 3.0).abs() < 1e-9 && (out.x[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn non_finite_start_is_invalid() {
        let f = |_x: &[f64]| -> Result<Eval> {
            Ok(Eval { value: f64::NAN, grad: vec![0.0], hess: Mat::zeros(1, 1) })
        };
        let r = maximize(&f, &[1.0], &[Transform::Identity], SolverOptions::default());
        assert!(matches!(r, Err(MisfitError::InvalidArgument { .. })));
    }
}
