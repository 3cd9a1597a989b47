//! Expected information under the true and assumed laws.

use super::solver::{maximize, Eval, SolverOptions};
use crate::error::{MisfitError, Result};
use crate::mixture_lik::{expect_under_true, AssumedModel, ExpectMethod, Order, PairObs, TrueModel};
use crate::numerics::linalg::{block, condition_number, sym_inverse, Mat, Vector};

/// `i = E_m[−∇²ℓ]`, `q = E_m[∇ℓ ∇ℓᵀ]` and `ǐ`, the information under the
/// assumed model's own law, with componentwise error estimates.
#[derive(Debug, Clone)]
pub struct InfoPair {
    pub i: Mat,
    pub q: Mat,
    pub i_check: Mat,
    pub i_error: Mat,
    pub q_error: Mat,
    pub i_check_error: Mat,
}

impl InfoPair {
    pub fn dim(&self) -> usize {
        self.i.nrows()
    }

    fn lam(&self) -> Vec<usize> {
        (1..self.dim()).collect()
    }

    pub fn i_psipsi(&self) -> f64 {
        self.i[(0, 0)]
    }

    pub fn i_psilambda(&self) -> Vector {
        block(&self.i, &[0], &self.lam()).row(0).transpose()
    }

    pub fn i_lambdalambda(&self) -> Mat {
        block(&self.i, &self.lam(), &self.lam())
    }

    /// `i_ψψ.λ = i_ψψ − i_ψλ i_λλ⁻¹ i_λψ`.
    pub fn i_psipsi_dot_lambda(&self) -> Result<f64> {
        if self.dim() == 1 {
            return Ok(self.i_psipsi());
        }
        let il = sym_inverse(&self.i_lambdalambda())?;
        let v = self.i_psilambda();
        Ok(self.i_psipsi() - (v.transpose() * il * &v)[(0, 0)])
    }

    /// `i^ψψ` by the blockwise formula.
    pub fn i_upper_psipsi(&self) -> Result<f64> {
        let s = self.i_psipsi_dot_lambda()?;
        if s.abs() < f64::MIN_POSITIVE {
            return Err(MisfitError::numerical("partial information i_psipsi.lambda is zero", s));
        }
        Ok(1.0 / s)
    }

    /// `i^ψλ = −i^ψψ i_ψλ i_λλ⁻¹` by the blockwise formula.
    pub fn i_upper_psilambda(&self) -> Result<Vector> {
        if self.dim() == 1 {
            return Ok(Vector::zeros(0));
        }
        let il = sym_inverse(&self.i_lambdalambda())?;
        Ok(-self.i_upper_psipsi()? * (il * self.i_psilambda()))
    }

    pub fn i_inverse(&self) -> Result<Mat> {
        sym_inverse(&self.i)
    }

    pub fn condition_number(&self) -> f64 {
        condition_number(&self.i)
    }

    /// Largest discrepancy between the blockwise formulas and the full inverse.
    pub fn blockwise_residual(&self) -> Result<f64> {
        let inv = self.i_inverse()?;
        let mut r = (inv[(0, 0)] - self.i_upper_psipsi()?).abs() / inv[(0, 0)].abs().max(1.0);
        for (k, v) in self.i_upper_psilambda()?.iter().enumerate() {
            r = r.max((inv[(0, k + 1)] - v).abs() / inv[(0, k + 1)].abs().max(1.0));
        }
        Ok(r)
    }

    /// `q_ψψ · i^ψψ`, reported without a verdict.
    pub fn q_psipsi_times_i_upper(&self) -> Result<f64> {
        Ok(self.q[(0, 0)] * self.i_upper_psipsi()?)
    }
}

fn outer_expectations(
    truth: &TrueModel,
    assumed: &AssumedModel,
    psi: f64,
    lambda: &[f64],
    method: ExpectMethod,
    with_q: bool,
) -> Result<(Mat, Mat, Mat, Mat)> {
    let p = assumed.dim();
    let len = if with_q { 2 * p * p } else { p * p };
    let f = |o: &PairObs, out: &mut [f64]| -> Result<()> {
        let d = assumed.derivs(psi, lambda, o, Some(Order::Hessian))?;
        let h = d.hess.expect("hessian requested");
        for a in 0..p {
            for b in 0..p {
                out[a * p + b] = -h[(a, b)];
                if with_q {
                    out[p * p + a * p + b] = d.grad[a] * d.grad[b];
                }
            }
        }
        Ok(())
    };
    let e = expect_under_true(&f, len, truth, method)?;
    let m = |off: usize, src: &[f64]| Mat::from_fn(p, p, |a, b| src[off + a * p + b]);
    let (q, qe) = if with_q { (m(p * p, &e.value), m(p * p, &e.error)) } else { (Mat::zeros(p, p), Mat::zeros(p, p)) };
    Ok((m(0, &e.value), m(0, &e.error), q, qe))
}

/// Information matrices at `(ψ, λ)`.
pub fn info_matrices(
    truth: &TrueModel,
    assumed: &AssumedModel,
    psi: f64,
    lambda: &[f64],
    method: ExpectMethod,
) -> Result<InfoPair> {
    assumed.check(psi, lambda)?;
    let (i, i_error, q, q_error) = outer_expectations(truth, assumed, psi, lambda, method, true)?;
    let own = assumed.as_true(psi, lambda, &truth.design)?;
    let (i_check, i_check_error, _, _) = outer_expectations(&own, assumed, psi, lambda, method, false)?;
    Ok(InfoPair { i, q, i_check, i_error, q_error, i_check_error })
}

/// `ǐ(ψ, λ)`: expected negative Hessian under the assumed model's own law.
pub fn assumed_information(
    assumed: &AssumedModel,
    psi: f64,
    lambda: &[f64],
    design: &[(f64, f64)],
    method: ExpectMethod,
) -> Result<Mat> {
    let own = assumed.as_true(psi, lambda, design)?;
    Ok(outer_expectations(&own, assumed, psi, lambda, method, false)?.0)
}

/// `(i⁻¹ q i⁻¹)/n`.
pub fn sandwich_cov(info: &InfoPair, n: usize) -> Result<Mat> {
    if n == 0 {
        return Err(MisfitError::invalid("n", "sample size must be positive"));
    }
    let inv = info.i_inverse()?;
    Ok(&inv * &info.q * &inv / n as f64)
}

/// Expected assumed score under the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GVector {
    pub g_psi: f64,
    pub g_lambda: Vec<f64>,
    pub error: Vec<f64>,
}

/// `g(ψ*, λ) = E_m[∇ℓ(ψ*, λ)]`.
pub fn g_vector(
    truth: &TrueModel,
    assumed: &AssumedModel,
    psi_star: f64,
    lambda: &[f64],
    method: ExpectMethod,
) -> Result<GVector> {
    assumed.check(psi_star, lambda)?;
    let f = |o: &PairObs, out: &mut [f64]| -> Result<()> {
        out.copy_from_slice(&assumed.derivs(psi_star, lambda, o, Some(Order::Gradient))?.grad);
        Ok(())
    };
    let e = expect_under_true(&f, assumed.dim(), truth, method)?;
    Ok(GVector { g_psi: e.value[0], g_lambda: e.value[1..].to_vec(), error: e.error })
}

/// `ℓ_ψ − wᵀℓ_λ` with `wᵀ = i_ψλ i_λλ⁻¹`.
pub fn neyman_score(info: &InfoPair, score_psi: f64, score_lambda: &[f64]) -> Result<f64> {
    if score_lambda.len() + 1 != info.dim() {
        return Err(MisfitError::invalid("score_lambda", "length does not match the information matrix"));
    }
    if score_lambda.is_empty() {
        return Ok(score_psi);
    }
    let il = sym_inverse(&info.i_lambdalambda())?;
    let w = il * info.i_psilambda();
    Ok(score_psi - w.dot(&Vector::from_column_slice(score_lambda)))
}

/// The `λ` maximizing `E_m[ℓ(ψ, λ)]`, by Newton from `lambda0`.
pub fn pseudo_true_lambda(
    truth: &TrueModel,
    assumed: &AssumedModel,
    psi: f64,
    lambda0: &[f64],
    method: ExpectMethod,
) -> Result<Vec<f64>> {
    assumed.check(psi, lambda0)?;
    let k = assumed.dim() - 1;
    let objective = |lam: &[f64]| -> Result<Eval> {
        let f = |o: &PairObs, out: &mut [f64]| -> Result<()> {
            let d = assumed.derivs(psi, lam, o, Some(Order::Hessian))?;
            let h = d.hess.expect("hessian requested");
            out[0] = d.value;
            for a in 0..k {
                out[1 + a] = d.grad[1 + a];
                for b in 0..k {
                    out[1 + k + a * k + b] = h[(1 + a, 1 + b)];
                }
            }
            Ok(())
        };
        let e = expect_under_true(&f, 1 + k + k * k, truth, method)?;
        Ok(Eval {
            value: e.value[0],
            grad: e.value[1..=k].to_vec(),
            hess: Mat::from_fn(k, k, |a, b| e.value[1 + k + a * k + b]),
        })
    };
    let transforms = assumed.transforms()[1..].to_vec();
    let opts = SolverOptions { grad_tol: 1e-10, ..SolverOptions::default() };
    let out = maximize(&objective, lambda0, &transforms, opts)?;
    if !out.converged {
        return Err(MisfitError::numerical("pseudo-true lambda did not converge", out.gradient_norm));
    }
    Ok(out.x)
}
