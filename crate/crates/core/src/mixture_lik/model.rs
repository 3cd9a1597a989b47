//! Marginal likelihood of one stratum under an assumed mixing law.

use nalgebra::{Matrix2, Vector2};

use super::kernel::{PairKernel, PairObs};
use super::mixing::{AssumedMixing, Transform};
use crate::error::{MisfitError, Result};
use crate::numerics::linalg::Mat;
use crate::numerics::quadrature::{adaptive_log_trapezoid, AdaptiveOptions};
use crate::numerics::special::{digamma, ln_factorial, ln_gamma, trigamma};

/// Closed-form marginals available for a kernel/mixing combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedForm {
    ExponentialGamma,
    PoissonGamma,
    NormalNormal,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Gradient,
    Hessian,
}

/// Value, gradient and (optionally) Hessian of a stratum log-likelihood over
/// `(ψ, λ)`, all on the natural scale.
#[derive(Debug, Clone)]
pub struct Derivs {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Option<Mat>,
}

/// The fitted model: a kernel plus an assumed mixing family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumedModel {
    pub kernel: PairKernel,
    pub mixing: AssumedMixing,
    pub closed_form: ClosedForm,
}

impl AssumedModel {
    /// Picks the closed form when one exists.
    pub fn new(kernel: PairKernel, mixing: AssumedMixing) -> Self {
        let closed_form = match (kernel, mixing) {
            (PairKernel::Exponential { .. }, AssumedMixing::Gamma) => ClosedForm::ExponentialGamma,
            (PairKernel::Poisson, AssumedMixing::GammaMeanShape) => ClosedForm::PoissonGamma,
            (PairKernel::Normal, AssumedMixing::Normal) => ClosedForm::NormalNormal,
            _ => ClosedForm::None,
        };
        AssumedModel { kernel, mixing, closed_form }
    }

    /// Same model with the closed form switched off.
    pub fn with_quadrature(mut self) -> Self {
        self.closed_form = ClosedForm::None;
        self
    }

    pub fn dim(&self) -> usize {
        1 + self.mixing.dim()
    }

    pub fn transforms(&self) -> Vec<Transform> {
        let mut t = vec![if self.kernel.positive_interest() { Transform::Log } else { Transform::Identity }];
        t.extend(self.mixing.transforms(self.kernel.positive_effect()));
        t
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        let mut n = vec!["psi"];
        n.extend(self.mixing.names());
        n
    }

    pub fn check(&self, psi: f64, lambda: &[f64]) -> Result<()> {
        self.kernel.check_psi(psi)?;
        self.mixing.check(lambda, self.kernel.positive_effect())
    }

    pub fn loglik(&self, psi: f64, lambda: &[f64], obs: &PairObs) -> Result<f64> {
        Ok(self.derivs(psi, lambda, obs, None)?.value)
    }

    /// Log-likelihood with derivatives up to `order` (`None` for value only).
    pub fn derivs(&self, psi: f64, lambda: &[f64], obs: &PairObs, order: Option<Order>) -> Result<Derivs> {
        self.check(psi, lambda)?;
        self.kernel.check_obs(obs)?;
        let want_hess = order == Some(Order::Hessian);
        match self.closed_form {
            ClosedForm::ExponentialGamma => Ok(exponential_gamma(self.kernel, psi, lambda, obs, want_hess)),
            ClosedForm::PoissonGamma => Ok(poisson_gamma(psi, lambda, obs, want_hess)),
            ClosedForm::NormalNormal => Ok(normal_normal(psi, lambda, obs, want_hess)),
            ClosedForm::None => {
                if self.mixing == AssumedMixing::PointMass {
                    Ok(self.point_mass(psi, lambda[0], obs, want_hess))
                } else {
                    self.quadrature(psi, lambda, obs, order.is_some(), want_hess)
                }
            }
        }
    }

    fn point_mass(&self, psi: f64, g0: f64, obs: &PairObs, want_hess: bool) -> Derivs {
        let d = self.kernel.eval(psi, g0, obs);
        Derivs {
            value: d.log_k,
            grad: vec![d.d_psi, d.d_gamma],
            hess: want_hess.then(|| {
                Mat::from_row_slice(2, 2, &[d.d_psi_psi, d.d_psi_gamma, d.d_psi_gamma, d.d_gamma_gamma])
            }),
        }
    }

    /// `log ∫ k(y | ψ, γ) h(γ; λ) dγ` by the adaptive trapezoid, with
    /// derivatives as posterior moments of the integrand's log-derivatives.
    fn quadrature(&self, psi: f64, lambda: &[f64], obs: &PairObs, want_grad: bool, want_hess: bool) -> Result<Derivs> {
        let log_scale = self.mixing.positive_support();
        let to_gamma = |u: f64| if log_scale { u.exp() } else { u };
        let phi = |u: f64| {
            let g = to_gamma(u);
            let k = self.kernel.eval(psi, g, obs);
            let (lh, h1, h2) = self.mixing.log_h(lambda, g);
            let d1 = k.d_gamma + h1;
            let d2 = k.d_gamma_gamma + h2;
            if log_scale {
                (k.log_k + lh + u, g * d1 + 1.0, g * g * d2 + g * d1)
            } else {
                (k.log_k + lh, d1, d2)
            }
        };
        let start = {
            let m = self.mixing.family(lambda).mean();
            if log_scale {
                m.max(1e-300).ln()
            } else {
                m
            }
        };
        let (center, curv) = find_mode(&phi, start);
        let h0 = if curv < 0.0 { (-curv).sqrt().recip() } else { 0.5 };
        let res = adaptive_log_trapezoid(center, h0, |u| (phi(u).0, ()), AdaptiveOptions::default())?;
        let value = res.log_value;
        if !value.is_finite() {
            return Err(MisfitError::numerical("marginal likelihood is not finite", value));
        }
        if !want_grad {
            return Ok(Derivs { value, grad: vec![], hess: None });
        }
        let p = self.dim();
        let mut mean = vec![0.0; p];
        let mut hmean = Mat::zeros(p, p);
        let mut per_node = Vec::with_capacity(res.nodes.len());
        for node in &res.nodes {
            let w = (node.log_weight - value).exp();
            if w == 0.0 {
                continue;
            }
            let g = to_gamma(node.u);
            let k = self.kernel.eval(psi, g, obs);
            let (lg, lh) = self.mixing.lambda_score(lambda, g);
            let mut gv = Vec::with_capacity(p);
            gv.push(k.d_psi);
            gv.extend(lg);
            for i in 0..p {
                mean[i] += w * gv[i];
            }
            if want_hess {
                hmean[(0, 0)] += w * k.d_psi_psi;
                for i in 1..p {
                    for j in 1..p {
                        hmean[(i, j)] += w * lh[(i - 1, j - 1)];
                    }
                }
            }
            per_node.push((w, gv));
        }
        let hess = want_hess.then(|| {
            let mut cov = Mat::zeros(p, p);
            for (w, gv) in &per_node {
                for i in 0..p {
                    for j in 0..p {
                        cov[(i, j)] += w * (gv[i] - mean[i]) * (gv[j] - mean[j]);
                    }
                }
            }
            hmean + cov
        });
        Ok(Derivs { value, grad: mean, hess })
    }
}

/// Safeguarded Newton search for the mode of a concave-ish log integrand.
/// Returns the mode and the second derivative there.
fn find_mode(phi: &impl Fn(f64) -> (f64, f64, f64), start: f64) -> (f64, f64) {
    let mut u = start;
    let (mut f, mut d1, mut d2) = phi(u);
    for _ in 0..200 {
        if d1.abs() <= 1e-10 * (1.0 + d2.abs()) {
            break;
        }
        let mut step = if d2 < 0.0 { -d1 / d2 } else { d1.signum() };
        step = step.clamp(-2.0, 2.0);
        // halve until the log integrand does not collapse
        let mut tries = 0;
        loop {
            let (nf, nd1, nd2) = phi(u + step);
            if nf.is_finite() && nf >= f - 1e-12 * f.abs().max(1.0) || tries > 30 {
                if nf.is_finite() {
                    u += step;
                    f = nf;
                    d1 = nd1;
                    d2 = nd2;
                }
                break;
            }
            step *= 0.5;
            tries += 1;
        }
        if step.abs() < 1e-15 {
            break;
        }
    }
    (u, d2)
}

/// Exponential kernel (rates `r₁γψ`, `r₀γψ^{-k}`) with gamma mixing `(κ, ρ)`:
/// `Γ(κ+2)ρ^κ r₁r₀ ψ^{1−k} / {Γ(κ)(r₁ψy₁ + r₀y₀ψ^{-k} + ρ)^{κ+2}}`.
fn exponential_gamma(kernel: PairKernel, psi: f64, lambda: &[f64], o: &PairObs, want_hess: bool) -> Derivs {
    let k = match kernel {
        PairKernel::Exponential { mode } => mode.arm0_power(),
        _ => 1.0,
    };
    let (kap, rho) = (lambda[0], lambda[1]);
    let pk = psi.powf(-k);
    let a = o.r1 * psi * o.y1 + o.r0 * o.y0 * pk + rho;
    let ap = o.r1 * o.y1 - k * o.r0 * o.y0 * pk / psi;
    let app = k * (k + 1.0) * o.r0 * o.y0 * pk / (psi * psi);
    let value = (o.r1 * o.r0).ln() + (1.0 - k) * psi.ln() + ln_gamma(kap + 2.0) - ln_gamma(kap)
        + kap * rho.ln()
        - (kap + 2.0) * a.ln();
    let grad = vec![
        (1.0 - k) / psi - (kap + 2.0) * ap / a,
        digamma(kap + 2.0) - digamma(kap) + rho.ln() - a.ln(),
        kap / rho - (kap + 2.0) / a,
    ];
    let hess = want_hess.then(|| {
        let pp = -(1.0 - k) / (psi * psi) - (kap + 2.0) * (app / a - ap * ap / (a * a));
        let pk_ = -ap / a;
        let pr = (kap + 2.0) * ap / (a * a);
        let kk = trigamma(kap + 2.0) - trigamma(kap);
        let kr = 1.0 / rho - 1.0 / a;
        let rr = -kap / (rho * rho) + (kap + 2.0) / (a * a);
        Mat::from_row_slice(3, 3, &[pp, pk_, pr, pk_, kk, kr, pr, kr, rr])
    });
    Derivs { value, grad, hess }
}

/// Poisson kernel with gamma mixing of mean `1/ν` and shape `ω`.
fn poisson_gamma(theta: f64, lambda: &[f64], o: &PairObs, want_hess: bool) -> Derivs {
    let (nu, om) = (lambda[0], lambda[1]);
    let (s1, s0) = (o.y1, o.y0);
    let s = s1 + s0;
    let d = s1 - s0;
    let r = o.r1 * theta.exp() + o.r0 * (-theta).exp();
    let rp = o.r1 * theta.exp() - o.r0 * (-theta).exp();
    let b = r + nu * om;
    let value = ln_gamma(s + om) - ln_gamma(om) + theta * d + om * om.ln() + om * nu.ln() - (s + om) * b.ln()
        + s1 * o.r1.ln()
        + s0 * o.r0.ln()
        - ln_factorial(s1)
        - ln_factorial(s0);
    let grad = vec![
        d - (s + om) * rp / b,
        om / nu - (s + om) * om / b,
        digamma(s + om) - digamma(om) + om.ln() + 1.0 + nu.ln() - b.ln() - (s + om) * nu / b,
    ];
    let hess = want_hess.then(|| {
        let tt = -(s + om) * (r / b - rp * rp / (b * b));
        let tn = (s + om) * rp * om / (b * b);
        let to = -rp / b + (s + om) * rp * nu / (b * b);
        let nn = -om / (nu * nu) + (s + om) * om * om / (b * b);
        let no = 1.0 / nu - (s + 2.0 * om) / b + (s + om) * om * nu / (b * b);
        let oo = trigamma(s + om) - trigamma(om) + 1.0 / om - 2.0 * nu / b + (s + om) * nu * nu / (b * b);
        Mat::from_row_slice(3, 3, &[tt, tn, to, tn, nn, no, to, no, oo])
    });
    Derivs { value, grad, hess }
}

/// Normal kernel with normal mixing `(μ, v)`: a bivariate normal with
/// covariance `v·11ᵀ + diag(1/r₁, 1/r₀)`.
fn normal_normal(psi: f64, lambda: &[f64], o: &PairObs, want_hess: bool) -> Derivs {
    let (mu, v) = (lambda[0], lambda[1]);
    let sigma = Matrix2::new(v + 1.0 / o.r1, v, v, v + 1.0 / o.r0);
    let det = sigma.determinant();
    let pm = sigma.try_inverse().expect("positive definite by construction");
    let d = Vector2::new(o.y1 - mu - psi, o.y0 - mu + psi);
    let e = Vector2::new(-1.0, 1.0);
    let f = Vector2::new(-1.0, -1.0);
    let one = Vector2::new(1.0, 1.0);
    let p = pm * one;
    let pd = p.dot(&d);
    let sp = one.dot(&p);
    let value = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * d.dot(&(pm * d));
    let grad = vec![-d.dot(&(pm * e)), -d.dot(&(pm * f)), -0.5 * sp + 0.5 * pd * pd];
    let hess = want_hess.then(|| {
        let pp = -e.dot(&(pm * e));
        let pmu = -f.dot(&(pm * e));
        let mm = -f.dot(&(pm * f));
        let pv = pd * p.dot(&e);
        let mv = pd * p.dot(&f);
        let vv = 0.5 * sp * sp - sp * pd * pd;
        Mat::from_row_slice(3, 3, &[pp, pmu, pv, pmu, mm, mv, pv, mv, vv])
    });
    Derivs { value, grad, hess }
}

/// Free-function form of [`AssumedModel::loglik`].
pub fn pair_loglik(assumed: &AssumedModel, psi: f64, lambda: &[f64], obs: &PairObs) -> Result<f64> {
    assumed.loglik(psi, lambda, obs)
}

/// Free-function form of [`AssumedModel::derivs`].
pub fn pair_loglik_grad(
    assumed: &AssumedModel,
    psi: f64,
    lambda: &[f64],
    obs: &PairObs,
    order: Order,
) -> Result<Derivs> {
    assumed.derivs(psi, lambda, obs, Some(order))
}
