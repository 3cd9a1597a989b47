//! Assumed random-effects laws `h(γ; λ)`.

use crate::error::{MisfitError, Result};
use crate::families::DensityFamily;
use crate::numerics::linalg::Mat;
use crate::numerics::special::{digamma, ln_gamma, trigamma};

/// Coordinate used internally for a parameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    Log,
}

impl Transform {
    pub fn to_internal(&self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
        }
    }

    pub fn to_natural(&self, t: f64) -> f64 {
        match self {
            Transform::Identity => t,
            Transform::Log => t.exp(),
        }
    }

    /// `dx/dt` and `d²x/dt²` at natural value `x`.
    pub fn chain(&self, x: f64) -> (f64, f64) {
        match self {
            Transform::Identity => (1.0, 0.0),
            Transform::Log => (x, x),
        }
    }
}

/// Family of the assumed mixing law; `λ` is supplied separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumedMixing {
    /// Shape `κ`, rate `ρ`.
    Gamma,
    /// Mean `1/ν`, shape `ω` (rate `νω`).
    GammaMeanShape,
    /// `log γ ~ N(m, s²)`, `λ = (m, s)`.
    LogNormal,
    /// `γ ~ N(μ, v)`.
    Normal,
    /// `γ ≡ γ₀`.
    PointMass,
}

impl AssumedMixing {
    pub fn dim(&self) -> usize {
        match self {
            AssumedMixing::PointMass => 1,
            _ => 2,
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        match self {
            AssumedMixing::Gamma => vec!["kappa", "rho"],
            AssumedMixing::GammaMeanShape => vec!["nu", "omega"],
            AssumedMixing::LogNormal => vec!["log_mean", "log_sd"],
            AssumedMixing::Normal => vec!["mean", "var"],
            AssumedMixing::PointMass => vec!["gamma0"],
        }
    }

    /// Whether the law lives on the positive half-line.
    pub fn positive_support(&self) -> bool {
        !matches!(self, AssumedMixing::Normal)
    }

    pub fn transforms(&self, positive_effect: bool) -> Vec<Transform> {
        use Transform::*;
        match self {
            AssumedMixing::Gamma | AssumedMixing::GammaMeanShape => vec![Log, Log],
            AssumedMixing::LogNormal | AssumedMixing::Normal => vec![Identity, Log],
            AssumedMixing::PointMass => vec![if positive_effect { Log } else { Identity }],
        }
    }

    pub fn check(&self, lambda: &[f64], positive_effect: bool) -> Result<()> {
        if lambda.len() != self.dim() {
            return Err(MisfitError::invalid("lambda", format!("expected {} values", self.dim())));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(MisfitError::invalid("lambda", "must be finite"));
        }
        for (t, (v, name)) in self.transforms(positive_effect).iter().zip(lambda.iter().zip(self.names())) {
            if *t == Transform::Log && *v <= 0.0 {
                return Err(MisfitError::invalid(name, format!("{v} is not positive")));
            }
        }
        if positive_effect && !self.positive_support() {
            return Err(MisfitError::invalid("mixing", "normal mixing needs a real-valued effect"));
        }
        Ok(())
    }

    /// The law as a [`DensityFamily`].
    pub fn family(&self, lambda: &[f64]) -> DensityFamily {
        match self {
            AssumedMixing::Gamma => DensityFamily::Gamma { shape: lambda[0], rate: lambda[1] },
            AssumedMixing::GammaMeanShape => {
                DensityFamily::Gamma { shape: lambda[1], rate: lambda[0] * lambda[1] }
            }
            AssumedMixing::LogNormal => DensityFamily::LogNormal { log_mean: lambda[0], log_sd: lambda[1] },
            AssumedMixing::Normal => DensityFamily::Normal { mean: lambda[0], var: lambda[1] },
            AssumedMixing::PointMass => DensityFamily::DiscreteAtoms { points: vec![lambda[0]], weights: vec![1.0] },
        }
    }

    /// Log density with its first and second `γ`-derivatives.
    pub fn log_h(&self, lambda: &[f64], gamma: f64) -> (f64, f64, f64) {
        match self {
            AssumedMixing::Gamma | AssumedMixing::GammaMeanShape => {
                let (shape, rate) = match self {
                    AssumedMixing::Gamma => (lambda[0], lambda[1]),
                    _ => (lambda[1], lambda[0] * lambda[1]),
                };
                (
                    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * gamma.ln() - rate * gamma,
                    (shape - 1.0) / gamma - rate,
                    -(shape - 1.0) / (gamma * gamma),
                )
            }
            AssumedMixing::LogNormal => {
                let (m, s) = (lambda[0], lambda[1]);
                let lg = gamma.ln();
                let z = (lg - m) / s;
                (
                    -lg - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * z * z,
                    -1.0 / gamma - (lg - m) / (s * s * gamma),
                    1.0 / (gamma * gamma) + (lg - m - 1.0) / (s * s * gamma * gamma),
                )
            }
            AssumedMixing::Normal => {
                let (mu, v) = (lambda[0], lambda[1]);
                (
                    -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (gamma - mu) * (gamma - mu) / (2.0 * v),
                    -(gamma - mu) / v,
                    -1.0 / v,
                )
            }
            AssumedMixing::PointMass => (0.0, 0.0, 0.0),
        }
    }

    /// Gradient and Hessian of `log h(γ; λ)` in `λ`.
    pub fn lambda_score(&self, lambda: &[f64], gamma: f64) -> (Vec<f64>, Mat) {
        match self {
            AssumedMixing::GammaMeanShape => {
                let (nu, om) = (lambda[0], lambda[1]);
                let g = vec![
                    om / nu - om * gamma,
                    (nu * om).ln() + 1.0 - digamma(om) + gamma.ln() - nu * gamma,
                ];
                let h = Mat::from_row_slice(
                    2,
                    2,
                    &[-om / (nu * nu), 1.0 / nu - gamma, 1.0 / nu - gamma, 1.0 / om - trigamma(om)],
                );
                (g, h)
            }
            AssumedMixing::PointMass => (vec![0.0], Mat::zeros(1, 1)),
            _ => self
                .family(lambda)
                .score_and_hessian(gamma)
                .unwrap_or_else(|_| (vec![f64::NAN; 2], Mat::from_element(2, 2, f64::NAN))),
        }
    }

    /// Method-of-moments `λ` from a mean and variance of `γ`.
    pub fn moment_init(&self, mean: f64, var: f64) -> Vec<f64> {
        let var = var.max(1e-6 * mean * mean).max(1e-12);
        match self {
            AssumedMixing::Gamma => vec![mean * mean / var, mean / var],
            AssumedMixing::GammaMeanShape => vec![1.0 / mean, mean * mean / var],
            AssumedMixing::LogNormal => {
                let s2 = (1.0 + var / (mean * mean)).ln();
                vec![mean.ln() - 0.5 * s2, s2.sqrt()]
            }
            AssumedMixing::Normal => vec![mean, var],
            AssumedMixing::PointMass => vec![mean],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::diff;

    #[test]
    fn gamma_derivatives_match_finite_differences() {
        let cases = [
            (AssumedMixing::Gamma, vec![1.7, 0.6]),
            (AssumedMixing::GammaMeanShape, vec![0.8, 2.3]),
            (AssumedMixing::LogNormal, vec![0.2, 0.7]),
            (AssumedMixing::Normal, vec![0.5, 1.4]),
        ];
        for (m, lam) in cases {
            for &g in &[0.3, 1.1, 2.7] {
                let (_, d1, d2) = m.log_h(&lam, g);
                let f = |x: f64| m.log_h(&lam, x).0;
                assert!(diff::rel_err(d1, diff::central(f, g, 1e-6)) < 1e-7, "{m:?}");
                assert!(diff::rel_err(d2, diff::central2(f, g, 1e-4)) < 1e-5, "{m:?}");
                let (lg, lh) = m.lambda_score(&lam, g);
                let fl = |x: &[f64]| m.log_h(x, g).0;
                let ng = diff::gradient(fl, &lam, 1e-6);
                let nh = diff::hessian(fl, &lam, 1e-4);
                for i in 0..2 {
                    assert!(diff::rel_err(lg[i], ng[i]) < 1e-7, "{m:?}");
                    for j in 0..2 {
                        assert!(diff::rel_err(lh[(i, j)], nh[i][j]) < 1e-5, "{m:?}");
                    }
                }
                let fam = m.family(&lam);
                assert!((fam.log_density(g).unwrap() - m.log_h(&lam, g).0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moment_init_recovers_moments() {
        for m in [AssumedMixing::Gamma, AssumedMixing::GammaMeanShape, AssumedMixing::LogNormal, AssumedMixing::Normal] {
            let fam = m.family(&m.moment_init(1.3, 0.66));
            assert!((fam.mean() - 1.3).abs() < 1e-12 && (fam.variance() - 0.66).abs() < 1e-12, "{m:?}");
        }
    }
}
