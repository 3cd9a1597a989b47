//! Standard parametric families: log densities, parameter scores, samplers
//! and expectation rules.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, Normal, Poisson};

use crate::error::{MisfitError, Result};
use crate::numerics::linalg::Mat;
use crate::numerics::quadrature::{anchored_trapezoid, Rule};
use crate::numerics::special::{digamma, ln_factorial, ln_gamma, trigamma};

/// Tail mass left out of series rules for count families.
const SERIES_TAIL: f64 = 1e-12;
const MAX_ATOMS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum DensityFamily {
    Exponential { rate: f64 },
    Normal { mean: f64, var: f64 },
    Gamma { shape: f64, rate: f64 },
    Poisson { mean: f64 },
    LogNormal { log_mean: f64, log_sd: f64 },
    NegativeBinomialMarginal { size: f64, prob: f64 },
    DiscreteAtoms { points: Vec<f64>, weights: Vec<f64> },
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(MisfitError::invalid(field, format!("{v} is not a positive finite number")))
    }
}

impl DensityFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            DensityFamily::Exponential { rate } => positive("rate", *rate),
            DensityFamily::Normal { mean, var } => {
                if !mean.is_finite() {
                    return Err(MisfitError::invalid("mean", "must be finite"));
                }
                positive("var", *var)
            }
            DensityFamily::Gamma { shape, rate } => {
                positive("shape", *shape)?;
                positive("rate", *rate)
            }
            DensityFamily::Poisson { mean } => positive("mean", *mean),
            DensityFamily::LogNormal { log_mean, log_sd } => {
                if !log_mean.is_finite() {
                    return Err(MisfitError::invalid("log_mean", "must be finite"));
                }
                positive("log_sd", *log_sd)
            }
            DensityFamily::NegativeBinomialMarginal { size, prob } => {
                positive("size", *size)?;
                if !(*prob > 0.0 && *prob < 1.0) {
                    return Err(MisfitError::invalid("prob", format!("{prob} is outside (0, 1)")));
                }
                Ok(())
            }
            DensityFamily::DiscreteAtoms { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return Err(MisfitError::invalid("weights", "need one weight per point"));
                }
                if points.len() > MAX_ATOMS {
                    return Err(MisfitError::invalid("points", format!("at most {MAX_ATOMS} atoms")));
                }
                if points.iter().any(|p| !p.is_finite()) {
                    return Err(MisfitError::invalid("points", "must be finite"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(MisfitError::invalid("weights", "must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(MisfitError::invalid("weights", format!("sum to {total}, not 1")));
                }
                Ok(())
            }
        }
    }

    /// Names of the parameter slots, in the order used by scores.
    pub fn param_names(&self) -> Vec<&'static str> {
        match self {
            DensityFamily::Exponential { .. } => vec!["rate"],
            DensityFamily::Normal { .. } => vec!["mean", "var"],
            DensityFamily::Gamma { .. } => vec!["shape", "rate"],
            DensityFamily::Poisson { .. } => vec!["mean"],
            DensityFamily::LogNormal { .. } => vec!["log_mean", "log_sd"],
            DensityFamily::NegativeBinomialMarginal { .. } => vec!["size", "prob"],
            DensityFamily::DiscreteAtoms { .. } => vec![],
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            DensityFamily::Exponential { rate } => vec![*rate],
            DensityFamily::Normal { mean, var } => vec![*mean, *var],
            DensityFamily::Gamma { shape, rate } => vec![*shape, *rate],
            DensityFamily::Poisson { mean } => vec![*mean],
            DensityFamily::LogNormal { log_mean, log_sd } => vec![*log_mean, *log_sd],
            DensityFamily::NegativeBinomialMarginal { size, prob } => vec![*size, *prob],
            DensityFamily::DiscreteAtoms { .. } => vec![],
        }
    }

    /// Same family with a new parameter vector.
    pub fn with_params(&self, p: &[f64]) -> DensityFamily {
        match self {
            DensityFamily::Exponential { .. } => DensityFamily::Exponential { rate: p[0] },
            DensityFamily::Normal { .. } => DensityFamily::Normal { mean: p[0], var: p[1] },
            DensityFamily::Gamma { .. } => DensityFamily::Gamma { shape: p[0], rate: p[1] },
            DensityFamily::Poisson { .. } => DensityFamily::Poisson { mean: p[0] },
            DensityFamily::LogNormal { .. } => DensityFamily::LogNormal { log_mean: p[0], log_sd: p[1] },
            DensityFamily::NegativeBinomialMarginal { .. } => {
                DensityFamily::NegativeBinomialMarginal { size: p[0], prob: p[1] }
            }
            DensityFamily::DiscreteAtoms { .. } => self.clone(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            DensityFamily::Poisson { .. }
                | DensityFamily::NegativeBinomialMarginal { .. }
                | DensityFamily::DiscreteAtoms { .. }
        )
    }

    /// Natural-log density (or mass) at `y`; `−∞` outside the support.
    pub fn log_density(&self, y: f64) -> Result<f64> {
        self.validate()?;
        Ok(self.log_density_unchecked(y))
    }

    pub(crate) fn log_density_unchecked(&self, y: f64) -> f64 {
        let ninf = f64::NEG_INFINITY;
        match self {
            DensityFamily::Exponential { rate } => {
                if y < 0.0 {
                    ninf
                } else {
                    rate.ln() - rate * y
                }
            }
            DensityFamily::Normal { mean, var } => {
                -0.5 * (2.0 * PI * var).ln() - (y - mean) * (y - mean) / (2.0 * var)
            }
            DensityFamily::Gamma { shape, rate } => {
                if y <= 0.0 {
                    ninf
                } else {
                    shape * rate.ln() - ln_gamma(*shape) + (shape - 1.0) * y.ln() - rate * y
                }
            }
            DensityFamily::Poisson { mean } => match count(y) {
                Some(k) => k * mean.ln() - mean - ln_factorial(k),
                None => ninf,
            },
            DensityFamily::LogNormal { log_mean, log_sd } => {
                if y <= 0.0 {
                    ninf
                } else {
                    let z = (y.ln() - log_mean) / log_sd;
                    -y.ln() - log_sd.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * z * z
                }
            }
            DensityFamily::NegativeBinomialMarginal { size, prob } => match count(y) {
                Some(k) => {
                    ln_gamma(k + size) - ln_gamma(*size) - ln_factorial(k) + size * prob.ln()
                        + k * (1.0 - prob).ln()
                }
                None => ninf,
            },
            DensityFamily::DiscreteAtoms { points, weights } => {
                let w: f64 = points.iter().zip(weights).filter(|(p, _)| **p == y).map(|(_, w)| w).sum();
                w.ln()
            }
        }
    }

    /// Gradient and Hessian of the log density in the parameter slots.
    pub fn score_and_hessian(&self, y: f64) -> Result<(Vec<f64>, Mat)> {
        self.validate()?;
        let m2 = |a: f64, b: f64, c: f64| Mat::from_row_slice(2, 2, &[a, b, b, c]);
        match self {
            DensityFamily::Exponential { rate } => {
                Ok((vec![1.0 / rate - y], Mat::from_element(1, 1, -1.0 / (rate * rate))))
            }
            DensityFamily::Normal { mean, var } => {
                let d = y - mean;
                Ok((
                    vec![d / var, (d * d - var) / (2.0 * var * var)],
                    m2(-1.0 / var, -d / (var * var), 0.5 / (var * var) - d * d / (var * var * var)),
                ))
            }
            DensityFamily::Gamma { shape, rate } => {
                if y <= 0.0 {
                    return Err(MisfitError::invalid("y", "outside the gamma support"));
                }
                Ok((
                    vec![rate.ln() - digamma(*shape) + y.ln(), shape / rate - y],
                    m2(-trigamma(*shape), 1.0 / rate, -shape / (rate * rate)),
                ))
            }
            DensityFamily::Poisson { mean } => {
                Ok((vec![y / mean - 1.0], Mat::from_element(1, 1, -y / (mean * mean))))
            }
            DensityFamily::LogNormal { log_mean, log_sd } => {
                if y <= 0.0 {
                    return Err(MisfitError::invalid("y", "outside the lognormal support"));
                }
                let s = *log_sd;
                let z = (y.ln() - log_mean) / s;
                Ok((
                    vec![z / s, (z * z - 1.0) / s],
                    m2(-1.0 / (s * s), -2.0 * z / (s * s), (1.0 - 3.0 * z * z) / (s * s)),
                ))
            }
            DensityFamily::NegativeBinomialMarginal { size, prob } => {
                let k = y;
                let q = 1.0 - prob;
                Ok((
                    vec![digamma(k + size) - digamma(*size) + prob.ln(), size / prob - k / q],
                    m2(
                        trigamma(k + size) - trigamma(*size),
                        1.0 / prob,
                        -size / (prob * prob) - k / (q * q),
                    ),
                ))
            }
            DensityFamily::DiscreteAtoms { .. } => {
                Err(MisfitError::invalid("family", "discrete atoms carry no continuous parameters"))
            }
        }
    }

    /// One draw, deterministic given the stream state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.validate()?;
        Ok(self.sample_unchecked(rng))
    }

    pub(crate) fn sample_unchecked<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DensityFamily::Exponential { rate } => Exp::new(*rate).expect("validated").sample(rng),
            DensityFamily::Normal { mean, var } => Normal::new(*mean, var.sqrt()).expect("validated").sample(rng),
            DensityFamily::Gamma { shape, rate } => gamma_draw(*shape, *rate, rng),
            DensityFamily::Poisson { mean } => Poisson::new(*mean).expect("validated").sample(rng),
            DensityFamily::LogNormal { log_mean, log_sd } => {
                LogNormal::new(*log_mean, *log_sd).expect("validated").sample(rng)
            }
            DensityFamily::NegativeBinomialMarginal { size, prob } => {
                let lam = gamma_draw(*size, prob / (1.0 - prob), rng);
                if lam <= 0.0 {
                    0.0
                } else {
                    Poisson::new(lam).expect("positive mean").sample(rng)
                }
            }
            DensityFamily::DiscreteAtoms { points, weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (p, w) in points.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *p;
                    }
                }
                *points.last().expect("validated non-empty")
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DensityFamily::Exponential { rate } => 1.0 / rate,
            DensityFamily::Normal { mean, .. } => *mean,
            DensityFamily::Gamma { shape, rate } => shape / rate,
            DensityFamily::Poisson { mean } => *mean,
            DensityFamily::LogNormal { log_mean, log_sd } => (log_mean + 0.5 * log_sd * log_sd).exp(),
            DensityFamily::NegativeBinomialMarginal { size, prob } => size * (1.0 - prob) / prob,
            DensityFamily::DiscreteAtoms { points, weights } => points.iter().zip(weights).map(|(p, w)| p * w).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            DensityFamily::Exponential { rate } => 1.0 / (rate * rate),
            DensityFamily::Normal { var, .. } => *var,
            DensityFamily::Gamma { shape, rate } => shape / (rate * rate),
            DensityFamily::Poisson { mean } => *mean,
            DensityFamily::LogNormal { log_mean, log_sd } => {
                let s2 = log_sd * log_sd;
                (s2.exp() - 1.0) * (2.0 * log_mean + s2).exp()
            }
            DensityFamily::NegativeBinomialMarginal { size, prob } => size * (1.0 - prob) / (prob * prob),
            DensityFamily::DiscreteAtoms { points, weights } => {
                let m = self.mean();
                points.iter().zip(weights).map(|(p, w)| w * (p - m) * (p - m)).sum()
            }
        }
    }

    /// Probability-weighted rule for `E[f(Y)]`. Continuous families use a
    /// trapezoid in a standardizing coordinate with step halved per level;
    /// count families use the exact series truncated at mass `1 − 1e-12`;
    /// atoms are exact at every level.
    pub fn rule(&self, level: u32) -> Result<Rule> {
        self.validate()?;
        let refine = 0.5f64.powi(level as i32);
        let rule = match self {
            DensityFamily::Exponential { rate } => gamma_rule(1.0, *rate, refine),
            DensityFamily::Gamma { shape, rate } => gamma_rule(*shape, *rate, refine),
            DensityFamily::Normal { mean, var } => {
                let sd = var.sqrt();
                standard_normal_rule(refine, |z| mean + sd * z)
            }
            DensityFamily::LogNormal { log_mean, log_sd } => {
                standard_normal_rule(refine, |z| (log_mean + log_sd * z).exp())
            }
            DensityFamily::Poisson { .. } | DensityFamily::NegativeBinomialMarginal { .. } => {
                let mut r = Rule::default();
                let mut acc = 0.0;
                let mean = self.mean();
                let mut k = 0.0;
                while acc < 1.0 - SERIES_TAIL || k <= mean {
                    let p = self.log_density_unchecked(k).exp();
                    r.push(k, p);
                    acc += p;
                    k += 1.0;
                    // rounding in the pmf can leave `acc` just short of the target
                    if k > mean && p < 1e-18 {
                        break;
                    }
                    if k > 1e7 {
                        return Err(MisfitError::numerical("count series did not reach its mass", 1.0 - acc));
                    }
                }
                r
            }
            DensityFamily::DiscreteAtoms { points, weights } => Rule { nodes: points.clone(), weights: weights.clone() },
        };
        Ok(rule)
    }

    /// Expected information `E[−∇²log f]` computed with [`Self::rule`].
    pub fn fisher_information(&self, level: u32) -> Result<Mat> {
        let rule = self.rule(level)?;
        let k = self.params().len();
        let mut out = Mat::zeros(k, k);
        for (y, w) in rule.iter() {
            let (_, h) = self.score_and_hessian(y)?;
            out -= h * w;
        }
        Ok(out)
    }
}

fn count(y: f64) -> Option<f64> {
    if y >= 0.0 && y.fract() == 0.0 {
        Some(y)
    } else {
        None
    }
}

/// Gamma draw through rand_distr (scale parametrization).
pub(crate) fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("validated gamma parameters").sample(rng)
}

/// Rule for `Gamma(κ, ρ)` in `s = log(ρy)`, where the density of `s` is
/// `exp(κs − eˢ)/Γ(κ)`.
fn gamma_rule(shape: f64, rate: f64, refine: f64) -> Rule {
    let lo = (ln_gamma(shape + 1.0) - 27.6) / shape;
    let hi = (shape + 40.0 + 12.0 * shape.sqrt()).ln();
    let h = 0.4 / shape.sqrt().max(1.0) * refine;
    let lg = ln_gamma(shape);
    anchored_trapezoid(lo, hi, h, |s| s.exp() / rate, |s| shape * s - s.exp() - lg)
}

fn standard_normal_rule(refine: f64, map: impl Fn(f64) -> f64) -> Rule {
    let c = -0.5 * (2.0 * PI).ln();
    anchored_trapezoid(-9.0, 9.0, 0.5 * refine, map, |z| c - 0.5 * z * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::diff;
    use crate::rng::substream;

    fn all_families() -> Vec<DensityFamily> {
        vec![
            DensityFamily::Exponential { rate: 2.0 },
            DensityFamily::Normal { mean: 0.3, var: 1.7 },
            DensityFamily::Gamma { shape: 0.6, rate: 1.4 },
            DensityFamily::Gamma { shape: 7.5, rate: 0.8 },
            DensityFamily::Poisson { mean: 3.2 },
            DensityFamily::LogNormal { log_mean: 0.0, log_sd: 1.0 },
            DensityFamily::NegativeBinomialMarginal { size: 2.5, prob: 0.4 },
            DensityFamily::DiscreteAtoms { points: vec![0.5, 1.0, 2.5], weights: vec![0.3, 0.4, 0.3] },
        ]
    }

    #[test]
    fn log_density_examples() {
        let e = DensityFamily::Exponential { rate: 2.0 }.log_density(1.0).unwrap();
        assert!((e - (2f64.ln() - 2.0)).abs() < 1e-15);
        assert!((e + 1.306853).abs() < 1e-6);
        assert_eq!(DensityFamily::Poisson { mean: 1.0 }.log_density(0.0).unwrap(), -1.0);
        let n = DensityFamily::Normal { mean: 0.0, var: 1.0 }.log_density(0.0).unwrap();
        assert!((n + 0.918939).abs() < 1e-6);
        let a = DensityFamily::DiscreteAtoms { points: vec![1.0], weights: vec![1.0] };
        assert_eq!(a.log_density(2.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn score_examples() {
        let (g, _) = DensityFamily::Exponential { rate: 2.0 }.score_and_hessian(1.0).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15);
        let (g, _) = DensityFamily::Normal { mean: 0.0, var: 1.0 }.score_and_hessian(0.0).unwrap();
        assert_eq!(g, vec![0.0, -0.5]);
        let (g, _) = DensityFamily::Poisson { mean: 4.0 }.score_and_hessian(4.0).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn parameter_domain_is_enforced() {
        assert!(DensityFamily::Exponential { rate: -1.0 }.log_density(1.0).is_err());
        assert!(DensityFamily::Normal { mean: 0.0, var: 0.0 }.log_density(1.0).is_err());
        let bad = DensityFamily::DiscreteAtoms { points: vec![1.0, 2.0], weights: vec![0.5, 0.6] };
        assert!(bad.log_density(1.0).is_err());
        assert!(DensityFamily::NegativeBinomialMarginal { size: 1.0, prob: 1.0 }.validate().is_err());
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        for fam in all_families() {
            if matches!(fam, DensityFamily::DiscreteAtoms { .. }) {
                assert!(fam.score_and_hessian(1.0).is_err());
                continue;
            }
            let p0 = fam.params();
            let ys: Vec<f64> = if fam.is_discrete() {
                (0..10).map(|k| k as f64).collect()
            } else {
                (1..=10).map(|k| 0.25 * k as f64).collect()
            };
            for (j, y) in ys.iter().enumerate() {
                let scale = 1.0 + 0.05 * j as f64;
                let p: Vec<f64> = p0
                    .iter()
                    .map(|v| if matches!(fam, DensityFamily::NegativeBinomialMarginal { .. }) { *v } else { v * scale })
                    .collect();
                let f = fam.with_params(&p);
                let (g, h) = f.score_and_hessian(*y).unwrap();
                let lf = |q: &[f64]| f.with_params(q).log_density_unchecked(*y);
                let gn = diff::gradient(lf, &p, 1e-6);
                let hn = diff::hessian(lf, &p, 1e-4);
                for i in 0..p.len() {
                    assert!(diff::rel_err(g[i], gn[i]) < 1e-6, "{f:?} y={y} g{i}: {} vs {}", g[i], gn[i]);
                    for k in 0..p.len() {
                        assert!(diff::rel_err(h[(i, k)], hn[i][k]) < 1e-5, "{f:?} y={y} h{i}{k}");
                    }
                }
            }
        }
    }

    #[test]
    fn rules_are_normalized_and_match_moments() {
        for fam in all_families() {
            let r = fam.rule(0).unwrap();
            assert!((r.total_weight() - 1.0).abs() < 1e-8, "{fam:?}: {}", r.total_weight());
            let m = r.integrate(|y| y);
            assert!((m - fam.mean()).abs() < 1e-8 * fam.mean().abs().max(1.0), "{fam:?}: {m}");
            let v = r.integrate(|y| (y - fam.mean()).powi(2));
            assert!((v - fam.variance()).abs() < 1e-7 * fam.variance().max(1.0), "{fam:?}: {v}");
        }
    }

    #[test]
    fn score_has_zero_mean_under_rule() {
        for fam in all_families() {
            if matches!(fam, DensityFamily::DiscreteAtoms { .. }) {
                continue;
            }
            let r = fam.rule(1).unwrap();
            for i in 0..fam.params().len() {
                let m = r.integrate(|y| fam.score_and_hessian(y).unwrap().0[i]);
                assert!(m.abs() < 1e-8, "{fam:?} slot {i}: {m}");
            }
        }
    }

    #[test]
    fn normal_fisher_information_is_diagonal() {
        let f = DensityFamily::Normal { mean: 1.0, var: 2.0 }.fisher_information(1).unwrap();
        assert!((f[(0, 0)] - 0.5).abs() < 1e-10);
        assert!(f[(0, 1)].abs() < 1e-12);
        assert!((f[(1, 1)] - 1.0 / 8.0).abs() < 1e-10);
    }

    #[test]
    fn sampler_moments() {
        let n = 100_000;
        for fam in all_families() {
            let mut rng = substream(11, 0);
            let xs: Vec<f64> = (0..n).map(|_| fam.sample(&mut rng).unwrap()).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let se = (fam.variance() / n as f64).sqrt();
            assert!((mean - fam.mean()).abs() < 3.0 * se + 1e-12, "{fam:?}: mean {mean}");
        }
        let mut rng = substream(12, 0);
        let xs: Vec<f64> = (0..n).map(|_| DensityFamily::Normal { mean: 0.0, var: 1.0 }.sample(&mut rng).unwrap()).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
        assert!((v - 1.0).abs() < 0.03);
        let point = DensityFamily::DiscreteAtoms { points: vec![1.0], weights: vec![1.0] };
        assert!((0..100).all(|_| point.sample(&mut rng).unwrap() == 1.0));
    }
}
