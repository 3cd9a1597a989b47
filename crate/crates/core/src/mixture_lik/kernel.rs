//! Conditional laws of a stratum pair `(S₁, S₀)` given the stratum effect `γ`.

use rand::Rng;

use crate::error::{MisfitError, Result};
use crate::families::DensityFamily;
use crate::group_core::ParametrizationMode;
use crate::numerics::quadrature::Rule;
use crate::numerics::special::ln_factorial;

/// One stratum: the two sufficient statistics and the group sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairObs {
    pub y1: f64,
    pub y0: f64,
    pub r1: f64,
    pub r0: f64,
}

impl PairObs {
    pub fn pair(y1: f64, y0: f64) -> Self {
        PairObs { y1, y0, r1: 1.0, r0: 1.0 }
    }

    pub fn stratum(y1: f64, y0: f64, r1: f64, r0: f64) -> Self {
        PairObs { y1, y0, r1, r0 }
    }
}

/// Kernel log density and its derivatives in `(ψ, γ)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct KernelDerivs {
    pub log_k: f64,
    pub d_psi: f64,
    pub d_psi_psi: f64,
    pub d_gamma: f64,
    pub d_gamma_gamma: f64,
    pub d_psi_gamma: f64,
}

/// The conditional pair law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairKernel {
    /// Exponential arms with rates `r₁γψ` and `r₀γψ^{-k}` (`k` from the mode:
    /// 1 symmetric, 0 non-symmetric). The arms are group minima, or single
    /// pairs when `r₁ = r₀ = 1`.
    Exponential { mode: ParametrizationMode },
    /// Normal arm means `γ + ψ`, `γ − ψ` with variances `1/r₁`, `1/r₀`.
    Normal,
    /// Poisson counts with means `r₁γe^θ` and `r₀γe^{−θ}`.
    Poisson,
}

impl PairKernel {
    pub fn exponential() -> Self {
        PairKernel::Exponential { mode: ParametrizationMode::Symmetric }
    }

    pub fn exponential_nonsymmetric() -> Self {
        PairKernel::Exponential { mode: ParametrizationMode::NonSymmetric }
    }

    /// Whether `γ` lives on the positive half-line.
    pub fn positive_effect(&self) -> bool {
        !matches!(self, PairKernel::Normal)
    }

    /// Whether the interest parameter must be positive.
    pub fn positive_interest(&self) -> bool {
        matches!(self, PairKernel::Exponential { .. })
    }

    fn k(&self) -> f64 {
        match self {
            PairKernel::Exponential { mode } => mode.arm0_power(),
            _ => 1.0,
        }
    }

    pub fn check_psi(&self, psi: f64) -> Result<()> {
        if !psi.is_finite() || (self.positive_interest() && psi <= 0.0) {
            return Err(MisfitError::invalid("psi", format!("{psi} outside the interest domain")));
        }
        Ok(())
    }

    pub fn check_obs(&self, o: &PairObs) -> Result<()> {
        if !(o.r1 > 0.0 && o.r0 > 0.0) {
            return Err(MisfitError::invalid("stratum_counts", "counts must be positive"));
        }
        let ok = match self {
            PairKernel::Exponential { .. } => o.y1 > 0.0 && o.y0 > 0.0,
            PairKernel::Normal => o.y1.is_finite() && o.y0.is_finite(),
            PairKernel::Poisson => {
                o.y1 >= 0.0 && o.y0 >= 0.0 && o.y1.fract() == 0.0 && o.y0.fract() == 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(MisfitError::invalid("y", format!("({}, {}) outside the kernel support", o.y1, o.y0)))
        }
    }

    /// Log kernel and derivatives at `(ψ, γ)`.
    pub fn eval(&self, psi: f64, gamma: f64, o: &PairObs) -> KernelDerivs {
        match self {
            PairKernel::Exponential { .. } => {
                let k = self.k();
                let pk = psi.powf(-k);
                let b = o.r1 * psi * o.y1 + o.r0 * o.y0 * pk;
                let bp = o.r1 * o.y1 - k * o.r0 * o.y0 * pk / psi;
                let bpp = k * (k + 1.0) * o.r0 * o.y0 * pk / (psi * psi);
                KernelDerivs {
                    log_k: (o.r1 * o.r0).ln() + 2.0 * gamma.ln() + (1.0 - k) * psi.ln() - gamma * b,
                    d_psi: (1.0 - k) / psi - gamma * bp,
                    d_psi_psi: -(1.0 - k) / (psi * psi) - gamma * bpp,
                    d_gamma: 2.0 / gamma - b,
                    d_gamma_gamma: -2.0 / (gamma * gamma),
                    d_psi_gamma: -bp,
                }
            }
            PairKernel::Normal => {
                let e1 = o.y1 - gamma - psi;
                let e0 = o.y0 - gamma + psi;
                KernelDerivs {
                    log_k: 0.5 * (o.r1 * o.r0).ln()
                        - (2.0 * std::f64::consts::PI).ln()
                        - 0.5 * (o.r1 * e1 * e1 + o.r0 * e0 * e0),
                    d_psi: o.r1 * e1 - o.r0 * e0,
                    d_psi_psi: -(o.r1 + o.r0),
                    d_gamma: o.r1 * e1 + o.r0 * e0,
                    d_gamma_gamma: -(o.r1 + o.r0),
                    d_psi_gamma: o.r0 - o.r1,
                }
            }
            PairKernel::Poisson => {
                let (s1, s0) = (o.y1, o.y0);
                let s = s1 + s0;
                let ep = psi.exp();
                let em = (-psi).exp();
                let rr = o.r1 * ep + o.r0 * em;
                let rp = o.r1 * ep - o.r0 * em;
                KernelDerivs {
                    log_k: s * gamma.ln() + psi * (s1 - s0) + s1 * o.r1.ln() + s0 * o.r0.ln()
                        - gamma * rr
                        - ln_factorial(s1)
                        - ln_factorial(s0),
                    d_psi: (s1 - s0) - gamma * rp,
                    d_psi_psi: -gamma * rr,
                    d_gamma: s / gamma - rr,
                    d_gamma_gamma: -s / (gamma * gamma),
                    d_psi_gamma: -rp,
                }
            }
        }
    }

    /// Conditional laws of the two arms.
    pub fn arm_families(&self, psi: f64, gamma: f64, r1: f64, r0: f64) -> (DensityFamily, DensityFamily) {
        match self {
            PairKernel::Exponential { .. } => (
                DensityFamily::Exponential { rate: r1 * gamma * psi },
                DensityFamily::Exponential { rate: r0 * gamma * psi.powf(-self.k()) },
            ),
            PairKernel::Normal => (
                DensityFamily::Normal { mean: gamma + psi, var: 1.0 / r1 },
                DensityFamily::Normal { mean: gamma - psi, var: 1.0 / r0 },
            ),
            PairKernel::Poisson => (
                DensityFamily::Poisson { mean: r1 * gamma * psi.exp() },
                DensityFamily::Poisson { mean: r0 * gamma * (-psi).exp() },
            ),
        }
    }

    pub fn arm_rules(&self, psi: f64, gamma: f64, r1: f64, r0: f64, level: u32) -> Result<(Rule, Rule)> {
        let (a, b) = self.arm_families(psi, gamma, r1, r0);
        Ok((a.rule(level)?, b.rule(level)?))
    }

    pub fn sample<R: Rng + ?Sized>(&self, psi: f64, gamma: f64, r1: f64, r0: f64, rng: &mut R) -> PairObs {
        let (a, b) = self.arm_families(psi, gamma, r1, r0);
        let y1 = a.sample_unchecked(rng);
        let y0 = b.sample_unchecked(rng);
        PairObs { y1, y0, r1, r0 }
    }
}
