//! One-parameter transformation groups acting on a sample space, the pair
//! models they generate, and pointwise checks of symmetric factorization and
//! score antisymmetry.

use std::f64::consts::{PI, TAU};

use crate::error::{MisfitError, Result};
use crate::numerics::{diff, halton, special};

const CIRCLE_TOL: f64 = 1e-9;

/// A point of the sample space: the real line or the unit circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    Real(f64),
    Circle([f64; 2]),
}

impl Point {
    pub fn on_circle(angle: f64) -> Point {
        Point::Circle([angle.cos(), angle.sin()])
    }

    pub fn real(&self) -> Option<f64> {
        match self {
            Point::Real(x) => Some(*x),
            Point::Circle(_) => None,
        }
    }

    /// Angle in `(-π, π]` of a circle point.
    pub fn angle(&self) -> Option<f64> {
        match self {
            Point::Circle(v) => Some(v[1].atan2(v[0])),
            Point::Real(_) => None,
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        match self {
            Point::Real(x) => vec![*x],
            Point::Circle(v) => v.to_vec(),
        }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupKind {
    Location,
    Scale,
    Rate,
    Rotation2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// The action `g_ψ` of a one-parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupAction {
    pub kind: GroupKind,
}

impl GroupAction {
    pub fn new(kind: GroupKind) -> Self {
        GroupAction { kind }
    }

    fn check_psi(&self, psi: f64) -> Result<()> {
        if !psi.is_finite() {
            return Err(MisfitError::invalid("psi", "must be finite"));
        }
        match self.kind {
            GroupKind::Location => Ok(()),
            GroupKind::Scale | GroupKind::Rate if psi <= 0.0 => {
                Err(MisfitError::invalid("psi", format!("{psi} is not positive")))
            }
            GroupKind::Rotation2D if !(0.0..TAU).contains(&psi) => {
                Err(MisfitError::invalid("psi", format!("{psi} is outside [0, 2π)")))
            }
            _ => Ok(()),
        }
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        match (self.kind, x) {
            (GroupKind::Rotation2D, Point::Circle(v)) => {
                let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
                if (r - 1.0).abs() > CIRCLE_TOL {
                    return Err(MisfitError::invalid("x", format!("norm {r} is off the unit circle")));
                }
                Ok(())
            }
            (GroupKind::Rotation2D, Point::Real(_)) => {
                Err(MisfitError::invalid("x", "rotation acts on circle points"))
            }
            (_, Point::Circle(_)) => Err(MisfitError::invalid("x", "real action applied to a circle point")),
            (_, Point::Real(v)) if !v.is_finite() => Err(MisfitError::invalid("x", "must be finite")),
            (GroupKind::Rate, Point::Real(v)) if *v <= 0.0 => {
                Err(MisfitError::invalid("x", format!("{v} is not positive")))
            }
            _ => Ok(()),
        }
    }

    pub fn check(&self, psi: f64, x: &Point) -> Result<()> {
        self.check_psi(psi)?;
        self.check_point(x)
    }

    /// `g_ψ x`.
    pub fn apply(&self, psi: f64, x: &Point) -> Result<Point> {
        self.check(psi, x)?;
        Ok(self.map(psi, x))
    }

    /// `g_ψ⁻¹ x`.
    pub fn invert(&self, psi: f64, x: &Point) -> Result<Point> {
        self.check(psi, x)?;
        Ok(self.map_inverse(psi, x))
    }

    /// `|d(g_ψ x)/dx|` (Forward) or `|d(g_ψ⁻¹ x)/dx|` (Inverse).
    pub fn jacobian_magnitude(&self, psi: f64, x: &Point, direction: Direction) -> Result<f64> {
        self.check(psi, x)?;
        Ok(self.jac(psi, direction))
    }

    // Unchecked versions accept any real ψ; used inside differentiation where
    // ψ ± h may step outside the reporting domain.
    pub(crate) fn map(&self, psi: f64, x: &Point) -> Point {
        match (self.kind, x) {
            (GroupKind::Location, Point::Real(v)) => Point::Real(v + psi),
            (GroupKind::Scale, Point::Real(v)) => Point::Real(v * psi),
            (GroupKind::Rate, Point::Real(v)) => Point::Real(v / psi),
            (GroupKind::Rotation2D, Point::Circle(v)) => rotate(psi, v),
            (_, p) => *p,
        }
    }

    pub(crate) fn map_inverse(&self, psi: f64, x: &Point) -> Point {
        match (self.kind, x) {
            (GroupKind::Location, Point::Real(v)) => Point::Real(v - psi),
            (GroupKind::Scale, Point::Real(v)) => Point::Real(v / psi),
            (GroupKind::Rate, Point::Real(v)) => Point::Real(v * psi),
            (GroupKind::Rotation2D, Point::Circle(v)) => rotate(-psi, v),
            (_, p) => *p,
        }
    }

    pub(crate) fn jac(&self, psi: f64, direction: Direction) -> f64 {
        let fwd = match self.kind {
            GroupKind::Location | GroupKind::Rotation2D => 1.0,
            GroupKind::Scale => psi.abs(),
            GroupKind::Rate => 1.0 / psi.abs(),
        };
        match direction {
            Direction::Forward => fwd,
            Direction::Inverse => 1.0 / fwd,
        }
    }

    /// The identity element of the group.
    pub fn identity(&self) -> f64 {
        match self.kind {
            GroupKind::Location | GroupKind::Rotation2D => 0.0,
            GroupKind::Scale | GroupKind::Rate => 1.0,
        }
    }

    /// `ψ ↦ ψ^k` in the group's own composition law (`kψ` additively,
    /// `ψ^k` multiplicatively).
    pub(crate) fn power(&self, psi: f64, k: f64) -> f64 {
        match self.kind {
            GroupKind::Location | GroupKind::Rotation2D => k * psi,
            GroupKind::Scale | GroupKind::Rate => psi.powf(k),
        }
    }
}

fn rotate(angle: f64, v: &[f64; 2]) -> Point {
    let (s, c) = angle.sin_cos();
    let x = c * v[0] - s * v[1];
    let y = s * v[0] + c * v[1];
    let r = (x * x + y * y).sqrt();
    Point::Circle([x / r, y / r])
}

/// The common baseline density `f_U(u; γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseDensity {
    /// `γ e^{−γu}` on `u > 0`.
    ExponentialRate,
    /// `e^{−u/γ}/γ` on `u > 0`.
    ExponentialMean,
    /// `N(γ, 1)`.
    NormalLocation,
    /// von Mises on the circle with mean direction `γ` (an angle).
    VonMises { concentration: f64 },
}

impl BaseDensity {
    pub fn log_density(&self, gamma: f64, u: &Point) -> f64 {
        match (self, u) {
            (BaseDensity::ExponentialRate, Point::Real(x)) => {
                if *x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    gamma.ln() - gamma * x
                }
            }
            (BaseDensity::ExponentialMean, Point::Real(x)) => {
                if *x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -gamma.ln() - x / gamma
                }
            }
            (BaseDensity::NormalLocation, Point::Real(x)) => {
                -0.5 * (2.0 * PI).ln() - 0.5 * (x - gamma) * (x - gamma)
            }
            (BaseDensity::VonMises { concentration: k }, Point::Circle(_)) => {
                let phi = u.angle().unwrap_or(0.0);
                k * (phi - gamma).cos() - (TAU * special::bessel_i0(*k)).ln()
            }
            _ => f64::NEG_INFINITY,
        }
    }

    fn check_gamma(&self, gamma: f64) -> Result<()> {
        let ok = match self {
            BaseDensity::ExponentialRate | BaseDensity::ExponentialMean => gamma > 0.0 && gamma.is_finite(),
            BaseDensity::NormalLocation | BaseDensity::VonMises { .. } => gamma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(MisfitError::invalid("gamma", format!("{gamma} outside the nuisance domain")))
        }
    }
}

/// How arm 0 is transformed relative to arm 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParametrizationMode {
    /// Arm 1 uses `g_ψ`, arm 0 uses `g_ψ⁻¹`.
    Symmetric,
    /// The full effect sits on arm 1; arm 0 is untransformed.
    NonSymmetric,
    /// Arm 0 uses `g_ψ^k` in place of `g_ψ`; `k = 1` is the symmetric case.
    Perturbed(f64),
}

impl ParametrizationMode {
    pub fn arm0_power(&self) -> f64 {
        match self {
            ParametrizationMode::Symmetric => 1.0,
            ParametrizationMode::NonSymmetric => 0.0,
            ParametrizationMode::Perturbed(k) => *k,
        }
    }
}

/// A treated/untreated pair model generated by a baseline density and a
/// group action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricPairModel {
    pub base: BaseDensity,
    pub action: GroupAction,
    pub mode: ParametrizationMode,
}

/// Values of `a` and `c` summed over both orderings of `(u₁, u₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AntisymmetryResidual {
    /// `a(u₁,u₀) + a(u₀,u₁)`; two components for circle points.
    pub a: Vec<f64>,
    pub c: f64,
    /// `a(u₁,u₀)` and `c(u₁,u₀)` before summation.
    pub a_forward: Vec<f64>,
    pub c_forward: f64,
}

impl AntisymmetryResidual {
    pub fn a_norm(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.a_norm().max(self.c.abs())
    }
}

impl SymmetricPairModel {
    pub fn new(base: BaseDensity, kind: GroupKind, mode: ParametrizationMode) -> Self {
        SymmetricPairModel { base, action: GroupAction::new(kind), mode }
    }

    pub fn exponential_pairs(mode: ParametrizationMode) -> Self {
        Self::new(BaseDensity::ExponentialRate, GroupKind::Rate, mode)
    }

    pub fn normal_pairs(mode: ParametrizationMode) -> Self {
        Self::new(BaseDensity::NormalLocation, GroupKind::Location, mode)
    }

    pub fn rotation_pairs(concentration: f64, mode: ParametrizationMode) -> Self {
        Self::new(BaseDensity::VonMises { concentration }, GroupKind::Rotation2D, mode)
    }

    fn arm0_psi(&self, psi: f64) -> f64 {
        self.action.power(psi, self.mode.arm0_power())
    }

    /// `u₁` from `y₁` under the mode's arm-1 map.
    pub fn u1_of(&self, psi: f64, y1: &Point) -> Point {
        self.action.map_inverse(psi, y1)
    }

    /// `u₀` from `y₀` under the mode's arm-0 map.
    pub fn u0_of(&self, psi: f64, y0: &Point) -> Point {
        self.action.map(self.arm0_psi(psi), y0)
    }

    pub fn y1_of(&self, psi: f64, u1: &Point) -> Point {
        self.action.map(psi, u1)
    }

    pub fn y0_of(&self, psi: f64, u0: &Point) -> Point {
        self.action.map_inverse(self.arm0_psi(psi), u0)
    }

    fn natural_pairing(&self) -> bool {
        matches!(
            (self.base, self.action.kind),
            (BaseDensity::ExponentialRate, GroupKind::Rate)
                | (BaseDensity::ExponentialMean, GroupKind::Scale)
                | (BaseDensity::NormalLocation, GroupKind::Location)
                | (BaseDensity::VonMises { .. }, GroupKind::Rotation2D)
        )
    }

    /// Log densities of the two arms at `(y₁, y₀)`.
    ///
    /// Natural base/action pairings use the explicit family formulas (for
    /// example rates `γψ` and `γ/ψ`); other pairings use the push-forward of
    /// `f_U` through the arm maps.
    pub fn arm_log_densities(&self, psi: f64, gamma: f64, y1: &Point, y0: &Point) -> (f64, f64) {
        let k = self.mode.arm0_power();
        if self.natural_pairing() {
            return match (self.base, y1, y0) {
                (BaseDensity::ExponentialRate, Point::Real(a), Point::Real(b)) => {
                    let r1 = gamma * psi;
                    let r0 = gamma * psi.powf(-k);
                    (exp_rate_logpdf(r1, *a), exp_rate_logpdf(r0, *b))
                }
                (BaseDensity::ExponentialMean, Point::Real(a), Point::Real(b)) => {
                    let m1 = gamma * psi;
                    let m0 = gamma * psi.powf(-k);
                    (exp_rate_logpdf(1.0 / m1, *a), exp_rate_logpdf(1.0 / m0, *b))
                }
                (BaseDensity::NormalLocation, Point::Real(a), Point::Real(b)) => {
                    let c = -0.5 * (2.0 * PI).ln();
                    let d1 = a - gamma - psi;
                    let d0 = b - gamma + k * psi;
                    (c - 0.5 * d1 * d1, c - 0.5 * d0 * d0)
                }
                (BaseDensity::VonMises { concentration }, _, _) => {
                    let norm = (TAU * special::bessel_i0(concentration)).ln();
                    let p1 = y1.angle().unwrap_or(0.0);
                    let p0 = y0.angle().unwrap_or(0.0);
                    (
                        concentration * (p1 - gamma - psi).cos() - norm,
                        concentration * (p0 - gamma + k * psi).cos() - norm,
                    )
                }
                _ => (f64::NEG_INFINITY, f64::NEG_INFINITY),
            };
        }
        let psi0 = self.arm0_psi(psi);
        let l1 = self.base.log_density(gamma, &self.u1_of(psi, y1))
            + self.action.jac(psi, Direction::Inverse).ln();
        let l0 = self.base.log_density(gamma, &self.u0_of(psi, y0))
            + self.action.jac(psi0, Direction::Forward).ln();
        (l1, l0)
    }

    /// `|f₁(y₁)f₀(y₀) − f_U(u₁;γ)f_U(u₀;γ)·J₁⁺J₀⁺|` with the symmetric maps
    /// `u₁ = g⁻¹y₁`, `u₀ = g y₀`, whatever the model's own mode.
    pub fn symmetry_residual(&self, psi: f64, gamma: f64, y1: &Point, y0: &Point) -> Result<f64> {
        self.action.check(psi, y1)?;
        self.action.check(psi, y0)?;
        self.base.check_gamma(gamma)?;
        let (l1, l0) = self.arm_log_densities(psi, gamma, y1, y0);
        let u1 = self.action.map_inverse(psi, y1);
        let u0 = self.action.map(psi, y0);
        let j = self.action.jac(psi, Direction::Inverse) * self.action.jac(psi, Direction::Forward);
        let rhs = (self.base.log_density(gamma, &u1) + self.base.log_density(gamma, &u0)).exp() * j;
        Ok(((l1 + l0).exp() - rhs).abs())
    }

    /// `∇_ψ log f₁(y₁)f₀(y₀)` at fixed `(y₁, y₀)`.
    pub fn score_psi(&self, psi: f64, gamma: f64, y1: &Point, y0: &Point) -> f64 {
        if let Some(v) = self.analytic_score(psi, gamma, y1, y0) {
            return v;
        }
        let f = |p: f64| {
            let (a, b) = self.arm_log_densities(p, gamma, y1, y0);
            a + b
        };
        let h = 1e-6 * psi.abs().max(1.0);
        diff::central(f, psi, h)
    }

    fn analytic_score(&self, psi: f64, gamma: f64, y1: &Point, y0: &Point) -> Option<f64> {
        if !self.natural_pairing() {
            return None;
        }
        let k = self.mode.arm0_power();
        match (self.base, y1, y0) {
            (BaseDensity::ExponentialRate, Point::Real(a), Point::Real(b)) => {
                Some(1.0 / psi - gamma * a - k / psi + k * gamma * b * psi.powf(-k - 1.0))
            }
            (BaseDensity::ExponentialMean, Point::Real(a), Point::Real(b)) => {
                Some(-1.0 / psi + a / (gamma * psi * psi) + k / psi - k * b * psi.powf(k - 1.0) / gamma)
            }
            (BaseDensity::NormalLocation, Point::Real(a), Point::Real(b)) => {
                Some((a - gamma - psi) - k * (b - gamma + k * psi))
            }
            (BaseDensity::VonMises { concentration }, _, _) => {
                let p1 = y1.angle()?;
                let p0 = y0.angle()?;
                Some(
                    concentration * (p1 - gamma - psi).sin()
                        - k * concentration * (p0 - gamma + k * psi).sin(),
                )
            }
            _ => None,
        }
    }

    /// `∇_ψℓ(ψ; γ, u₁, u₀) + ∇_ψℓ(ψ; γ, u₀, u₁)`, where the data are rebuilt
    /// from the standardized values through the mode's maps.
    pub fn score_antisymmetry_residual(&self, psi: f64, gamma: f64, u1: &Point, u0: &Point) -> Result<f64> {
        self.action.check(psi, u1)?;
        self.action.check(psi, u0)?;
        self.base.check_gamma(gamma)?;
        let at = |a: &Point, b: &Point| self.score_psi(psi, gamma, &self.y1_of(psi, a), &self.y0_of(psi, b));
        let r = at(u1, u0) + at(u0, u1);
        if self.analytic_score(psi, gamma, &self.y1_of(psi, u1), &self.y0_of(psi, u0)).is_none()
            && (1e-8..1e-5).contains(&r.abs())
        {
            let rich = |a: &Point, b: &Point| {
                let y1 = self.y1_of(psi, a);
                let y0 = self.y0_of(psi, b);
                let f = |p: f64| {
                    let (x, y) = self.arm_log_densities(p, gamma, &y1, &y0);
                    x + y
                };
                diff::richardson(f, psi, 1e-3 * psi.abs().max(1.0)).0
            };
            return Ok(rich(u1, u0) + rich(u0, u1));
        }
        Ok(r)
    }

    /// `a` and `c` of the pairing condition, by central differences of the
    /// maps `ψ ↦ u₁(ψ)`, `ψ ↦ u₀(ψ)` and of the Jacobian factors.
    pub fn antisymmetry_conditions(
        &self,
        psi: f64,
        u1: &Point,
        u0: &Point,
        fd_step: f64,
    ) -> Result<AntisymmetryResidual> {
        if !(fd_step > 0.0) {
            return Err(MisfitError::invalid("fd_step", "must be positive"));
        }
        self.action.check(psi, u1)?;
        self.action.check(psi, u0)?;
        let forward = self.pairing_terms(psi, u1, u0, fd_step);
        let backward = self.pairing_terms(psi, u0, u1, fd_step);
        let mut out = AntisymmetryResidual {
            a: forward.0.iter().zip(&backward.0).map(|(x, y)| x + y).collect(),
            c: forward.1 + backward.1,
            a_forward: forward.0.clone(),
            c_forward: forward.1,
        };
        if (1e-8..1e-5).contains(&out.max_abs()) {
            let h = fd_step * 1e3;
            let f = self.pairing_terms_richardson(psi, u1, u0, h);
            let b = self.pairing_terms_richardson(psi, u0, u1, h);
            out.a = f.0.iter().zip(&b.0).map(|(x, y)| x + y).collect();
            out.c = f.1 + b.1;
        }
        Ok(out)
    }

    /// `(a(u₁,u₀), c(u₁,u₀))` where the first argument is a standardized arm-1
    /// value and the second an arm-0 value.
    fn pairing_terms(&self, psi: f64, u1: &Point, u0: &Point, step: f64) -> (Vec<f64>, f64) {
        let h = step * psi.abs().max(1.0);
        let y1 = self.y1_of(psi, u1);
        let y0 = self.y0_of(psi, u0);
        let du1 = vec_central(|p| self.u1_of(p, &y1).coords(), psi, h);
        let du0 = vec_central(|p| self.u0_of(p, &y0).coords(), psi, h);
        let a = du1.iter().zip(&du0).map(|(x, y)| x + y).collect();
        let j1 = |p: f64| self.action.jac(p, Direction::Inverse);
        let j0 = |p: f64| self.action.jac(self.arm0_psi(p), Direction::Forward);
        let c = diff::central(j1, psi, h) * j0(psi) + diff::central(j0, psi, h) * j1(psi);
        (a, c)
    }

    fn pairing_terms_richardson(&self, psi: f64, u1: &Point, u0: &Point, step: f64) -> (Vec<f64>, f64) {
        let (a1, c1) = self.pairing_terms(psi, u1, u0, step);
        let (a2, c2) = self.pairing_terms(psi, u1, u0, step / 2.0);
        let a = a1.iter().zip(&a2).map(|(x, y)| (4.0 * y - x) / 3.0).collect();
        (a, (4.0 * c2 - c1) / 3.0)
    }
}

fn exp_rate_logpdf(rate: f64, y: f64) -> f64 {
    if y <= 0.0 {
        f64::NEG_INFINITY
    } else {
        rate.ln() - rate * y
    }
}

fn vec_central(f: impl Fn(f64) -> Vec<f64>, x: f64, h: f64) -> Vec<f64> {
    let p = f(x + h);
    let m = f(x - h);
    p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// A probe `(ψ, γ, u₁, u₀)` for pointwise checks.
#[derive(Debug, Clone, Copy)]
pub struct Probe {
    pub psi: f64,
    pub gamma: f64,
    pub u1: Point,
    pub u0: Point,
}

/// Deterministic low-discrepancy probes over a box suited to the action.
pub fn probe_grid(kind: GroupKind, n: usize) -> Vec<Probe> {
    let bounds: [(f64, f64); 4] = match kind {
        GroupKind::Location => [(-2.0, 2.0), (-2.0, 2.0), (-3.0, 3.0), (-3.0, 3.0)],
        GroupKind::Scale | GroupKind::Rate => [(0.3, 3.0), (0.3, 3.0), (0.05, 5.0), (0.05, 5.0)],
        GroupKind::Rotation2D => [(0.0, TAU), (0.0, TAU), (0.0, TAU), (0.0, TAU)],
    };
    halton::points_in_box(n, &bounds)
        .into_iter()
        .map(|p| match kind {
            GroupKind::Rotation2D => Probe {
                psi: p[0],
                gamma: p[1],
                u1: Point::on_circle(p[2]),
                u0: Point::on_circle(p[3]),
            },
            _ => Probe { psi: p[0], gamma: p[1], u1: Point::Real(p[2]), u0: Point::Real(p[3]) },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn act(kind: GroupKind) -> GroupAction {
        GroupAction::new(kind)
    }

    #[test]
    fn apply_examples() {
        assert_eq!(act(GroupKind::Location).apply(1.5, &Point::Real(2.0)).unwrap(), Point::Real(3.5));
        assert_eq!(act(GroupKind::Rate).apply(2.0, &Point::Real(3.0)).unwrap(), Point::Real(1.5));
        let r = act(GroupKind::Rotation2D).apply(FRAC_PI_2, &Point::Circle([1.0, 0.0])).unwrap();
        assert!(r.distance(&Point::Circle([0.0, 1.0])) < 1e-15);
    }

    #[test]
    fn invert_examples() {
        assert_eq!(act(GroupKind::Location).invert(1.5, &Point::Real(3.5)).unwrap(), Point::Real(2.0));
        assert_eq!(act(GroupKind::Scale).invert(2.0, &Point::Real(6.0)).unwrap(), Point::Real(3.0));
        let r = act(GroupKind::Rotation2D).invert(FRAC_PI_2, &Point::Circle([0.0, 1.0])).unwrap();
        assert!(r.distance(&Point::Circle([1.0, 0.0])) < 1e-15);
    }

    #[test]
    fn jacobian_examples() {
        let x = Point::Real(0.7);
        assert_eq!(act(GroupKind::Location).jacobian_magnitude(3.0, &x, Direction::Forward).unwrap(), 1.0);
        assert_eq!(act(GroupKind::Scale).jacobian_magnitude(2.0, &x, Direction::Inverse).unwrap(), 0.5);
        let c = Point::on_circle(0.3);
        assert_eq!(act(GroupKind::Rotation2D).jacobian_magnitude(1.0, &c, Direction::Forward).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors_name_the_field() {
        let e = act(GroupKind::Scale).apply(-1.0, &Point::Real(1.0)).unwrap_err();
        assert!(matches!(e, MisfitError::InvalidArgument { ref field, .. } if field == "psi"));
        let e = act(GroupKind::Rate).apply(1.0, &Point::Real(-1.0)).unwrap_err();
        assert!(matches!(e, MisfitError::InvalidArgument { ref field, .. } if field == "x"));
        let e = act(GroupKind::Rotation2D).apply(7.0, &Point::on_circle(0.0)).unwrap_err();
        assert!(matches!(e, MisfitError::InvalidArgument { ref field, .. } if field == "psi"));
        let e = act(GroupKind::Rotation2D).apply(1.0, &Point::Circle([1.1, 0.0])).unwrap_err();
        assert!(matches!(e, MisfitError::InvalidArgument { ref field, .. } if field == "x"));
    }

    #[test]
    fn symmetric_models_factorize() {
        for (model, kind) in [
            (SymmetricPairModel::exponential_pairs(ParametrizationMode::Symmetric), GroupKind::Rate),
            (SymmetricPairModel::normal_pairs(ParametrizationMode::Symmetric), GroupKind::Location),
            (
                SymmetricPairModel::new(BaseDensity::ExponentialMean, GroupKind::Scale, ParametrizationMode::Symmetric),
                GroupKind::Scale,
            ),
            (SymmetricPairModel::rotation_pairs(1.5, ParametrizationMode::Symmetric), GroupKind::Rotation2D),
        ] {
            for p in probe_grid(kind, 100) {
                let y1 = model.y1_of(p.psi, &p.u1);
                let y0 = model.y0_of(p.psi, &p.u0);
                let r = model.symmetry_residual(p.psi, p.gamma, &y1, &y0).unwrap();
                assert!(r <= 1e-12, "{kind:?}: {r}");
                let s = model.score_antisymmetry_residual(p.psi, p.gamma, &p.u1, &p.u0).unwrap();
                assert!(s.abs() <= 1e-8, "{kind:?}: {s}");
            }
        }
    }

    #[test]
    fn nonsymmetric_exponential_does_not_factorize() {
        let m = SymmetricPairModel::exponential_pairs(ParametrizationMode::NonSymmetric);
        let r = m.symmetry_residual(2.0, 1.0, &Point::Real(1.0), &Point::Real(1.0)).unwrap();
        let want = (2.0 * (-3.0f64).exp() - (-2.5f64).exp()).abs();
        assert!((r - want).abs() < 1e-15 && r > 0.01);
        let s = m.score_antisymmetry_residual(2.0, 1.0, &Point::Real(1.0), &Point::Real(2.0)).unwrap();
        // (1 − u₁)/θ + (1 − u₀)/θ
        assert!((s + 0.5).abs() < 1e-12);
    }

    #[test]
    fn exponential_score_antisymmetry_example() {
        let m = SymmetricPairModel::exponential_pairs(ParametrizationMode::Symmetric);
        let s = m.score_antisymmetry_residual(1.3, 0.7, &Point::Real(1.0), &Point::Real(2.0)).unwrap();
        assert!(s.abs() < 1e-10);
    }

    #[test]
    fn pairing_conditions_examples() {
        let loc = SymmetricPairModel::normal_pairs(ParametrizationMode::Symmetric);
        let r = loc.antisymmetry_conditions(0.4, &Point::Real(1.0), &Point::Real(-2.0), 1e-6).unwrap();
        assert!(r.a_forward[0].abs() < 1e-9 && r.max_abs() < 1e-9);

        let scale =
            SymmetricPairModel::new(BaseDensity::ExponentialMean, GroupKind::Scale, ParametrizationMode::Symmetric);
        let r = scale.antisymmetry_conditions(2.0, &Point::Real(2.0), &Point::Real(3.0), 1e-6).unwrap();
        assert!((r.a_forward[0] - 0.5).abs() < 1e-8);
        assert!(r.c_forward.abs() < 1e-8);
        assert!(r.max_abs() < 1e-8);

        let rot = SymmetricPairModel::rotation_pairs(1.0, ParametrizationMode::Symmetric);
        let r = rot
            .antisymmetry_conditions(PI / 4.0, &Point::Circle([1.0, 0.0]), &Point::Circle([0.0, 1.0]), 1e-6)
            .unwrap();
        assert_eq!(r.a.len(), 2);
        assert!(r.max_abs() < 1e-8);
    }

    #[test]
    fn controls_break_pairing_conditions() {
        let m = SymmetricPairModel::exponential_pairs(ParametrizationMode::NonSymmetric);
        let r = m.antisymmetry_conditions(2.0, &Point::Real(1.0), &Point::Real(2.0), 1e-6).unwrap();
        assert!((r.a[0] - 1.5).abs() < 1e-6 && (r.c - 2.0).abs() < 1e-6);
        let rot = SymmetricPairModel::rotation_pairs(1.0, ParametrizationMode::Perturbed(2.0));
        let r = rot
            .antisymmetry_conditions(0.5, &Point::on_circle(0.2), &Point::on_circle(1.1), 1e-6)
            .unwrap();
        assert!(r.a_norm() > 1e-3);
    }

    #[test]
    fn rejects_nonpositive_step() {
        let m = SymmetricPairModel::normal_pairs(ParametrizationMode::Symmetric);
        assert!(m.antisymmetry_conditions(0.0, &Point::Real(0.0), &Point::Real(0.0), 0.0).is_err());
    }

    fn any_probe() -> impl Strategy<Value = (GroupKind, f64, Point)> {
        prop_oneof![
            (-5.0..5.0f64, -10.0..10.0f64).prop_map(|(p, x)| (GroupKind::Location, p, Point::Real(x))),
            (0.05..20.0f64, -10.0..10.0f64).prop_map(|(p, x)| (GroupKind::Scale, p, Point::Real(x))),
            (0.05..20.0f64, 0.01..10.0f64).prop_map(|(p, x)| (GroupKind::Rate, p, Point::Real(x))),
            (0.0..TAU, 0.0..TAU).prop_map(|(p, a)| (GroupKind::Rotation2D, p, Point::on_circle(a))),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn roundtrip_and_jacobian_duality((kind, psi, x) in any_probe()) {
            let a = act(kind);
            let back = a.invert(psi, &a.apply(psi, &x).unwrap()).unwrap();
            let scale = x.coords().iter().fold(1.0f64, |m, v| m.max(v.abs()));
            prop_assert!(back.distance(&x) <= 1e-12 * scale);
            let f = a.jacobian_magnitude(psi, &x, Direction::Forward).unwrap();
            let i = a.jacobian_magnitude(psi, &x, Direction::Inverse).unwrap();
            prop_assert!((f * i - 1.0).abs() <= 1e-12);
        }
    }
}
