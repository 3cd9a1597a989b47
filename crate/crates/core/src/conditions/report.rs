//! Condition reports and their three-way verdicts.

use serde::Serialize;

use crate::mixture_lik::ExpectMethod;

pub const DEFAULT_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    MOrthogonality,
    ConsistencyScore,
    CoxWongIdentity,
    MomentMatch,
    /// Induced antisymmetry of a group pair model.
    Antisymmetry,
}

impl Condition {
    pub fn name(&self) -> &'static str {
        match self {
            Condition::MOrthogonality => "m_orthogonality",
            Condition::ConsistencyScore => "consistency_score",
            Condition::CoxWongIdentity => "coxwong_identity",
            Condition::MomentMatch => "moment_match",
            Condition::Antisymmetry => "antisymmetry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// How residuals are judged: an absolute tolerance for quadrature, or a
/// multiple of the Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Tolerance {
    Absolute(f64),
    StandardErrors(f64),
}

/// Options shared by the checkers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub method: ExpectMethod,
    /// Absolute tolerance; ignored for Monte Carlo, which uses 3 SE.
    pub tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { method: ExpectMethod::default(), tol: DEFAULT_TOLERANCE }
    }
}

impl CheckOptions {
    pub fn tolerance(&self) -> Tolerance {
        match self.method {
            ExpectMethod::Quadrature { .. } => Tolerance::Absolute(self.tol),
            ExpectMethod::MonteCarlo { .. } => Tolerance::StandardErrors(3.0),
        }
    }
}

/// One residual component at one grid point. A point whose evaluation failed
/// carries a NaN value and the failure message.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub point: usize,
    pub component: String,
    pub value: f64,
    pub error: f64,
    pub failure: Option<String>,
}

impl Residual {
    pub fn new(point: usize, component: impl Into<String>, value: f64, error: f64) -> Self {
        Residual { point, component: component.into(), value, error, failure: None }
    }

    pub fn failed(point: usize, component: impl Into<String>, why: String) -> Self {
        Residual { point, component: component.into(), value: f64::NAN, error: f64::NAN, failure: Some(why) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    /// Probe points: `λ` or, for moment matching, `(ψ, λ)`.
    pub grid: Vec<Vec<f64>>,
    pub residuals: Vec<Residual>,
    /// Reduced scalar form `i_λλ g_ψ − i_ψλ g_λ` (Cox–Wong, scalar λ only).
    pub reduced: Vec<Residual>,
    pub max_abs_residual: f64,
    pub verdict: Verdict,
    pub tolerance: Tolerance,
    /// Whether the expected Hessian was negative definite at each visited
    /// point, where computed. Concavity is not checked anywhere else.
    pub hessian_negative_definite: Vec<Option<bool>>,
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn new(condition: Condition, grid: Vec<Vec<f64>>, residuals: Vec<Residual>, tolerance: Tolerance) -> Self {
        let max_abs_residual = residuals.iter().filter(|r| r.value.is_finite()).fold(0.0f64, |m, r| m.max(r.value.abs()));
        let verdict = verdict(&residuals, tolerance);
        let n = grid.len();
        ConditionReport {
            condition,
            grid,
            residuals,
            reduced: vec![],
            max_abs_residual,
            verdict,
            tolerance,
            hessian_negative_definite: vec![None; n],
            notes: vec!["holds is relative to the probed grid".into()],
        }
    }
}

/// Holds iff every residual is within tolerance with error below a third of
/// it; Fails iff some residual exceeds both the tolerance and ten times its
/// error; Inconclusive otherwise.
pub fn verdict(residuals: &[Residual], tolerance: Tolerance) -> Verdict {
    let exceeds = |r: &Residual| match tolerance {
        Tolerance::Absolute(t) => r.value.abs() > t,
        Tolerance::StandardErrors(k) => r.value.abs() > k * r.error,
    };
    let fails = residuals
        .iter()
        .any(|r| r.value.is_finite() && r.error.is_finite() && r.value.abs() > 10.0 * r.error && exceeds(r));
    if fails {
        return Verdict::Fails;
    }
    let holds = !residuals.is_empty()
        && residuals.iter().all(|r| {
            r.value.is_finite()
                && r.error.is_finite()
                && match tolerance {
                    Tolerance::Absolute(t) => r.value.abs() <= t && r.error < t / 3.0,
                    Tolerance::StandardErrors(k) => r.value.abs() <= k * r.error,
                }
        });
    if holds {
        Verdict::Holds
    } else {
        Verdict::Inconclusive
    }
}

/// Tensor grid of `{0.5, 1, 2, 5}` in each of `dim` coordinates.
pub fn default_lambda_grid(dim: usize) -> Vec<Vec<f64>> {
    const LEVELS: [f64; 4] = [0.5, 1.0, 2.0, 5.0];
    let mut grid = vec![vec![]];
    for _ in 0..dim {
        grid = grid
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                LEVELS.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    grid
}
