//! Scenario configuration.

use crate::error::{MisfitError, Result};
use crate::families::DensityFamily;
use crate::mixture_lik::{AssumedMixing, AssumedModel, PairKernel, TrueModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    ExpPairsSymmetric,
    ExpPairsNonSymmetric,
    NormalPairs,
    PoissonTwoGroup,
    ExpTwoGroupMinima,
    GlmDispersion,
    GlmOmittedCovariate,
    Overstratified,
    RotationCheck,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 9] = [
        ScenarioKind::ExpPairsSymmetric,
        ScenarioKind::ExpPairsNonSymmetric,
        ScenarioKind::NormalPairs,
        ScenarioKind::PoissonTwoGroup,
        ScenarioKind::ExpTwoGroupMinima,
        ScenarioKind::GlmDispersion,
        ScenarioKind::GlmOmittedCovariate,
        ScenarioKind::Overstratified,
        ScenarioKind::RotationCheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::ExpPairsSymmetric => "exp_pairs_symmetric",
            ScenarioKind::ExpPairsNonSymmetric => "exp_pairs_nonsymmetric",
            ScenarioKind::NormalPairs => "normal_pairs",
            ScenarioKind::PoissonTwoGroup => "poisson_two_group",
            ScenarioKind::ExpTwoGroupMinima => "exp_two_group_minima",
            ScenarioKind::GlmDispersion => "glm_dispersion",
            ScenarioKind::GlmOmittedCovariate => "glm_omitted_covariate",
            ScenarioKind::Overstratified => "overstratified",
            ScenarioKind::RotationCheck => "rotation_check",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == s)
    }

    pub fn is_glm(&self) -> bool {
        matches!(self, ScenarioKind::GlmDispersion | ScenarioKind::GlmOmittedCovariate | ScenarioKind::Overstratified)
    }

    pub fn is_pairs(&self) -> bool {
        !self.is_glm() && *self != ScenarioKind::RotationCheck
    }

    /// Conditional pair law for the stratified scenarios.
    pub fn kernel(&self) -> Option<PairKernel> {
        match self {
            ScenarioKind::ExpPairsSymmetric | ScenarioKind::ExpTwoGroupMinima => Some(PairKernel::exponential()),
            ScenarioKind::ExpPairsNonSymmetric => Some(PairKernel::exponential_nonsymmetric()),
            ScenarioKind::NormalPairs => Some(PairKernel::Normal),
            ScenarioKind::PoissonTwoGroup => Some(PairKernel::Poisson),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmFamily {
    Linear,
    Logistic,
    Poisson,
}

impl GlmFamily {
    pub fn name(&self) -> &'static str {
        match self {
            GlmFamily::Linear => "linear",
            GlmFamily::Logistic => "logistic",
            GlmFamily::Poisson => "poisson",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [GlmFamily::Linear, GlmFamily::Logistic, GlmFamily::Poisson].into_iter().find(|f| f.name() == s)
    }
}

/// Dispersion `φᵢ = exp(a + b vᵢ)` of the assumed GLM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DispersionModel {
    /// `a` and `b` given, not estimated.
    Fixed { a: f64, b: f64 },
    /// `a` estimated, `b = 0`.
    Constant,
    /// Both estimated.
    LogLinear,
}

impl DispersionModel {
    pub fn n_params(&self) -> usize {
        match self {
            DispersionModel::Fixed { .. } => 0,
            DispersionModel::Constant => 1,
            DispersionModel::LogLinear => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WDesign {
    Correlated,
    Independent,
    /// Sample columns of W exactly orthogonal to those of X.
    Orthogonal,
}

impl WDesign {
    pub fn name(&self) -> &'static str {
        match self {
            WDesign::Correlated => "correlated",
            WDesign::Independent => "independent",
            WDesign::Orthogonal => "orthogonal",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [WDesign::Correlated, WDesign::Independent, WDesign::Orthogonal].into_iter().find(|f| f.name() == s)
    }
}

/// GLM settings. The included design is `X = (1, x)` with slope `ψ*`
/// (`psi_star` of the scenario) as the interest parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmSpec {
    pub family: GlmFamily,
    pub intercept: f64,
    /// True coefficients on the W columns (omitted or overstratified).
    pub lambda_star: Vec<f64>,
    pub w_design: WDesign,
    pub rho: f64,
    pub dispersion: DispersionModel,
    /// True dispersion is `exp(slope · u)` for an auxiliary covariate `u`.
    pub true_dispersion_slope: f64,
}

impl Default for GlmSpec {
    fn default() -> Self {
        GlmSpec {
            family: GlmFamily::Linear,
            intercept: 0.2,
            lambda_star: vec![1.0],
            w_design: WDesign::Correlated,
            rho: 0.5,
            dispersion: DispersionModel::Fixed { a: 0.0, b: 0.0 },
            true_dispersion_slope: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationSpec {
    pub probes: usize,
    pub perturbed: bool,
    pub concentration: f64,
    /// Forces every probe to this ψ.
    pub psi: Option<f64>,
}

impl Default for RotationSpec {
    fn default() -> Self {
        RotationSpec { probes: 100, perturbed: false, concentration: 2.0, psi: None }
    }
}

/// Condition-check settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSpec {
    /// Per-coordinate grid levels (tensor product over λ).
    pub levels: Vec<f64>,
    pub tol: f64,
    pub quadrature_level: u32,
    /// Whether `run_scenario` attaches the primary condition reports.
    pub in_simulate: bool,
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec { levels: vec![0.5, 1.0, 2.0, 5.0], tol: 1e-7, quadrature_level: 0, in_simulate: true }
    }
}

/// Settings of the orthogonalizing path. Empty vectors select defaults.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OrthoSpec {
    pub psi_grid: Vec<f64>,
    pub lambda0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub psi_star: f64,
    pub true_mixing: DensityFamily,
    pub assumed_mixing: AssumedMixing,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub stratum_counts: Option<Vec<(f64, f64)>>,
    pub glm: GlmSpec,
    pub rotation: RotationSpec,
    pub check: CheckSpec,
    pub ortho: OrthoSpec,
}

pub fn lognormal_default() -> DensityFamily {
    DensityFamily::LogNormal { log_mean: 0.0, log_sd: 1.0 }
}

pub fn atoms_default() -> DensityFamily {
    DensityFamily::DiscreteAtoms { points: vec![0.5, 1.0, 2.5], weights: vec![0.3, 0.4, 0.3] }
}

impl ScenarioConfig {
    pub fn default_for(scenario: ScenarioKind) -> Self {
        let mut c = ScenarioConfig {
            scenario,
            psi_star: 1.5,
            true_mixing: lognormal_default(),
            assumed_mixing: AssumedMixing::Gamma,
            n: 500,
            reps: 100,
            seed: 1,
            stratum_counts: None,
            glm: GlmSpec::default(),
            rotation: RotationSpec::default(),
            check: CheckSpec::default(),
            ortho: OrthoSpec::default(),
        };
        match scenario {
            ScenarioKind::NormalPairs => {
                c.psi_star = 0.5;
                c.assumed_mixing = AssumedMixing::Normal;
            }
            ScenarioKind::PoissonTwoGroup => {
                c.psi_star = 0.4;
                c.true_mixing = atoms_default();
                c.assumed_mixing = AssumedMixing::GammaMeanShape;
                c.stratum_counts = Some(vec![(1.0, 2.0), (3.0, 1.0)]);
            }
            ScenarioKind::ExpTwoGroupMinima => c.stratum_counts = Some(vec![(2.0, 3.0), (4.0, 1.0)]),
            ScenarioKind::GlmDispersion => {
                c.psi_star = 0.7;
                c.glm.lambda_star = vec![];
                c.glm.dispersion = DispersionModel::Constant;
                c.glm.true_dispersion_slope = 0.8;
            }
            ScenarioKind::GlmOmittedCovariate => c.psi_star = 0.7,
            ScenarioKind::Overstratified => {
                c.psi_star = 0.7;
                c.glm.lambda_star = vec![0.0, 0.0, 0.0];
            }
            _ => {}
        }
        c
    }

    /// The value `ψ̂` estimates: `θ* = ψ*²` for the non-symmetric pairs,
    /// `ψ*` otherwise.
    pub fn target(&self) -> f64 {
        match self.scenario {
            ScenarioKind::ExpPairsNonSymmetric => self.psi_star * self.psi_star,
            _ => self.psi_star,
        }
    }

    pub fn design(&self) -> Vec<(f64, f64)> {
        self.stratum_counts.clone().unwrap_or_else(|| vec![(1.0, 1.0)])
    }

    pub fn true_model(&self) -> Option<TrueModel> {
        let kernel = self.scenario.kernel()?;
        Some(TrueModel::new(kernel, self.target(), self.true_mixing.clone()).with_design(self.design()))
    }

    pub fn assumed_model(&self) -> Option<AssumedModel> {
        Some(AssumedModel::new(self.scenario.kernel()?, self.assumed_mixing))
    }

    /// `ψ` grid of the orthogonalizing path: the configured grid, or eleven
    /// points from the target to twice the target.
    pub fn ortho_grid(&self) -> Vec<f64> {
        if !self.ortho.psi_grid.is_empty() {
            return self.ortho.psi_grid.clone();
        }
        let t = self.target();
        let hi = if t == 0.0 { 1.0 } else { 2.0 * t };
        (0..=10).map(|k| t + (hi - t) * k as f64 / 10.0).collect()
    }

    /// Starting `λ` of the path: configured, or moment-matched to the true
    /// mixing law.
    pub fn ortho_lambda0(&self) -> Vec<f64> {
        if !self.ortho.lambda0.is_empty() {
            return self.ortho.lambda0.clone();
        }
        self.assumed_mixing.moment_init(self.true_mixing.mean(), self.true_mixing.variance())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(MisfitError::invalid("scenario.n", "must be at least 1"));
        }
        if self.reps == 0 {
            return Err(MisfitError::invalid("scenario.reps", "must be at least 1"));
        }
        if !self.psi_star.is_finite() {
            return Err(MisfitError::invalid("scenario.psi_star", "must be finite"));
        }
        if self.check.levels.is_empty() || !(self.check.tol > 0.0) {
            return Err(MisfitError::invalid("check", "grid levels must be nonempty and tolerance positive"));
        }
        if let Some(sc) = &self.stratum_counts {
            if sc.is_empty() || sc.iter().any(|(a, b)| !(*a >= 1.0 && *b >= 1.0)) {
                return Err(MisfitError::invalid("design.stratum_counts", "counts must be at least 1"));
            }
        }
        match self.scenario {
            k if k.is_pairs() => {
                let t = self.true_model().expect("pair scenario");
                t.validate()?;
                if t.kernel.positive_effect() && self.assumed_mixing == AssumedMixing::Normal {
                    return Err(MisfitError::invalid("mixing.assumed.kind", "normal mixing needs a location kernel"));
                }
                if matches!(k, ScenarioKind::ExpPairsSymmetric | ScenarioKind::ExpPairsNonSymmetric | ScenarioKind::NormalPairs)
                    && self.stratum_counts.is_some()
                {
                    return Err(MisfitError::invalid("design.stratum_counts", "pairs scenarios use single pairs"));
                }
            }
            ScenarioKind::RotationCheck => {
                if self.rotation.probes == 0 || !(self.rotation.concentration > 0.0) {
                    return Err(MisfitError::invalid("rotation", "probes ≥ 1 and concentration > 0 required"));
                }
            }
            _ => {
                let g = &self.glm;
                if !(g.rho.abs() < 1.0) {
                    return Err(MisfitError::invalid("glm.rho", "must lie in (-1, 1)"));
                }
                if g.family != GlmFamily::Linear && g.dispersion.n_params() > 0 {
                    return Err(MisfitError::invalid("glm.dispersion", "estimated dispersion needs the linear family"));
                }
                if g.family != GlmFamily::Linear && g.true_dispersion_slope != 0.0 {
                    return Err(MisfitError::invalid("glm.true_dispersion_slope", "only the linear family has dispersion"));
                }
                if self.scenario != ScenarioKind::GlmDispersion && g.lambda_star.is_empty() {
                    return Err(MisfitError::invalid("glm.lambda_star", "needs at least one W coefficient"));
                }
                if self.n <= 2 + g.lambda_star.len() + g.dispersion.n_params() {
                    return Err(MisfitError::invalid("scenario.n", "too small for the design"));
                }
            }
        }
        Ok(())
    }
}
