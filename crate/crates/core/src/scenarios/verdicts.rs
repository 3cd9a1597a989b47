//! Condition reports for a configured scenario.

use super::config::{DispersionModel, GlmFamily, RotationSpec, ScenarioConfig, ScenarioKind};
use super::glm::{obs_terms, GlmDesign, GlmModel};
use crate::conditions::{
    arm_totals, check_consistency, check_coxwong, check_m_orthogonality, check_moment_match, CheckOptions, Condition,
    ConditionReport, Residual, Tolerance,
};
use crate::error::Result;
use crate::group_core::{probe_grid, GroupKind, ParametrizationMode, SymmetricPairModel};
use crate::mixture_lik::{AssumedMixing, ExpectMethod, PairKernel};
use crate::numerics::linalg::{sym_inverse, Mat, Vector};

/// Tensor grid of `levels` in `dim` coordinates.
pub fn tensor_grid(levels: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut grid = vec![vec![]];
    for _ in 0..dim {
        grid = grid
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                levels.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    grid
}

/// The `λ` grid for a stratified scenario. For Poisson counts with the
/// `(ν, ω)` gamma family, `ν` is pinned to `1/E_m(γ)` and `ω` varies.
pub fn lambda_grid(config: &ScenarioConfig) -> Vec<Vec<f64>> {
    let levels = &config.check.levels;
    if config.scenario.kernel() == Some(PairKernel::Poisson) && config.assumed_mixing == AssumedMixing::GammaMeanShape {
        let nu = 1.0 / config.true_mixing.mean();
        return levels.iter().map(|&w| vec![nu, w]).collect();
    }
    tensor_grid(levels, config.assumed_mixing.dim())
}

fn options(config: &ScenarioConfig) -> CheckOptions {
    CheckOptions { method: ExpectMethod::Quadrature { level: config.check.quadrature_level }, tol: config.check.tol }
}

/// Condition reports for `config`. With `all = false` only the scenario's
/// primary condition is checked: the Cox–Wong identity for Poisson counts,
/// the score condition otherwise.
pub fn scenario_conditions(config: &ScenarioConfig, all: bool) -> Result<Vec<ConditionReport>> {
    config.validate()?;
    if config.scenario == ScenarioKind::RotationCheck {
        return Ok(vec![rotation_check(&config.rotation, config.check.tol)?]);
    }
    if config.scenario.is_glm() {
        return glm_conditions(config, all);
    }
    let truth = config.true_model().expect("pair scenario");
    let assumed = config.assumed_model().expect("pair scenario");
    let grid = lambda_grid(config);
    let opts = options(config);
    let psi = config.target();
    let poisson = config.scenario == ScenarioKind::PoissonTwoGroup;
    let mut out = Vec::new();
    if all {
        out.push(check_m_orthogonality(&truth, &assumed, psi, &grid, opts)?);
        out.push(check_consistency(&truth, &assumed, psi, &grid, opts)?);
        out.push(check_coxwong(&truth, &assumed, psi, &grid, opts)?);
        if poisson {
            out.push(check_moment_match(&truth, &assumed, psi, &grid[0], &arm_totals(), opts)?);
        }
    } else if poisson {
        out.push(check_coxwong(&truth, &assumed, psi, &grid, opts)?);
    } else {
        out.push(check_consistency(&truth, &assumed, psi, &grid, opts)?);
    }
    Ok(out)
}

/// Assumed GLM, fitted design and true linear predictor for a GLM scenario.
pub(crate) struct GlmSetup {
    pub model: GlmModel,
    pub z: Mat,
    pub zeta_star: Vec<f64>,
    pub phi_star: Vec<f64>,
    pub psi_star: Vec<f64>,
    /// Names of the λ coordinates after `ψ`.
    pub lambda_names: Vec<String>,
}

pub(crate) fn glm_setup(config: &ScenarioConfig, design: &GlmDesign) -> GlmSetup {
    let g = &config.glm;
    let n = design.n();
    let zeta_star: Vec<f64> = (0..n)
        .map(|i| {
            let mut z = g.intercept + config.psi_star * design.x[(i, 1)];
            for (j, l) in g.lambda_star.iter().enumerate() {
                z += l * design.w[(i, j)];
            }
            z
        })
        .collect();
    let phi_star = design.u.iter().map(|u| (g.true_dispersion_slope * u).exp()).collect();
    let (z, dispersion, lambda_names) = match config.scenario {
        ScenarioKind::Overstratified => {
            let names = (1..=design.w.ncols()).map(|j| format!("w{j}")).collect();
            (design.full(), DispersionModel::Fixed { a: 0.0, b: 0.0 }, names)
        }
        ScenarioKind::GlmOmittedCovariate => (design.x.clone(), DispersionModel::Fixed { a: 0.0, b: 0.0 }, vec![]),
        _ => {
            let names = match g.dispersion {
                DispersionModel::Fixed { .. } => vec![],
                DispersionModel::Constant => vec!["log_phi".to_string()],
                DispersionModel::LogLinear => vec!["log_phi".to_string(), "log_phi_slope".to_string()],
            };
            (design.x.clone(), g.dispersion, names)
        }
    };
    GlmSetup {
        model: GlmModel { family: g.family, dispersion, interest: 1 },
        z,
        zeta_star,
        phi_star,
        psi_star: vec![g.intercept, config.psi_star],
        lambda_names,
    }
}

/// Exact `E_m` of the per-observation gradient and Hessian, averaged over
/// the design. Outcomes enter at most quadratically, so two-point laws
/// matching the first two moments are exact.
fn glm_expected(setup: &GlmSetup, design: &GlmDesign, theta: &[f64]) -> (Vector, Mat, f64) {
    let n = setup.z.nrows();
    let q = theta.len();
    let mut g = Vector::zeros(q);
    let mut h = Mat::zeros(q, q);
    let mut scale = 0.0;
    for i in 0..n {
        let zi: Vec<f64> = setup.z.row(i).iter().copied().collect();
        let (_, k1, _) = setup.model.family.cumulant(setup.zeta_star[i]);
        let points: Vec<(f64, f64)> = match setup.model.family {
            GlmFamily::Linear => {
                let sd = setup.phi_star[i].sqrt();
                vec![(k1 - sd, 0.5), (k1 + sd, 0.5)]
            }
            GlmFamily::Logistic => vec![(1.0, k1), (0.0, 1.0 - k1)],
            GlmFamily::Poisson => vec![(k1, 1.0)],
        };
        for (y, w) in points {
            let (_, gi, hi) = obs_terms(&setup.model, &zi, y, design.u[i], theta);
            scale += w * gi.amax();
            g += gi * w;
            h += hi * w;
        }
    }
    let nf = n as f64;
    (g / nf, h / nf, scale / nf)
}

fn glm_conditions(config: &ScenarioConfig, all: bool) -> Result<Vec<ConditionReport>> {
    let design = super::run::glm_design(config);
    let setup = glm_setup(config, &design);
    // residuals over the columns of X; the nuisance grid spans the
    // dispersion parameters, or sits at the true W coefficients
    let p = design.x.ncols();
    let k = setup.lambda_names.len();
    let grid = match config.scenario {
        ScenarioKind::Overstratified => vec![config.glm.lambda_star.clone()],
        _ if k == 0 => vec![vec![]],
        _ => tensor_grid(&config.check.levels, k),
    };
    let tol = Tolerance::Absolute(config.check.tol);
    let mut score = Vec::new();
    let mut cross = Vec::new();
    let mut cw = Vec::new();
    for (idx, lam) in grid.iter().enumerate() {
        let mut theta = setup.psi_star.clone();
        theta.extend_from_slice(lam);
        let (g, h, scale) = glm_expected(&setup, &design, &theta);
        let err = 1e-14 * (1.0 + scale);
        for j in 0..p {
            score.push(Residual::new(idx, format!("g_psi_{j}"), g[j], err));
            for (m, name) in setup.lambda_names.iter().enumerate() {
                cross.push(Residual::new(idx, format!("d2_psi_{j}_{name}"), h[(j, p + m)], err));
            }
        }
        match sym_inverse(&(-h)) {
            Ok(inv) => {
                let v = &inv * &g;
                let e = err * (1.0 + inv.amax() * p as f64);
                for j in 0..p {
                    cw.push(Residual::new(idx, format!("coxwong_{j}"), v[j], e));
                }
            }
            Err(e) => cw.push(Residual::failed(idx, "coxwong", e.to_string())),
        }
    }
    let consistency = ConditionReport::new(Condition::ConsistencyScore, grid.clone(), score, tol);
    if !all {
        return Ok(vec![consistency]);
    }
    let mut out = Vec::new();
    if k > 0 {
        out.push(ConditionReport::new(Condition::MOrthogonality, grid.clone(), cross, tol));
    }
    out.push(consistency);
    out.push(ConditionReport::new(Condition::CoxWongIdentity, grid, cw, tol));
    Ok(out)
}

/// Antisymmetry and density-symmetry residuals of the 2-D rotation pair
/// model on a probe grid.
pub fn rotation_check(spec: &RotationSpec, tol: f64) -> Result<ConditionReport> {
    let mode = if spec.perturbed { ParametrizationMode::Perturbed(2.0) } else { ParametrizationMode::Symmetric };
    let model = SymmetricPairModel::rotation_pairs(spec.concentration, mode);
    let mut probes = probe_grid(GroupKind::Rotation2D, spec.probes);
    if let Some(psi) = spec.psi {
        for p in probes.iter_mut() {
            p.psi = psi;
        }
    }
    let step = 1e-5;
    let mut residuals = Vec::new();
    let mut grid = Vec::new();
    for (k, p) in probes.iter().enumerate() {
        grid.push(vec![p.psi, p.gamma, p.u1.angle().unwrap_or(0.0), p.u0.angle().unwrap_or(0.0)]);
        let r = model.antisymmetry_conditions(p.psi, &p.u1, &p.u0, step)?;
        let r2 = model.antisymmetry_conditions(p.psi, &p.u1, &p.u0, 2.0 * step)?;
        for (j, (a, b)) in r.a.iter().zip(&r2.a).enumerate() {
            residuals.push(Residual::new(k, format!("a_{j}"), *a, (a - b).abs() + 1e-15));
        }
        residuals.push(Residual::new(k, "c", r.c, (r.c - r2.c).abs() + 1e-15));
        let y1 = model.y1_of(p.psi, &p.u1);
        let y0 = model.y0_of(p.psi, &p.u0);
        residuals.push(Residual::new(k, "density_symmetry", model.symmetry_residual(p.psi, p.gamma, &y1, &y0)?, 1e-15));
    }
    let mut report = ConditionReport::new(Condition::Antisymmetry, grid, residuals, Tolerance::Absolute(tol));
    report.notes.push("probes are (psi, gamma, angle_1, angle_0)".into());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::Verdict;
    use crate::scenarios::config::WDesign;

    #[test]
    fn rotation_verdicts() {
        let r = rotation_check(&RotationSpec::default(), 1e-8).unwrap();
        assert_eq!(r.verdict, Verdict::Holds, "{}", r.max_abs_residual);
        assert!(r.max_abs_residual <= 1e-8);
        let p = rotation_check(&RotationSpec { perturbed: true, ..RotationSpec::default() }, 1e-8).unwrap();
        assert_eq!(p.verdict, Verdict::Fails);
        let z = rotation_check(&RotationSpec { probes: 1, psi: Some(0.0), ..RotationSpec::default() }, 1e-8).unwrap();
        assert!(z.max_abs_residual < 1e-12, "{z:?}");
    }

    #[test]
    fn glm_condition_verdicts() {
        let mut c = ScenarioConfig::default_for(ScenarioKind::GlmDispersion);
        c.n = 300;
        let r = scenario_conditions(&c, true).unwrap();
        assert!(r.iter().all(|r| r.verdict == Verdict::Holds), "{r:?}");
        let mut c = ScenarioConfig::default_for(ScenarioKind::GlmOmittedCovariate);
        c.n = 300;
        c.glm.family = super::GlmFamily::Logistic;
        c.glm.w_design = WDesign::Independent;
        let r = scenario_conditions(&c, true).unwrap();
        assert!(r.iter().all(|r| r.verdict == Verdict::Fails), "{r:?}");
        c.glm.family = super::GlmFamily::Linear;
        c.glm.w_design = WDesign::Orthogonal;
        let r = scenario_conditions(&c, true).unwrap();
        assert!(r.iter().all(|r| r.verdict == Verdict::Holds), "{r:?}");
    }

    #[test]
    fn poisson_grid_is_mean_matched() {
        let c = ScenarioConfig::default_for(ScenarioKind::PoissonTwoGroup);
        let g = lambda_grid(&c);
        assert_eq!(g.len(), 4);
        assert!(g.iter().all(|p| (p[0] - 1.0 / c.true_mixing.mean()).abs() < 1e-15));
        let r = scenario_conditions(&c, false).unwrap();
        assert_eq!(r[0].condition, Condition::CoxWongIdentity);
        assert_eq!(r[0].verdict, Verdict::Holds);
    }
}
