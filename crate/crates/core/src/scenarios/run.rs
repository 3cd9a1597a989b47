//! Monte Carlo replications of a scenario.

use std::collections::BTreeMap;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use super::config::{DispersionModel, ScenarioConfig, ScenarioKind};
use super::glm::{glm_fit, GlmData, GlmDesign, GlmModel};
use super::verdicts::{glm_setup, scenario_conditions};
use crate::conditions::ConditionReport;
use crate::error::Result;
use crate::inference::{fit_mle, ratio_baseline_fit, FitResult, SolverOptions};
use crate::mixture_lik::PairObs;
use crate::numerics::linalg::{Mat, Vector};
use crate::rng::{substream, Stream};

/// Stream index reserved for the fixed GLM design.
const DESIGN_STREAM: u64 = u64::MAX;

/// Share of non-converged replications above which a report is degraded.
pub const DEGRADED_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub rep: usize,
    pub psi_hat: f64,
    pub lambda_hat: Vec<f64>,
    pub converged: bool,
    /// NaN when the sandwich is unavailable.
    pub sandwich_se: f64,
    /// Ratio estimator for exponential pairs; the correctly specified fit
    /// for overstratified designs; least squares for the dispersion study.
    pub baseline_psi_hat: Option<f64>,
    /// Deviation from a closed-form or reparametrized equivalent of `ψ̂`.
    pub identity_residual: Option<f64>,
    pub failure: Option<String>,
}

impl RepRecord {
    fn failed(rep: usize, k: usize, why: String) -> Self {
        RepRecord {
            rep,
            psi_hat: f64::NAN,
            lambda_hat: vec![f64::NAN; k],
            converged: false,
            sandwich_se: f64::NAN,
            baseline_psi_hat: None,
            identity_residual: None,
            failure: Some(why),
        }
    }

    /// `e^θ̂` for count scenarios fitted on the log scale.
    pub fn exp_psi_hat(&self) -> f64 {
        self.psi_hat.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub scenario: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub target: f64,
    pub n_converged: usize,
    pub mean_psi_hat: f64,
    pub bias: f64,
    /// Empirical SD of `ψ̂` over converged replications.
    pub sd: f64,
    /// Monte Carlo standard error of the mean, `sd/√n_converged`.
    pub se_mean: f64,
    pub bias_se_ratio: f64,
    pub mean_sandwich_se: f64,
    pub baseline_mean: Option<f64>,
    pub baseline_sd: Option<f64>,
    pub max_identity_residual: Option<f64>,
    pub degraded: bool,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    (m, if v.len() > 1 { (ss / (n - 1.0)).sqrt() } else { f64::NAN })
}

impl Summary {
    /// Summary statistics over the converged records.
    pub fn from_records(config: &ScenarioConfig, records: &[RepRecord]) -> Self {
        let mut sorted: Vec<&RepRecord> = records.iter().collect();
        sorted.sort_by_key(|r| r.rep);
        let ok: Vec<&RepRecord> = sorted.iter().copied().filter(|r| r.converged).collect();
        let psi: Vec<f64> = ok.iter().map(|r| r.psi_hat).collect();
        let (mean, sd) = mean_sd(&psi);
        let se_mean = sd / (psi.len() as f64).sqrt();
        let target = config.target();
        let se: Vec<f64> = ok.iter().map(|r| r.sandwich_se).filter(|s| s.is_finite()).collect();
        let base: Vec<f64> = ok.iter().filter_map(|r| r.baseline_psi_hat).collect();
        let (bm, bs) = mean_sd(&base);
        let ident = ok.iter().filter_map(|r| r.identity_residual).map(f64::abs).fold(None, |m: Option<f64>, v| {
            Some(m.map_or(v, |m| m.max(v)))
        });
        let failed = records.len() - ok.len();
        Summary {
            scenario: config.scenario.name().to_string(),
            n: config.n,
            reps: records.len(),
            seed: config.seed,
            target,
            n_converged: ok.len(),
            mean_psi_hat: mean,
            bias: mean - target,
            sd,
            se_mean,
            bias_se_ratio: (mean - target) / se_mean,
            mean_sandwich_se: mean_sd(&se).0,
            baseline_mean: (!base.is_empty()).then_some(bm),
            baseline_sd: (!base.is_empty()).then_some(bs),
            max_identity_residual: ident,
            degraded: !records.is_empty() && failed as f64 > DEGRADED_FRACTION * records.len() as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub config: ScenarioConfig,
    pub records: Vec<RepRecord>,
    pub summary: Summary,
    pub conditions: Vec<ConditionReport>,
    pub runtime_secs: f64,
}

impl MonteCarloReport {
    /// `condition name → verdict name`.
    pub fn verdicts(&self) -> BTreeMap<String, String> {
        self.conditions.iter().map(|c| (c.condition.name().to_string(), c.verdict.name().to_string())).collect()
    }
}

/// Number of `λ` coordinates reported per replication.
pub fn lambda_dim(config: &ScenarioConfig) -> usize {
    match config.scenario {
        ScenarioKind::RotationCheck => 0,
        ScenarioKind::GlmOmittedCovariate => 1,
        ScenarioKind::Overstratified => 1 + config.glm.lambda_star.len(),
        ScenarioKind::GlmDispersion => 1 + config.glm.dispersion.n_params(),
        _ => config.assumed_mixing.dim(),
    }
}

/// The fixed covariate design of a GLM scenario.
pub fn glm_design(config: &ScenarioConfig) -> GlmDesign {
    let mut rng = substream(config.seed, DESIGN_STREAM);
    GlmDesign::generate(config.n, config.glm.lambda_star.len(), config.glm.w_design, config.glm.rho, &mut rng)
}

/// Draws one replication's pair data.
pub fn simulate_pairs(config: &ScenarioConfig, rng: &mut Stream) -> Vec<PairObs> {
    let truth = config.true_model().expect("pair scenario");
    (0..config.n).map(|i| truth.sample_stratum(i, rng)).collect()
}

fn record_from(rep: usize, fit: &FitResult) -> RepRecord {
    RepRecord {
        rep,
        psi_hat: fit.psi_hat,
        lambda_hat: fit.lambda_hat.clone(),
        converged: fit.converged,
        sandwich_se: fit.sandwich_se().unwrap_or(f64::NAN),
        baseline_psi_hat: None,
        identity_residual: None,
        failure: None,
    }
}

fn pair_rep(config: &ScenarioConfig, rep: usize) -> Result<RepRecord> {
    let assumed = config.assumed_model().expect("pair scenario");
    let mut rng = substream(config.seed, rep as u64);
    let data = simulate_pairs(config, &mut rng);
    let fit = fit_mle(&assumed, &data, None, SolverOptions::default())?;
    let mut rec = record_from(rep, &fit);
    match config.scenario {
        ScenarioKind::NormalPairs => {
            let d: f64 = data.iter().map(|o| o.y1 - o.y0).sum();
            rec.identity_residual = Some(fit.psi_hat - d / (2.0 * data.len() as f64));
        }
        ScenarioKind::ExpPairsSymmetric => {
            rec.baseline_psi_hat = Some(ratio_baseline_fit(&data)?.psi_hat);
        }
        ScenarioKind::ExpTwoGroupMinima => {
            let t: Vec<PairObs> = data.iter().map(|o| PairObs::pair(o.r1 * o.y1, o.r0 * o.y0)).collect();
            let ft = fit_mle(&assumed, &t, None, SolverOptions::default())?;
            rec.identity_residual = Some(fit.psi_hat - ft.psi_hat);
            rec.baseline_psi_hat = Some(ratio_baseline_fit(&data)?.psi_hat);
        }
        _ => {}
    }
    Ok(rec)
}

/// Weighted least squares coefficients.
fn wls(z: &Mat, y: &[f64], w: &[f64]) -> Option<Vector> {
    let zw = Mat::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] * w[i]);
    (zw.transpose() * z).cholesky().map(|c| c.solve(&(zw.transpose() * Vector::from_column_slice(y))))
}

fn glm_rep(config: &ScenarioConfig, design: &GlmDesign, rep: usize) -> Result<RepRecord> {
    let setup = glm_setup(config, design);
    let mut rng = substream(config.seed, rep as u64);
    let family = config.glm.family;
    let y: Vec<f64> = (0..design.n()).map(|i| family.sample(setup.zeta_star[i], setup.phi_star[i], &mut rng)).collect();
    let data = GlmData { z: setup.z.clone(), y, v: design.u.clone() };
    let fit = glm_fit(&setup.model, &data)?;
    let mut rec = record_from(rep, &fit);
    match config.scenario {
        ScenarioKind::GlmDispersion => {
            let ones = vec![1.0; data.y.len()];
            rec.baseline_psi_hat = wls(&data.z, &data.y, &ones).map(|b| b[1]);
            let w: Vec<f64> = match setup.model.dispersion {
                DispersionModel::Fixed { a, b } => data.v.iter().map(|v| (-(a + b * v)).exp()).collect(),
                DispersionModel::Constant => ones,
                DispersionModel::LogLinear => {
                    let (a, b) = (fit.lambda_hat[1], fit.lambda_hat[2]);
                    data.v.iter().map(|v| (-(a + b * v)).exp()).collect()
                }
            };
            rec.identity_residual = wls(&data.z, &data.y, &w).map(|b| fit.psi_hat - b[1]);
        }
        ScenarioKind::Overstratified => {
            let model = GlmModel { dispersion: DispersionModel::Fixed { a: 0.0, b: 0.0 }, ..setup.model };
            let narrow = GlmData { z: design.x.clone(), ..data };
            rec.baseline_psi_hat = Some(glm_fit(&model, &narrow)?.psi_hat);
        }
        _ => {}
    }
    Ok(rec)
}

/// Runs every replication of `config` in parallel. Replication `r` uses
/// stream `r` of the master seed, so records do not depend on the thread
/// count. Condition reports are attached when `config.check.in_simulate`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let start = Instant::now();
    let k = lambda_dim(config);
    let records: Vec<RepRecord> = match config.scenario {
        ScenarioKind::RotationCheck => vec![],
        s if s.is_glm() => {
            let design = glm_design(config);
            (0..config.reps)
                .into_par_iter()
                .map(|r| glm_rep(config, &design, r).unwrap_or_else(|e| RepRecord::failed(r, k, e.to_string())))
                .collect()
        }
        _ => (0..config.reps)
            .into_par_iter()
            .map(|r| pair_rep(config, r).unwrap_or_else(|e| RepRecord::failed(r, k, e.to_string())))
            .collect(),
    };
    for r in records.iter().filter(|r| r.failure.is_some()) {
        warn!("replication {} failed: {}", r.rep, r.failure.as_deref().unwrap_or(""));
    }
    let conditions = if config.check.in_simulate || config.scenario == ScenarioKind::RotationCheck {
        scenario_conditions(config, false)?
    } else {
        vec![]
    };
    let summary = Summary::from_records(config, &records);
    if summary.degraded {
        warn!("{} of {} replications did not converge", summary.reps - summary.n_converged, summary.reps);
    }
    let runtime_secs = start.elapsed().as_secs_f64();
    info!("{}: {} replications in {:.2}s", config.scenario.name(), records.len(), runtime_secs);
    Ok(MonteCarloReport { config: config.clone(), records, summary, conditions, runtime_secs })
}
