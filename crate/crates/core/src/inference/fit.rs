//! Maximum-likelihood fits of the assumed model and the ratio baseline.

use log::debug;

use super::solver::{maximize, Eval, SolverOptions};
use crate::error::{MisfitError, Result};
use crate::mixture_lik::{AssumedMixing, AssumedModel, ClosedForm, Order, PairKernel, PairObs};
use crate::numerics::linalg::{min_eigenvalue, sym_inverse, Mat};
use crate::numerics::special::trigamma;

#[derive(Debug, Clone)]
pub struct FitResult {
    pub psi_hat: f64,
    pub lambda_hat: Vec<f64>,
    pub loglik: f64,
    /// Negative Hessian of the total log-likelihood over `(ψ, λ)`.
    pub observed_info: Mat,
    /// Empirical sandwich `J⁻¹ (Σ sᵢsᵢᵀ) J⁻¹`, when `J` is invertible.
    pub sandwich_cov: Option<Mat>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

impl FitResult {
    pub fn sandwich_se(&self) -> Option<f64> {
        self.sandwich_cov.as_ref().map(|c| c[(0, 0)].max(0.0).sqrt())
    }

    /// Standard error of `ψ̂` from the inverse observed information.
    pub fn naive_se(&self) -> Option<f64> {
        sym_inverse(&self.observed_info).ok().map(|c| c[(0, 0)].max(0.0).sqrt())
    }
}

fn total(assumed: &AssumedModel, data: &[PairObs], x: &[f64]) -> Result<Eval> {
    let p = x.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; p];
    let mut hess = Mat::zeros(p, p);
    for o in data {
        let d = assumed.derivs(x[0], &x[1..], o, Some(Order::Hessian))?;
        value += d.value;
        for (g, v) in grad.iter_mut().zip(&d.grad) {
            *g += v;
        }
        hess += d.hess.expect("hessian requested");
    }
    Ok(Eval { value, grad, hess })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var)
}

/// Moment-based starting point `(ψ, λ)`.
pub fn moment_start(assumed: &AssumedModel, data: &[PairObs]) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(MisfitError::invalid("data", "no observations"));
    }
    for o in data {
        assumed.kernel.check_obs(o)?;
    }
    let (psi, mean, var) = match assumed.kernel {
        PairKernel::Exponential { mode } => {
            let k = mode.arm0_power();
            let z = median(data.iter().map(|o| o.r1 * o.y1 / (o.r0 * o.y0)).collect());
            let psi = z.powf(-1.0 / (1.0 + k));
            // 1/w is unbiased for γ; its log has extra variance trigamma(2)
            let g: Vec<f64> = data.iter().map(|o| 1.0 / (o.r1 * psi * o.y1 + o.r0 * psi.powf(-k) * o.y0)).collect();
            let (m, _) = mean_var(&g);
            let logs: Vec<f64> = g.iter().map(|v| v.ln()).collect();
            let (_, lv) = mean_var(&logs);
            let s2 = (lv - trigamma(2.0)).max(0.05);
            (psi, m, m * m * s2.exp_m1())
        }
        PairKernel::Normal => {
            let psi = data.iter().map(|o| o.y1 - o.y0).sum::<f64>() / (2.0 * data.len() as f64);
            let g: Vec<f64> = data.iter().map(|o| (o.r1 * (o.y1 - psi) + o.r0 * (o.y0 + psi)) / (o.r1 + o.r0)).collect();
            let noise = data.iter().map(|o| 1.0 / (o.r1 + o.r0)).sum::<f64>() / data.len() as f64;
            let (m, v) = mean_var(&g);
            (psi, m, (v - noise).max(0.05))
        }
        PairKernel::Poisson => {
            let (s1, s0, r1, r0) = data
                .iter()
                .fold((0.0, 0.0, 0.0, 0.0), |a, o| (a.0 + o.y1, a.1 + o.y0, a.2 + o.r1, a.3 + o.r0));
            let theta = 0.5 * (((s1 + 0.5) / r1) / ((s0 + 0.5) / r0)).ln();
            let c: Vec<f64> = data.iter().map(|o| o.r1 * theta.exp() + o.r0 * (-theta).exp()).collect();
            let g: Vec<f64> = data.iter().zip(&c).map(|(o, c)| (o.y1 + o.y0 + 0.5) / c).collect();
            let (m, v) = mean_var(&g);
            let noise = g.iter().zip(&c).map(|(g, c)| g / c).sum::<f64>() / g.len() as f64;
            (theta, m, (v - noise).max(0.05 * m * m))
        }
    };
    let mean = if assumed.mixing.positive_support() || assumed.kernel.positive_effect() { mean.max(1e-3) } else { mean };
    let mut x = vec![psi];
    x.extend(assumed.mixing.moment_init(mean, var));
    if assumed.mixing == AssumedMixing::PointMass {
        x.truncate(2);
    }
    Ok(x)
}

/// Fits the assumed model by damped Newton from `init` (moment start when
/// `None`). Quadrature-backed models get two extra jittered starts.
pub fn fit_mle(assumed: &AssumedModel, data: &[PairObs], init: Option<&[f64]>, opts: SolverOptions) -> Result<FitResult> {
    if data.is_empty() {
        return Err(MisfitError::invalid("data", "no observations"));
    }
    let x0 = match init {
        Some(v) => {
            if v.len() != assumed.dim() {
                return Err(MisfitError::invalid("init", format!("expected {} parameters", assumed.dim())));
            }
            assumed.check(v[0], &v[1..]).map_err(|e| MisfitError::invalid("init", e.to_string()))?;
            v.to_vec()
        }
        None => moment_start(assumed, data)?,
    };
    let transforms = assumed.transforms();
    let mut starts = vec![x0.clone()];
    if assumed.closed_form == ClosedForm::None {
        for sign in [1.0, -1.0] {
            let s: Vec<f64> = x0
                .iter()
                .zip(&transforms)
                .enumerate()
                .map(|(i, (v, tr))| {
                    let jitter = if i % 2 == 0 { 0.2 } else { -0.2 } * sign;
                    tr.to_natural(tr.to_internal(*v) + jitter)
                })
                .collect();
            starts.push(s);
        }
    }
    let objective = |x: &[f64]| total(assumed, data, x);
    let mut best: Option<super::solver::SolverOutcome> = None;
    let mut first_err = None;
    for (j, s) in starts.iter().enumerate() {
        match maximize(&objective, s, &transforms, opts) {
            Ok(out) => {
                debug!("start {j}: value {:.12e}, converged {}", out.value, out.converged);
                let better = match &best {
                    None => true,
                    Some(b) => (out.converged && !b.converged) || (out.converged == b.converged && out.value > b.value),
                };
                if better {
                    best = Some(out);
                }
            }
            Err(e) => {
                if j == 0 && init.is_some() {
                    if let MisfitError::InvalidArgument { .. } = e {
                        return Err(e);
                    }
                }
                first_err.get_or_insert(e);
            }
        }
    }
    let out = match best {
        Some(b) => b,
        None => return Err(first_err.expect("at least one start")),
    };
    let observed_info = -out.hess.clone();
    let pd = min_eigenvalue(&observed_info) > 0.0 && sym_inverse(&observed_info).is_ok();
    let sandwich_cov = sym_inverse(&observed_info).ok().and_then(|jinv| {
        let p = out.x.len();
        let mut b = Mat::zeros(p, p);
        for o in data {
            let g = assumed.derivs(out.x[0], &out.x[1..], o, Some(Order::Gradient)).ok()?.grad;
            let g = nalgebra::DVector::from_vec(g);
            b += &g * g.transpose();
        }
        Some(&jinv * b * &jinv)
    });
    Ok(FitResult {
        psi_hat: out.x[0],
        lambda_hat: out.x[1..].to_vec(),
        loglik: out.value,
        observed_info,
        sandwich_cov,
        iterations: out.iterations,
        converged: out.converged && pd,
        gradient_norm: out.gradient_norm,
    })
}

/// Fit of `ψ` from the ratios `zᵢ = r₁y₁/(r₀y₀)` alone, whose density is
/// `ψ²/(1 + ψ²z)²` for every `γ`.
pub fn ratio_baseline_fit(data: &[PairObs]) -> Result<FitResult> {
    if data.is_empty() {
        return Err(MisfitError::invalid("data", "no observations"));
    }
    let mut z = Vec::with_capacity(data.len());
    for o in data {
        if !(o.y1 > 0.0 && o.y0 > 0.0 && o.y1.is_finite() && o.y0.is_finite()) {
            return Err(MisfitError::invalid("data", format!("nonpositive observation ({}, {})", o.y1, o.y0)));
        }
        z.push(o.r1 * o.y1 / (o.r0 * o.y0));
    }
    let n = z.len() as f64;
    // in η = log ψ: ℓ = 2nη − 2 Σ log(1 + e^{2η} z), strictly concave
    let eval = |eta: f64| {
        let e2 = (2.0 * eta).exp();
        let mut v = 2.0 * n * eta;
        let mut g = 2.0 * n;
        let mut h = 0.0;
        for &zi in &z {
            let a = e2 * zi;
            v -= 2.0 * a.ln_1p();
            g -= 4.0 * a / (1.0 + a);
            h -= 8.0 * a / (1.0 + a).powi(2);
        }
        (v, g, h)
    };
    let mut eta = -0.5 * median(z.clone()).ln();
    let (mut v, mut g, mut h) = eval(eta);
    let mut iterations = 0;
    let tol = 1e-8;
    while g.abs() * (-eta).exp() > tol && iterations < 200 {
        iterations += 1;
        let mut step = (-g / h).clamp(-2.0, 2.0);
        loop {
            let cand = eval(eta + step);
            if cand.0 >= v - 1e-12 * v.abs().max(1.0) || step.abs() < 1e-14 {
                eta += step;
                (v, g, h) = cand;
                break;
            }
            step *= 0.5;
        }
    }
    let psi = eta.exp();
    // natural-scale derivatives: dℓ/dψ = g/ψ, d²ℓ/dψ² = (h − g)/ψ²
    let grad_psi = g / psi;
    let info = -(h - g) / (psi * psi);
    let scores: f64 = z
        .iter()
        .map(|&zi| {
            let a = psi * psi * zi;
            ((2.0 - 4.0 * a / (1.0 + a)) / psi).powi(2)
        })
        .sum();
    let converged = grad_psi.abs() <= tol && info > 0.0;
    Ok(FitResult {
        psi_hat: psi,
        lambda_hat: vec![],
        loglik: v,
        observed_info: Mat::from_element(1, 1, info),
        sandwich_cov: (info > 0.0).then(|| Mat::from_element(1, 1, scores / (info * info))),
        iterations,
        converged,
        gradient_norm: grad_psi.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::DensityFamily;
    use crate::mixture_lik::TrueModel;
    use crate::rng::substream;

    fn simulate(t: &TrueModel, n: usize, seed: u64) -> Vec<PairObs> {
        let mut rng = substream(seed, 0);
        (0..n).map(|i| t.sample_stratum(i, &mut rng)).collect()
    }

    #[test]
    fn normal_pairs_estimate_is_half_mean_difference() {
        let t = TrueModel::new(PairKernel::Normal, 0.7, DensityFamily::LogNormal { log_mean: 0.0, log_sd: 1.0 });
        let data = simulate(&t, 300, 3);
        let expect = data.iter().map(|o| o.y1 - o.y0).sum::<f64>() / 600.0;
        for mixing in [AssumedMixing::Normal, AssumedMixing::PointMass, AssumedMixing::LogNormal] {
            let f = fit_mle(&AssumedModel::new(PairKernel::Normal, mixing), &data, None, SolverOptions::default()).unwrap();
            assert!(f.converged, "{mixing:?}");
            assert!((f.psi_hat - expect).abs() < 1e-10, "{mixing:?}: {} vs {expect}", f.psi_hat);
        }
    }

    #[test]
    fn equal_pair_gives_symmetric_point() {
        let m = AssumedModel::new(PairKernel::exponential(), AssumedMixing::Gamma);
        let data = [PairObs::pair(1.7, 1.7)];
        let x = moment_start(&m, &data).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15);
        let d = m.derivs(1.0, &[2.0, 1.0], &data[0], Some(Order::Gradient)).unwrap();
        assert!(d.grad[0].abs() < 1e-14);
    }

    #[test]
    fn correctly_specified_fit_covers_truth() {
        let m = AssumedModel::new(PairKernel::exponential(), AssumedMixing::Gamma);
        let t = m.as_true(1.5, &[3.0, 2.0], &[(1.0, 1.0)]).unwrap();
        let data = simulate(&t, 2000, 11);
        let f = fit_mle(&m, &data, None, SolverOptions::default()).unwrap();
        assert!(f.converged && f.gradient_norm <= 1e-8);
        assert!(min_eigenvalue(&f.observed_info) > 0.0);
        let se = f.sandwich_se().unwrap();
        assert!((f.psi_hat - 1.5).abs() < 3.0 * se, "{} ± {se}", f.psi_hat);
    }

    #[test]
    fn quadrature_backed_fit_matches_closed_form() {
        let m = AssumedModel::new(PairKernel::exponential(), AssumedMixing::Gamma);
        let t = TrueModel::new(PairKernel::exponential(), 1.3, DensityFamily::LogNormal { log_mean: 0.0, log_sd: 1.0 });
        let data = simulate(&t, 200, 4);
        let a = fit_mle(&m, &data, None, SolverOptions::default()).unwrap();
        let b = fit_mle(&m.with_quadrature(), &data, None, SolverOptions::default()).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.psi_hat - b.psi_hat).abs() < 1e-8, "{} {}", a.psi_hat, b.psi_hat);
        for k in 0..2 {
            assert!((a.lambda_hat[k] - b.lambda_hat[k]).abs() < 1e-6 * a.lambda_hat[k]);
        }
    }

    #[test]
    fn poisson_and_lognormal_fits_converge() {
        let t = TrueModel::new(PairKernel::Poisson, 0.4, DensityFamily::Gamma { shape: 2.0, rate: 0.5 })
            .with_design(vec![(1.0, 2.0), (3.0, 1.0)]);
        let data = simulate(&t, 400, 8);
        let f = fit_mle(&AssumedModel::new(PairKernel::Poisson, AssumedMixing::GammaMeanShape), &data, None, SolverOptions::default())
            .unwrap();
        assert!(f.converged);
        assert!((f.psi_hat - 0.4).abs() < 4.0 * f.sandwich_se().unwrap());
        let te = TrueModel::new(PairKernel::exponential(), 1.5, DensityFamily::Gamma { shape: 2.0, rate: 2.0 });
        let de = simulate(&te, 300, 9);
        let g = fit_mle(&AssumedModel::new(PairKernel::exponential(), AssumedMixing::LogNormal), &de, None, SolverOptions::default())
            .unwrap();
        assert!(g.converged && g.gradient_norm <= 1e-8);
    }

    #[test]
    fn bad_inputs() {
        let m = AssumedModel::new(PairKernel::exponential(), AssumedMixing::Gamma);
        assert!(matches!(fit_mle(&m, &[], None, SolverOptions::default()), Err(MisfitError::InvalidArgument { .. })));
        let data = [PairObs::pair(1.0, 2.0)];
        let r = fit_mle(&m, &data, Some(&[1.0, -1.0, 1.0]), SolverOptions::default());
        assert!(matches!(r, Err(MisfitError::InvalidArgument { .. })));
        assert!(matches!(ratio_baseline_fit(&[PairObs::pair(0.0, 1.0)]), Err(MisfitError::InvalidArgument { .. })));
    }

    #[test]
    fn ratio_density_matches_integrated_survival() {
        // P(Z ≤ z) by Simpson integration over y₀ against the closed CDF
        let psi = 1.7f64;
        for &gamma in &[0.3, 1.0, 4.0] {
            for &z in &[0.05, 0.4, 1.0, 3.0] {
                let rate0 = gamma / psi;
                let rate1 = gamma * psi;
                let (lo, hi, m) = (0.0, 60.0 / rate0, 200_000);
                let h = (hi - lo) / m as f64;
                let mut acc = 0.0;
                for i in 0..=m {
                    let y0 = lo + i as f64 * h;
                    let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += w * (1.0 - (-rate1 * z * y0).exp()) * rate0 * (-rate0 * y0).exp();
                }
                let cdf = psi * psi * z / (1.0 + psi * psi * z);
                assert!((acc * h / 3.0 - cdf).abs() < 1e-10, "{gamma} {z}: {} vs {cdf}", acc * h / 3.0);
            }
        }
    }

    #[test]
    fn ratio_baseline_properties() {
        let ones: Vec<PairObs> = (1..20).map(|i| PairObs::pair(i as f64, i as f64)).collect();
        let f = ratio_baseline_fit(&ones).unwrap();
        assert!((f.psi_hat - 1.0).abs() < 1e-12 && f.converged);
        let t = TrueModel::new(PairKernel::exponential(), 1.5, DensityFamily::Gamma { shape: 2.0, rate: 1.0 });
        let data = simulate(&t, 500, 2);
        let a = ratio_baseline_fit(&data).unwrap();
        let scaled: Vec<PairObs> = data.iter().enumerate().map(|(i, o)| {
            let c = 1.0 + i as f64;
            PairObs::pair(o.y1 * c, o.y0 * c)
        }).collect();
        let b = ratio_baseline_fit(&scaled).unwrap();
        assert!((a.psi_hat - b.psi_hat).abs() < 1e-12);
        assert!((a.psi_hat - 1.5).abs() < 4.0 * a.sandwich_se().unwrap());
    }
}
