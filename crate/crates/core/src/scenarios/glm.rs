//! Canonical-link GLMs with a modelled dispersion.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::config::{DispersionModel, GlmFamily, WDesign};
use crate::error::{MisfitError, Result};
use crate::inference::solver::{maximize, Eval, SolverOptions};
use crate::inference::FitResult;
use crate::mixture_lik::Transform;
use crate::numerics::linalg::{min_eigenvalue, sym_inverse, Mat, Vector};

impl GlmFamily {
    /// Cumulant `K(ζ)` and its first two derivatives.
    pub fn cumulant(&self, z: f64) -> (f64, f64, f64) {
        match self {
            GlmFamily::Linear => (0.5 * z * z, z, 1.0),
            GlmFamily::Logistic => {
                let p = 1.0 / (1.0 + (-z).exp());
                let k = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                (k, p, p * (1.0 - p))
            }
            GlmFamily::Poisson => {
                let e = z.exp();
                (e, e, e)
            }
        }
    }

    /// Draws `y` with canonical parameter `ζ` and dispersion `φ`.
    pub fn sample<R: Rng + ?Sized>(&self, z: f64, phi: f64, rng: &mut R) -> f64 {
        match self {
            GlmFamily::Linear => {
                let e: f64 = StandardNormal.sample(rng);
                z + phi.sqrt() * e
            }
            GlmFamily::Logistic => {
                let p = 1.0 / (1.0 + (-z).exp());
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            GlmFamily::Poisson => Poisson::new(z.exp()).map(|d| d.sample(rng)).unwrap_or(0.0),
        }
    }
}

/// Covariates of a GLM study: included `x` (with intercept), the extra
/// columns `w`, and the auxiliary dispersion covariate `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmDesign {
    pub x: Mat,
    pub w: Mat,
    pub u: Vec<f64>,
}

impl GlmDesign {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// `X = (1, x₁)`, `W` with `k_w` columns per `w_design`.
    pub fn generate<R: Rng + ?Sized>(n: usize, k_w: usize, w_design: WDesign, rho: f64, rng: &mut R) -> Self {
        let mut normal = || -> f64 { StandardNormal.sample(rng) };
        let x1: Vec<f64> = (0..n).map(|_| normal()).collect();
        let u: Vec<f64> = (0..n).map(|_| normal()).collect();
        let rho = if w_design == WDesign::Correlated { rho } else { 0.0 };
        let c = (1.0 - rho * rho).sqrt();
        let mut w = Mat::from_fn(n, k_w, |_, _| 0.0);
        for j in 0..k_w {
            for i in 0..n {
                w[(i, j)] = rho * x1[i] + c * normal();
            }
        }
        let x = Mat::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x1[i] });
        if w_design == WDesign::Orthogonal && k_w > 0 {
            // residualize W on X so that XᵀW = 0
            let xtx = x.transpose() * &x;
            let coef = xtx.cholesky().expect("full-rank X").solve(&(x.transpose() * &w));
            w -= &x * coef;
        }
        GlmDesign { x, w, u }
    }

    /// `[X, W]`.
    pub fn full(&self) -> Mat {
        let n = self.n();
        let (p, k) = (self.x.ncols(), self.w.ncols());
        Mat::from_fn(n, p + k, |i, j| if j < p { self.x[(i, j)] } else { self.w[(i, j - p)] })
    }
}

/// The assumed GLM: family, dispersion model and the interest column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmModel {
    pub family: GlmFamily,
    pub dispersion: DispersionModel,
    pub interest: usize,
}

/// Outcomes with the design actually used in the fit and the dispersion
/// covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmData {
    pub z: Mat,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
}

fn check(model: &GlmModel, data: &GlmData) -> Result<()> {
    let (n, p) = data.z.shape();
    if n == 0 || data.y.len() != n || data.v.len() != n {
        return Err(MisfitError::invalid("data", "design, outcome and dispersion covariate lengths differ"));
    }
    if model.interest >= p {
        return Err(MisfitError::invalid("interest", "column index out of range"));
    }
    if model.family != GlmFamily::Linear && model.dispersion.n_params() > 0 {
        return Err(MisfitError::invalid("dispersion", "estimated dispersion needs the linear family"));
    }
    let gram = data.z.transpose() * &data.z;
    if min_eigenvalue(&gram) <= 1e-10 * gram.amax().max(1.0) {
        return Err(MisfitError::invalid("design", "design matrix is not of full column rank"));
    }
    for &y in &data.y {
        let ok = match model.family {
            GlmFamily::Linear => y.is_finite(),
            GlmFamily::Logistic => y == 0.0 || y == 1.0,
            GlmFamily::Poisson => y >= 0.0 && y.fract() == 0.0,
        };
        if !ok {
            return Err(MisfitError::invalid("y", format!("{y} is outside the {} sample space", model.family.name())));
        }
    }
    Ok(())
}

/// Log-likelihood terms of one observation with covariate row `zi`,
/// outcome `y` and dispersion covariate `v`; parameters are `(β, a[, b])`.
pub(crate) fn obs_terms(model: &GlmModel, zi: &[f64], y: f64, v: f64, theta: &[f64]) -> (f64, Vector, Mat) {
    let p = zi.len();
    let q = p + model.dispersion.n_params();
    let eta: f64 = zi.iter().zip(theta).map(|(a, b)| a * b).sum();
    let (ld, dd): (f64, Vector) = match model.dispersion {
        DispersionModel::Fixed { a, b } => (a + b * v, Vector::zeros(q)),
        DispersionModel::Constant => {
            let mut d = Vector::zeros(q);
            d[p] = 1.0;
            (theta[p], d)
        }
        DispersionModel::LogLinear => {
            let mut d = Vector::zeros(q);
            d[p] = 1.0;
            d[p + 1] = v;
            (theta[p] + theta[p + 1] * v, d)
        }
    };
    let phi = ld.exp();
    let (k, k1, k2) = model.family.cumulant(eta);
    let mut g = Vector::zeros(q);
    let mut h = Mat::zeros(q, q);
    let r = (y - k1) / phi;
    for a in 0..p {
        g[a] = r * zi[a];
        for b in 0..p {
            h[(a, b)] = -k2 / phi * zi[a] * zi[b];
        }
    }
    let value;
    if model.dispersion.n_params() > 0 {
        // normal: ℓ = −(y − η)²/(2φ) − ½ log(2π) − ½ log φ
        let e2 = (y - eta) * (y - eta) / phi;
        value = -0.5 * e2 - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * ld;
        let s = 0.5 * e2 - 0.5;
        for a in p..q {
            g[a] = s * dd[a];
            for b in p..q {
                h[(a, b)] = -0.5 * e2 * dd[a] * dd[b];
            }
            for b in 0..p {
                let v = -r * zi[b] * dd[a];
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
    } else {
        value = (y * eta - k) / phi;
    }
    (value, g, h)
}

fn start(model: &GlmModel, data: &GlmData) -> Vec<f64> {
    let p = data.z.ncols();
    let mut theta = vec![0.0; p + model.dispersion.n_params()];
    match model.family {
        GlmFamily::Linear => {
            let z = &data.z;
            let y = Vector::from_column_slice(&data.y);
            if let Some(ch) = (z.transpose() * z).cholesky() {
                let b = ch.solve(&(z.transpose() * &y));
                theta[..p].copy_from_slice(b.as_slice());
                if model.dispersion.n_params() > 0 {
                    let res = &y - z * &b;
                    theta[p] = (res.norm_squared() / y.len() as f64).max(1e-12).ln();
                }
            }
        }
        GlmFamily::Poisson => {
            let m = data.y.iter().sum::<f64>() / data.y.len() as f64;
            // intercept column, when present, starts at log of the mean
            if let Some(j) = (0..p).find(|&j| data.z.column(j).iter().all(|v| *v == 1.0)) {
                theta[j] = (m + 0.5).ln();
            }
        }
        GlmFamily::Logistic => {}
    }
    theta
}

/// Maximum-likelihood fit; `psi_hat` is the interest coefficient and
/// `lambda_hat` holds the remaining coefficients followed by the
/// dispersion parameters.
pub fn glm_fit(model: &GlmModel, data: &GlmData) -> Result<FitResult> {
    check(model, data)?;
    let p = data.z.ncols();
    let q = p + model.dispersion.n_params();
    let n = data.y.len();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| data.z.row(i).iter().copied().collect()).collect();
    let terms = |theta: &[f64], i: usize| obs_terms(model, &rows[i], data.y[i], data.v[i], theta);
    let objective = |theta: &[f64]| -> Result<Eval> {
        let mut value = 0.0;
        let mut grad = Vector::zeros(q);
        let mut hess = Mat::zeros(q, q);
        for i in 0..n {
            let (v, g, h) = terms(theta, i);
            value += v;
            grad += g;
            hess += h;
        }
        Ok(Eval { value, grad: grad.as_slice().to_vec(), hess })
    };
    let transforms = vec![Transform::Identity; q];
    let out = maximize(&objective, &start(model, data), &transforms, SolverOptions::default())?;
    if model.family == GlmFamily::Logistic {
        let eta = &data.z * Vector::from_column_slice(&out.x[..p]);
        let separated = eta.iter().zip(&data.y).all(|(e, y)| if *y == 1.0 { *e > 0.0 } else { *e < 0.0 });
        if separated {
            let norm = out.x[..p].iter().map(|b| b * b).sum::<f64>().sqrt();
            return Err(MisfitError::numerical(
                format!("complete separation: the fitted linear predictor classifies every outcome (|beta| = {norm:.3e})"),
                out.gradient_norm,
            ));
        }
    }
    // interest parameter first
    let order: Vec<usize> = std::iter::once(model.interest).chain((0..q).filter(|&j| j != model.interest)).collect();
    let info = Mat::from_fn(q, q, |a, b| -out.hess[(order[a], order[b])]);
    let mut meat = Mat::zeros(q, q);
    for i in 0..n {
        let (_, g, _) = terms(&out.x, i);
        let g = Vector::from_iterator(q, order.iter().map(|&j| g[j]));
        meat += &g * g.transpose();
    }
    let sandwich_cov = sym_inverse(&info).ok().map(|jinv| &jinv * meat * &jinv);
    let pd = min_eigenvalue(&info) > 0.0;
    Ok(FitResult {
        psi_hat: out.x[model.interest],
        lambda_hat: order[1..].iter().map(|&j| out.x[j]).collect(),
        loglik: out.value,
        observed_info: info,
        sandwich_cov,
        iterations: out.iterations,
        converged: out.converged && pd,
        gradient_norm: out.gradient_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::diff;
    use crate::rng::substream;

    fn linear_data(n: usize, slope: f64, seed: u64) -> (GlmDesign, GlmData) {
        let mut rng = substream(seed, 0);
        let d = GlmDesign::generate(n, 1, WDesign::Correlated, 0.5, &mut rng);
        let y = (0..n)
            .map(|i| GlmFamily::Linear.sample(0.2 + 0.7 * d.x[(i, 1)], (slope * d.u[i]).exp(), &mut rng))
            .collect();
        let data = GlmData { z: d.x.clone(), y, v: d.u.clone() };
        (d, data)
    }

    #[test]
    fn linear_fit_is_least_squares_under_constant_dispersion() {
        let (_, data) = linear_data(400, 0.8, 1);
        let zt = data.z.transpose();
        let b = (&zt * &data.z).cholesky().unwrap().solve(&(&zt * Vector::from_column_slice(&data.y)));
        for disp in [DispersionModel::Fixed { a: 0.0, b: 0.0 }, DispersionModel::Fixed { a: 1.3, b: 0.0 }, DispersionModel::Constant]
        {
            let f = glm_fit(&GlmModel { family: GlmFamily::Linear, dispersion: disp, interest: 1 }, &data).unwrap();
            assert!(f.converged);
            assert!((f.psi_hat - b[1]).abs() < 1e-10, "{disp:?}: {} vs {}", f.psi_hat, b[1]);
            assert!((f.lambda_hat[0] - b[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn loglinear_dispersion_gives_weighted_least_squares() {
        let (_, data) = linear_data(400, 0.8, 2);
        let f = glm_fit(&GlmModel { family: GlmFamily::Linear, dispersion: DispersionModel::LogLinear, interest: 1 }, &data)
            .unwrap();
        assert!(f.converged);
        let (a, b) = (f.lambda_hat[1], f.lambda_hat[2]);
        let w: Vec<f64> = data.v.iter().map(|v| (-(a + b * v)).exp()).collect();
        let zw = Mat::from_fn(data.z.nrows(), 2, |i, j| data.z[(i, j)] * w[i]);
        let lhs = zw.transpose() * &data.z;
        let rhs = zw.transpose() * Vector::from_column_slice(&data.y);
        let beta = lhs.cholesky().unwrap().solve(&rhs);
        assert!((f.psi_hat - beta[1]).abs() < 1e-10);
        assert!((b - 0.8).abs() < 0.25, "{b}");
    }

    #[test]
    fn obs_terms_match_finite_differences() {
        let (_, data) = linear_data(5, 0.3, 3);
        let model = GlmModel { family: GlmFamily::Linear, dispersion: DispersionModel::LogLinear, interest: 1 };
        let theta = [0.1, 0.5, -0.2, 0.4];
        for i in 0..5 {
            let zi = [data.z[(i, 0)], data.z[(i, 1)]];
            let f = |t: &[f64]| obs_terms(&model, &zi, data.y[i], data.v[i], t).0;
            let (_, g, h) = obs_terms(&model, &zi, data.y[i], data.v[i], &theta);
            let fg = diff::gradient(f, &theta, 1e-5);
            let fh = diff::hessian(f, &theta, 1e-4);
            for a in 0..4 {
                assert!((g[a] - fg[a]).abs() < 1e-7);
                for b in 0..4 {
                    assert!((h[(a, b)] - fh[a][b]).abs() < 1e-5, "{a}{b}");
                }
            }
        }
        for fam in [GlmFamily::Logistic, GlmFamily::Poisson] {
            let (k, k1, k2) = fam.cumulant(0.3);
            assert!((k1 - diff::central(|z| fam.cumulant(z).0, 0.3, 1e-5)).abs() < 1e-9);
            assert!((k2 - diff::central(|z| fam.cumulant(z).1, 0.3, 1e-5)).abs() < 1e-9);
            assert!(k.is_finite());
        }
    }

    #[test]
    fn orthogonal_design_is_exactly_orthogonal() {
        let mut rng = substream(4, 0);
        let d = GlmDesign::generate(300, 2, WDesign::Orthogonal, 0.5, &mut rng);
        assert!((d.x.transpose() * &d.w).amax() < 1e-10);
    }

    #[test]
    fn separation_is_detected() {
        let z = Mat::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 - 2.5 });
        let data = GlmData { z, y: vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], v: vec![0.0; 6] };
        let m = GlmModel { family: GlmFamily::Logistic, dispersion: DispersionModel::Fixed { a: 0.0, b: 0.0 }, interest: 1 };
        match glm_fit(&m, &data) {
            Err(MisfitError::NumericalFailure { reason, .. }) => assert!(reason.contains("separation")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn logistic_and_poisson_recover_coefficients() {
        let mut rng = substream(5, 0);
        let d = GlmDesign::generate(4000, 0, WDesign::Independent, 0.0, &mut rng);
        for fam in [GlmFamily::Logistic, GlmFamily::Poisson] {
            let y = (0..4000).map(|i| fam.sample(0.2 + 0.7 * d.x[(i, 1)], 1.0, &mut rng)).collect();
            let data = GlmData { z: d.x.clone(), y, v: d.u.clone() };
            let m = GlmModel { family: fam, dispersion: DispersionModel::Fixed { a: 0.0, b: 0.0 }, interest: 1 };
            let f = glm_fit(&m, &data).unwrap();
            assert!(f.converged);
            assert!((f.psi_hat - 0.7).abs() < 4.0 * f.sandwich_se().unwrap(), "{fam:?} {}", f.psi_hat);
        }
    }
}
