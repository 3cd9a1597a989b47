//! Orthogonal reparametrization by integrating `dλ/dψ = −ǐ_λλ⁻¹ ǐ_λψ`.

use serde::Serialize;

use crate::error::{MisfitError, Result};
use crate::numerics::linalg::{block, sym_solve, Mat, Vector};
use crate::numerics::ode::rk4_checked_step;

/// Local RK4 error allowed per step before the step is halved.
const STEP_TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 24;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthoRow {
    pub psi: f64,
    pub lambda: Vec<f64>,
    /// `ǐ_ψa` in the new coordinates `(ψ, a)`, from finite-difference Jacobians.
    pub cross_info: Vec<f64>,
    /// `ǐ_ψλ` in the original coordinates at the same point.
    pub original_cross_info: Vec<f64>,
    /// Largest local RK4 error estimate on the way to this row.
    pub step_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthoPath {
    pub rows: Vec<OrthoRow>,
}

impl OrthoPath {
    pub fn max_cross_info(&self) -> f64 {
        self.rows.iter().flat_map(|r| r.cross_info.iter()).fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

type InfoFn<'a> = &'a dyn Fn(&[f64]) -> Result<Mat>;

fn rhs(info_fn: InfoFn, psi: f64, lambda: &[f64]) -> Result<Vec<f64>> {
    let mut phi = vec![psi];
    phi.extend_from_slice(lambda);
    let i = info_fn(&phi)?;
    let lam: Vec<usize> = (1..phi.len()).collect();
    let ill = block(&i, &lam, &lam);
    let ilp = Vector::from_iterator(lam.len(), lam.iter().map(|&j| i[(j, 0)]));
    let d = sym_solve(&ill, &ilp)
        .map_err(|e| MisfitError::numerical(format!("singular information at psi = {psi}: {e}"), f64::NAN))?;
    Ok(d.iter().map(|v| -v).collect())
}

/// Advances `λ` from `a` to `b`, halving steps whose local error is too big.
fn advance(info_fn: InfoFn, a: f64, b: f64, lambda: &[f64], depth: u32) -> Result<(Vec<f64>, f64)> {
    let f = |t: f64, y: &[f64]| rhs(info_fn, t, y);
    let (next, err) = rk4_checked_step(&f, a, lambda, b - a)?;
    if err <= STEP_TOL || depth >= MAX_DEPTH {
        return Ok((next, err));
    }
    let mid = 0.5 * (a + b);
    let (half, e1) = advance(info_fn, a, mid, lambda, depth + 1)?;
    let (full, e2) = advance(info_fn, mid, b, &half, depth + 1)?;
    Ok((full, e1.max(e2)))
}

/// Integrates the orthogonality equations from `phi0 = (ψ₀, λ₀)` through
/// `psi_grid`, one row per grid point.
pub fn orthogonalize(info_fn: InfoFn, phi0: &[f64], psi_grid: &[f64]) -> Result<OrthoPath> {
    if phi0.len() < 2 {
        return Err(MisfitError::invalid("phi0", "needs psi and at least one nuisance parameter"));
    }
    if psi_grid.is_empty() {
        return Err(MisfitError::invalid("psi_grid", "grid is empty"));
    }
    let ordered = psi_grid.windows(2).all(|w| w[1] > w[0]) || psi_grid.windows(2).all(|w| w[1] < w[0]);
    if !ordered || psi_grid.iter().any(|v| !v.is_finite()) {
        return Err(MisfitError::invalid("psi_grid", "grid must be finite and strictly monotone"));
    }
    let k = phi0.len() - 1;
    // base path plus ± perturbations of each starting λ for ∂λ/∂a
    let mut paths: Vec<Vec<f64>> = vec![phi0[1..].to_vec()];
    let deltas: Vec<f64> = phi0[1..].iter().map(|a| 1e-5 * a.abs().max(1.0)).collect();
    for j in 0..k {
        for s in [1.0, -1.0] {
            let mut p = phi0[1..].to_vec();
            p[j] += s * deltas[j];
            paths.push(p);
        }
    }
    let mut psi = phi0[0];
    let mut rows = Vec::with_capacity(psi_grid.len());
    let mut step_error: f64 = 0.0;
    for &target in psi_grid {
        if target != psi {
            for p in paths.iter_mut() {
                let (next, err) = advance(info_fn, psi, target, p, 0).map_err(|e| match e {
                    MisfitError::NumericalFailure { reason, residual } => {
                        MisfitError::NumericalFailure { reason: format!("{reason} (path reached psi = {psi})"), residual }
                    }
                    other => other,
                })?;
                *p = next;
                step_error = step_error.max(err);
            }
            psi = target;
        }
        rows.push(row(info_fn, psi, &paths, &deltas, step_error)?);
    }
    Ok(OrthoPath { rows })
}

fn row(info_fn: InfoFn, psi: f64, paths: &[Vec<f64>], deltas: &[f64], step_error: f64) -> Result<OrthoRow> {
    let lambda = paths[0].clone();
    let k = lambda.len();
    let mut phi = vec![psi];
    phi.extend_from_slice(&lambda);
    let i = info_fn(&phi)?;
    // ∂φ/∂ψ at fixed a, by central differences along the solution
    let h = 1e-4 * psi.abs().max(1.0);
    let (fwd, _) = advance(info_fn, psi, psi + h, &lambda, 0)?;
    let (bwd, _) = advance(info_fn, psi, psi - h, &lambda, 0)?;
    let mut dpsi = Vector::zeros(k + 1);
    dpsi[0] = 1.0;
    for j in 0..k {
        dpsi[j + 1] = (fwd[j] - bwd[j]) / (2.0 * h);
    }
    let cross_info = (0..k)
        .map(|j| {
            let mut da = Vector::zeros(k + 1);
            for m in 0..k {
                da[m + 1] = (paths[1 + 2 * j][m] - paths[2 + 2 * j][m]) / (2.0 * deltas[j]);
            }
            (dpsi.transpose() * &i * da)[(0, 0)]
        })
        .collect();
    Ok(OrthoRow {
        psi,
        lambda,
        cross_info,
        original_cross_info: (1..=k).map(|j| i[(0, j)]).collect(),
        step_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::DensityFamily;
    use crate::inference::assumed_information;
    use crate::mixture_lik::{AssumedMixing, AssumedModel, ExpectMethod, PairKernel};

    #[test]
    fn normal_family_is_already_orthogonal() {
        let f = |phi: &[f64]| DensityFamily::Normal { mean: phi[0], var: phi[1] }.fisher_information(0);
        let path = orthogonalize(&f, &[0.0, 2.0], &[0.0, 0.5, 1.0, 2.0]).unwrap();
        for r in &path.rows {
            assert!((r.lambda[0] - 2.0).abs() < 1e-8, "{r:?}");
            assert!(r.cross_info[0].abs() < 1e-6);
        }
    }

    #[test]
    fn nonsymmetric_exponential_pairs() {
        // analytic ǐ for rates (γθ, γ): solution γ = γ₀ √(θ₀/θ)
        let f = |phi: &[f64]| -> Result<Mat> {
            let (t, g) = (phi[0], phi[1]);
            Ok(Mat::from_row_slice(2, 2, &[1.0 / (t * t), 1.0 / (g * t), 1.0 / (g * t), 2.0 / (g * g)]))
        };
        let grid = [1.0, 1.5, 2.0, 3.0, 4.0];
        let path = orthogonalize(&f, &[1.0, 2.0], &grid).unwrap();
        for r in &path.rows {
            assert!((r.lambda[0] - 2.0 / r.psi.sqrt()).abs() < 1e-8, "{r:?}");
            assert!(r.cross_info[0].abs() <= 1e-6, "{r:?}");
        }
        assert!(path.rows[1].original_cross_info[0].abs() > 0.1);
        // the same through the quadrature-backed assumed information
        let m = AssumedModel::new(PairKernel::exponential_nonsymmetric(), AssumedMixing::PointMass);
        let q = |phi: &[f64]| assumed_information(&m, phi[0], &phi[1..], &[(1.0, 1.0)], ExpectMethod::default());
        let p2 = orthogonalize(&q, &[1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        for r in &p2.rows {
            assert!((r.lambda[0] - 2.0 / r.psi.sqrt()).abs() < 1e-6, "{r:?}");
            assert!(r.cross_info[0].abs() <= 1e-6, "{r:?}");
        }
    }

    #[test]
    fn single_point_grid_returns_start() {
        let f = |_phi: &[f64]| -> Result<Mat> { Ok(Mat::identity(3, 3)) };
        let path = orthogonalize(&f, &[0.5, 1.0, 2.0], &[0.5]).unwrap();
        assert_eq!(path.rows.len(), 1);
        assert_eq!(path.rows[0].lambda, vec![1.0, 2.0]);
    }

    #[test]
    fn singular_information_reports_position() {
        let f = |phi: &[f64]| -> Result<Mat> {
            let s = if phi[0] > 1.0 { 0.0 } else { 1.0 };
            Ok(Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, s]))
        };
        let r = orthogonalize(&f, &[0.0, 1.0], &[0.0, 0.5, 2.0]);
        match r {
            Err(MisfitError::NumericalFailure { reason, .. }) => assert!(reason.contains("psi = 0.5"), "{reason}"),
            other => panic!("{other:?}"),
        }
        assert!(orthogonalize(&f, &[0.0, 1.0], &[0.0, 0.5, 0.2]).is_err());
    }
}
