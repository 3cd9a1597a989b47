//! Grid checks of the consistency conditions.

use rayon::prelude::*;

use super::report::{CheckOptions, Condition, ConditionReport, Residual};
use crate::error::Result;
use crate::inference::{g_vector, info_matrices};
use crate::mixture_lik::{expect_under_true, AssumedModel, Order, PairObs, TrueModel};
use crate::numerics::linalg::{min_eigenvalue, Mat};

fn check_grid(assumed: &AssumedModel, grid: &[Vec<f64>]) -> Result<()> {
    if grid.is_empty() {
        return Err(crate::MisfitError::invalid("lambda_grid", "grid is empty"));
    }
    for l in grid {
        if l.len() != assumed.dim() - 1 {
            return Err(crate::MisfitError::invalid("lambda_grid", format!("point {l:?} has the wrong dimension")));
        }
    }
    Ok(())
}

fn lambda_names(assumed: &AssumedModel) -> Vec<&'static str> {
    assumed.param_names()[1..].to_vec()
}

/// `E_m[∇²_ψλ ℓ(ψ*, λ)]` over the grid.
pub fn check_m_orthogonality(
    truth: &TrueModel,
    assumed: &AssumedModel,
    psi_star: f64,
    grid: &[Vec<f64>],
    opts: CheckOptions,
) -> Result<ConditionReport> {
    check_grid(assumed, grid)?;
    let p = assumed.dim();
    let names = lambda_names(assumed);
    let per_point: Vec<(Vec<Residual>, Option<bool>)> = grid
        .par_iter()
        .enumerate()
        .map(|(k, lam)| {
            let f = |o: &PairObs, out: &mut [f64]| -> Result<()> {
                let h = assumed.derivs(psi_star, lam, o, Some(Order::Hessian))?.hess.expect("hessian requested");
                out.copy_from_slice(h.as_slice());
                Ok(())
            };
            match expect_under_true(&f, p * p, truth, opts.method) {
                Ok(e) => {
                    let h = Mat::from_column_slice(p, p, &e.value);
                    let res = (1..p)
                        .map(|j| Residual::new(k, format!("d2_psi_{}", names[j - 1]), h[(0, j)], e.error[j * p]))
                        .collect();
                    (res, Some(min_eigenvalue(&(-h)) > 0.0))
                }
                Err(err) => (names.iter().map(|n| Residual::failed(k, format!("d2_psi_{n}"), err.to_string())).collect(), None),
            }
        })
        .collect();
    let nd = per_point.iter().map(|p| p.1).collect();
    let residuals = per_point.into_iter().flat_map(|p| p.0).collect();
    let mut report = ConditionReport::new(Condition::MOrthogonality, grid.to_vec(), residuals, opts.tolerance());
    report.hessian_negative_definite = nd;
    Ok(report)
}

/// `E_m[∇_ψ ℓ(ψ*, λ)]` over the grid.
pub fn check_consistency(
    truth: &TrueModel,
    assumed: &AssumedModel,
    psi_star: f64,
    grid: &[Vec<f64>],
    opts: CheckOptions,
) -> Result<ConditionReport> {
    check_grid(assumed, grid)?;
    let residuals: Vec<Residual> = grid
        .par_iter()
        .enumerate()
        .map(|(k, lam)| match g_vector(truth, assumed, psi_star, lam, opts.method) {
            Ok(g) => Residual::new(k, "g_psi", g.g_psi, g.error[0]),
            Err(err) => Residual::failed(k, "g_psi", err.to_string()),
        })
        .collect();
    Ok(ConditionReport::new(Condition::ConsistencyScore, grid.to_vec(), residuals, opts.tolerance()))
}

/// `i^ψψ g_ψ + i^ψλ g_λ` over the grid, plus the reduced form
/// `i_λλ g_ψ − i_ψλ g_λ` when `λ` is scalar.
pub fn check_coxwong(
    truth: &TrueModel,
    assumed: &AssumedModel,
    psi_star: f64,
    grid: &[Vec<f64>],
    opts: CheckOptions,
) -> Result<ConditionReport> {
    check_grid(assumed, grid)?;
    let p = assumed.dim();
    let per_point: Vec<(Residual, Option<Residual>, Option<bool>)> = grid
        .par_iter()
        .enumerate()
        .map(|(k, lam)| {
            let eval = || -> Result<(Residual, Option<Residual>, bool)> {
                let info = info_matrices(truth, assumed, psi_star, lam, opts.method)?;
                let g = g_vector(truth, assumed, psi_star, lam, opts.method)?;
                let inv = info.i_inverse()?;
                let value = (0..p).map(|j| inv[(0, j)] * if j == 0 { g.g_psi } else { g.g_lambda[j - 1] }).sum();
                // first-order propagation: δ(i⁻¹) ≈ i⁻¹ δi i⁻¹, bounded entrywise
                let gs: Vec<f64> = std::iter::once(g.g_psi).chain(g.g_lambda.iter().copied()).collect();
                let ainv = inv.abs();
                let bound = &ainv * &info.i_error * &ainv;
                let error: f64 = (0..p).map(|j| ainv[(0, j)] * g.error[j] + bound[(0, j)] * gs[j].abs()).sum();
                let reduced = (p == 2).then(|| {
                    let v = info.i[(1, 1)] * g.g_psi - info.i[(0, 1)] * g.g_lambda[0];
                    let e = info.i[(1, 1)].abs() * g.error[0]
                        + info.i[(0, 1)].abs() * g.error[1]
                        + (g.g_psi.abs() + g.g_lambda[0].abs()) * info.i_error.amax();
                    Residual::new(k, "reduced", v, e)
                });
                Ok((Residual::new(k, "coxwong", value, error), reduced, min_eigenvalue(&info.i) > 0.0))
            };
            match eval() {
                Ok((r, red, nd)) => (r, red, Some(nd)),
                Err(err) => (Residual::failed(k, "coxwong", err.to_string()), None, None),
            }
        })
        .collect();
    let nd = per_point.iter().map(|p| p.2).collect();
    let reduced = per_point.iter().filter_map(|p| p.1.clone()).collect();
    let residuals = per_point.into_iter().map(|p| p.0).collect();
    let mut report = ConditionReport::new(Condition::CoxWongIdentity, grid.to_vec(), residuals, opts.tolerance());
    report.reduced = reduced;
    report.hessian_negative_definite = nd;
    Ok(report)
}

/// A named function of one stratum.
#[derive(Clone, Copy)]
pub struct Statistic {
    pub name: &'static str,
    pub f: fn(&PairObs) -> f64,
}

/// The two arm totals.
pub fn arm_totals() -> Vec<Statistic> {
    vec![Statistic { name: "S1", f: |o| o.y1 }, Statistic { name: "S0", f: |o| o.y0 }]
}

/// `E_m(S_j) − E_(ψ,λ)(S_j)` for each statistic.
pub fn check_moment_match(
    truth: &TrueModel,
    assumed: &AssumedModel,
    psi: f64,
    lambda: &[f64],
    stats: &[Statistic],
    opts: CheckOptions,
) -> Result<ConditionReport> {
    if stats.is_empty() {
        return Err(crate::MisfitError::invalid("stats", "no statistics given"));
    }
    let own = assumed.as_true(psi, lambda, &truth.design)?;
    let f = |o: &PairObs, out: &mut [f64]| -> Result<()> {
        for (s, v) in stats.iter().zip(out.iter_mut()) {
            *v = (s.f)(o);
        }
        Ok(())
    };
    let mut point = vec![psi];
    point.extend_from_slice(lambda);
    let residuals = match (
        expect_under_true(&f, stats.len(), truth, opts.method),
        expect_under_true(&f, stats.len(), &own, opts.method),
    ) {
        (Ok(a), Ok(b)) => stats
            .iter()
            .enumerate()
            .map(|(j, s)| Residual::new(0, s.name, a.value[j] - b.value[j], a.error[j] + b.error[j]))
            .collect(),
        (Err(e), _) | (_, Err(e)) => stats.iter().map(|s| Residual::failed(0, s.name, e.to_string())).collect(),
    };
    Ok(ConditionReport::new(Condition::MomentMatch, vec![point], residuals, opts.tolerance()))
}

#[cfg(test)]
mod tests {
    use super::super::report::{default_lambda_grid, Verdict};
    use super::*;
    use crate::families::DensityFamily;
    use crate::mixture_lik::{AssumedMixing, PairKernel};

    fn atoms() -> DensityFamily {
        DensityFamily::DiscreteAtoms { points: vec![0.5, 1.0, 2.5], weights: vec![0.3, 0.4, 0.3] }
    }

    fn lognormal() -> DensityFamily {
        DensityFamily::LogNormal { log_mean: 0.0, log_sd: 1.0 }
    }

    #[test]
    fn exponential_pairs_orthogonal_under_lognormal_truth() {
        let t = TrueModel::new(PairKernel::exponential(), 1.5, lognormal());
        let m = AssumedModel::new(PairKernel::exponential(), AssumedMixing::Gamma);
        let grid = default_lambda_grid(2);
        let r = check_m_orthogonality(&t, &m, 1.5, &grid, CheckOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds, "{r:?}");
        assert!(r.hessian_negative_definite.iter().all(|v| v.is_some()));
        let c = check_coxwong(&t, &m, 1.5, &grid, CheckOptions::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Holds, "{c:?}");
    }

    #[test]
    fn normal_pairs_with_point_mass() {
        let m = AssumedModel::new(PairKernel::Normal, AssumedMixing::PointMass);
        let t = m.as_true(0.3, &[1.0], &[(1.0, 1.0)]).unwrap();
        let r = check_m_orthogonality(&t, &m, 0.3, &default_lambda_grid(1), CheckOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds, "{r:?}");
    }

    #[test]
    fn nonsymmetric_pairs_fail() {
        let t = TrueModel::new(PairKernel::exponential_nonsymmetric(), 2.25, lognormal());
        let m = AssumedModel::new(PairKernel::exponential_nonsymmetric(), AssumedMixing::Gamma);
        let grid = default_lambda_grid(2);
        let r = check_m_orthogonality(&t, &m, 2.25, &grid, CheckOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Fails, "{r:?}");
        let c = check_consistency(&t, &m, 2.25, &grid, CheckOptions::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Fails);
        assert!(c.residuals.iter().any(|r| r.value.abs() > 10.0 * r.error));
    }

    #[test]
    fn consistency_holds_for_atoms_and_minima() {
        let m = AssumedModel::new(PairKernel::exponential(), AssumedMixing::Gamma);
        let grid = default_lambda_grid(2);
        let t = TrueModel::new(PairKernel::exponential(), 1.5, atoms());
        assert_eq!(check_consistency(&t, &m, 1.5, &grid, CheckOptions::default()).unwrap().verdict, Verdict::Holds);
        let t2 = t.with_design(vec![(3.0, 2.0), (1.0, 4.0)]);
        assert_eq!(check_consistency(&t2, &m, 1.5, &grid, CheckOptions::default()).unwrap().verdict, Verdict::Holds);
    }

    #[test]
    fn poisson_coxwong_holds_on_mean_matched_slice() {
        let t = TrueModel::new(PairKernel::Poisson, 0.4, atoms()).with_design(vec![(1.0, 2.0), (3.0, 1.0)]);
        let m = AssumedModel::new(PairKernel::Poisson, AssumedMixing::GammaMeanShape);
        let nu = 1.0 / t.mixing.mean();
        let grid: Vec<Vec<f64>> = [0.5, 1.0, 2.0, 5.0].iter().map(|&w| vec![nu, w]).collect();
        let c = check_coxwong(&t, &m, 0.4, &grid, CheckOptions::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Holds, "{c:?}");
        let off = check_coxwong(&t, &m, 0.4, &[vec![2.0 * nu, 1.0]], CheckOptions::default()).unwrap();
        assert_eq!(off.verdict, Verdict::Fails, "{off:?}");
    }

    #[test]
    fn moment_match_cases() {
        let m = AssumedModel::new(PairKernel::Poisson, AssumedMixing::GammaMeanShape);
        let design = vec![(1.0, 2.0)];
        let own = m.as_true(0.4, &[0.8, 2.0], &design).unwrap();
        let r = check_moment_match(&own, &m, 0.4, &[0.8, 2.0], &arm_totals(), CheckOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!(r.max_abs_residual < 1e-12);
        let t = TrueModel::new(PairKernel::Poisson, 0.4, atoms()).with_design(design.clone());
        let nu = 1.0 / t.mixing.mean();
        let r = check_moment_match(&t, &m, 0.4, &[nu, 0.7], &arm_totals(), CheckOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds, "{r:?}");
        let r = check_moment_match(&t, &m, 0.4, &[1.5 * nu, 0.7], &arm_totals(), CheckOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
    }

    #[test]
    fn wrong_grid_dimension_is_rejected() {
        let t = TrueModel::new(PairKernel::exponential(), 1.5, atoms());
        let m = AssumedModel::new(PairKernel::exponential(), AssumedMixing::Gamma);
        assert!(check_consistency(&t, &m, 1.5, &[vec![1.0]], CheckOptions::default()).is_err());
        assert!(check_consistency(&t, &m, 1.5, &[], CheckOptions::default()).is_err());
    }
}
