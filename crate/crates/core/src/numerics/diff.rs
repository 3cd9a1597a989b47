//! Central finite differences, used as oracles for analytic derivatives and
//! as a fallback where no closed form exists.

/// Central difference `(f(x+h) − f(x−h)) / 2h`.
pub fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Second central difference.
pub fn central2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

/// One Richardson step on the central difference: `(4 D(h/2) − D(h)) / 3`.
/// Returns the extrapolated value and `|D(h/2) − D(h)|` as an error proxy.
pub fn richardson(f: impl Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    let d1 = central(&f, x, h);
    let d2 = central(&f, x, h / 2.0);
    ((4.0 * d2 - d1) / 3.0, (d2 - d1).abs())
}

/// Central-difference gradient with a relative step per coordinate.
pub fn gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let hi = h * x[i].abs().max(1.0);
            xp[i] = x[i] + hi;
            let fp = f(&xp);
            xp[i] = x[i] - hi;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * hi)
        })
        .collect()
}

/// Central-difference Hessian (row-major, symmetrized).
pub fn hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut out = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    let step: Vec<f64> = x.iter().map(|v| h * v.abs().max(1.0)).collect();
    let f0 = f(x);
    for i in 0..n {
        xp[i] = x[i] + step[i];
        let fp = f(&xp);
        xp[i] = x[i] - step[i];
        let fm = f(&xp);
        xp[i] = x[i];
        out[i][i] = (fp - 2.0 * f0 + fm) / (step[i] * step[i]);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * step[i];
                xp[j] = x[j] + sj * step[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * step[i] * step[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Jacobian of a vector map by central differences; `out[i][j] = ∂fᵢ/∂xⱼ`.
pub fn jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let mut xp = x.to_vec();
    let mut cols = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let hj = h * x[j].abs().max(1.0);
        xp[j] = x[j] + hj;
        let fp = f(&xp);
        xp[j] = x[j] - hj;
        let fm = f(&xp);
        xp[j] = x[j];
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * hj)).collect::<Vec<_>>());
    }
    let m = cols.first().map_or(0, |c| c.len());
    (0..m).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
}

/// Relative disagreement `|a − b| / max(1, |a|, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_exp() {
        let d = central(f64::exp, 1.0, 1e-5);
        assert!((d - 1f64.exp()).abs() < 1e-9);
        let (r, _) = richardson(f64::exp, 1.0, 1e-3);
        assert!((r - 1f64.exp()).abs() < 1e-11);
        assert!((central2(f64::exp, 0.0, 1e-4) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hessian_of_quadratic_form() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + x[0] * x[1] - 2.0 * x[1] * x[1];
        let h = hessian(f, &[0.3, -0.7], 1e-4);
        assert!((h[0][0] - 6.0).abs() < 1e-6);
        assert!((h[0][1] - 1.0).abs() < 1e-6);
        assert!((h[1][1] + 4.0).abs() < 1e-6);
        let g = gradient(f, &[0.3, -0.7], 1e-6);
        assert!((g[0] - (1.8 - 0.7)).abs() < 1e-8);
    }

    #[test]
    fn jacobian_layout() {
        let j = jacobian(|x| vec![x[0] * x[1], x[1]], &[2.0, 3.0], 1e-6);
        assert!((j[0][0] - 3.0).abs() < 1e-8 && (j[0][1] - 2.0).abs() < 1e-8);
        assert!(j[1][0].abs() < 1e-8 && (j[1][1] - 1.0).abs() < 1e-8);
    }
}
