//! Classical fourth-order Runge–Kutta for small autonomous-in-form systems.

use crate::error::{MisfitError, Result};

/// One RK4 step of size `h` for `y' = f(t, y)`.
pub fn rk4_step(
    f: &impl Fn(f64, &[f64]) -> Result<Vec<f64>>,
    t: f64,
    y: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let add = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, k)| b + s * k).collect()
    };
    let k1 = f(t, y)?;
    let k2 = f(t + h / 2.0, &add(y, &k1, h / 2.0))?;
    let k3 = f(t + h / 2.0, &add(y, &k2, h / 2.0))?;
    let k4 = f(t + h, &add(y, &k3, h))?;
    let out: Vec<f64> = (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(MisfitError::numerical(format!("non-finite RK4 state at t = {}", t + h), f64::NAN));
    }
    Ok(out)
}

/// A step of size `h` taken both whole and as two halves. Returns the
/// two-half result and the max-norm difference as a local error estimate.
pub fn rk4_checked_step(
    f: &impl Fn(f64, &[f64]) -> Result<Vec<f64>>,
    t: f64,
    y: &[f64],
    h: f64,
) -> Result<(Vec<f64>, f64)> {
    let full = rk4_step(f, t, y, h)?;
    let mid = rk4_step(f, t, y, h / 2.0)?;
    let two = rk4_step(f, t + h / 2.0, &mid, h / 2.0)?;
    let err = full.iter().zip(&two).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((two, err))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let f = |_t: f64, y: &[f64]| Ok(vec![y[0]]);
        let mut y = vec![1.0];
        let mut t = 0.0;
        for _ in 0..10 {
            let (next, err) = rk4_checked_step(&f, t, &y, 0.1).unwrap();
            assert!(err < 1e-6);
            y = next;
            t += 0.1;
        }
        assert!((y[0] - 1f64.exp()).abs() < 1e-6);
    }

    #[test]
    fn harmonic_oscillator_conserves_energy() {
        let f = |_t: f64, y: &[f64]| Ok(vec![y[1], -y[0]]);
        let mut y = vec![1.0, 0.0];
        for k in 0..100 {
            y = rk4_step(&f, k as f64 * 0.01, &y, 0.01).unwrap();
        }
        assert!((y[0] - 1f64.cos()).abs() < 1e-9);
    }
}
