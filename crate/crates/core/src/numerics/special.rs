//! Special functions not covered by `statrs`.

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Trigamma function, the derivative of [`digamma`].
///
/// Uses the recurrence ψ₁(x) = ψ₁(x+1) + 1/x² to push the argument above 10,
/// then the asymptotic expansion in 1/x.
pub fn trigamma(x: f64) -> f64 {
    if x.is_nan() || x == f64::NEG_INFINITY {
        return f64::NAN;
    }
    if x <= 0.0 && x == x.floor() {
        return f64::INFINITY;
    }
    if x < 0.0 {
        // reflection: ψ₁(1−x) + ψ₁(x) = π² / sin²(πx)
        let s = (std::f64::consts::PI * x).sin();
        return -trigamma(1.0 - x) + std::f64::consts::PI.powi(2) / (s * s);
    }
    let mut acc = 0.0;
    let mut z = x;
    while z < 10.0 {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // Bernoulli-number series
    let series = inv
        + inv2 / 2.0
        + inv * inv2
            * (1.0 / 6.0
                - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    acc + series
}

pub fn ln_factorial(k: f64) -> f64 {
    if k.fract() == 0.0 && (0.0..=32.0).contains(&k) {
        return (2..=k as u32).map(|i| (i as f64).ln()).sum();
    }
    ln_gamma(k + 1.0)
}

/// Numerically stable `log(Σ exp(xᵢ))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 15.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum
    } else {
        // asymptotic expansion
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..12 {
            let kf = (2 * k - 1) as f64;
            term *= kf * kf / (8.0 * ax * k as f64);
            sum += term;
        }
        sum * ax.exp() / (2.0 * std::f64::consts::PI * ax).sqrt()
    }
}
