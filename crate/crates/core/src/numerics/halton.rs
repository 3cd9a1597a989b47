//! Halton low-discrepancy points for deterministic probe grids.

const PRIMES: [u32; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % b) as f64;
        index /= b;
        f *= inv;
    }
    out
}

/// `n` points in `[0,1)^dim`, skipping the origin.
pub fn points(n: usize, dim: usize) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "halton dimension above {}", PRIMES.len());
    (1..=n as u64)
        .map(|i| (0..dim).map(|d| radical_inverse(i, PRIMES[d])).collect())
        .collect()
}

/// `n` points mapped affinely into the box `[lo_d, hi_d]`.
pub fn points_in_box(n: usize, bounds: &[(f64, f64)]) -> Vec<Vec<f64>> {
    points(n, bounds.len())
        .into_iter()
        .map(|p| p.iter().zip(bounds).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_points() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert!((radical_inverse(1, 3) - 1.0 / 3.0).abs() < 1e-15);
        let p = points_in_box(10, &[(1.0, 2.0), (-1.0, 1.0)]);
        assert!(p.iter().all(|q| (1.0..2.0).contains(&q[0]) && (-1.0..1.0).contains(&q[1])));
    }
}
