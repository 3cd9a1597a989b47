//! Small dense symmetric-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{MisfitError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn min_eigenvalue(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(a)).eigenvalues.min()
}

pub fn max_abs_asymmetry(a: &Mat) -> f64 {
    (a - a.transpose()).amax()
}

/// Inverse of a symmetric matrix. Fails when the spectrum reaches zero,
/// reporting the eigenvalue of smallest magnitude.
pub fn sym_inverse(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let vals = &eig.eigenvalues;
    let scale = vals.amax().max(f64::MIN_POSITIVE);
    let smallest = vals.iter().cloned().min_by(|x, y| x.abs().total_cmp(&y.abs())).unwrap_or(0.0);
    if !smallest.is_finite() || smallest.abs() <= 1e-13 * scale {
        return Err(MisfitError::numerical(
            format!("singular matrix: smallest eigenvalue {smallest:e}"),
            smallest,
        ));
    }
    let inv_vals = Vector::from_iterator(n, vals.iter().map(|v| 1.0 / v));
    let q = &eig.eigenvectors;
    Ok(q * Mat::from_diagonal(&inv_vals) * q.transpose())
}

/// Spectral condition number `max|λ| / min|λ|`.
pub fn condition_number(a: &Mat) -> f64 {
    let vals = SymmetricEigen::new(symmetrize(a)).eigenvalues;
    let big = vals.amax();
    let small = vals.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    big / small
}

/// Replaces eigenvalues of a symmetric matrix by `max(λ, floor)`.
pub fn floor_eigenvalues(a: &Mat, floor: f64) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(a));
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    &eig.eigenvectors * Mat::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Solves `a x = b` for symmetric `a` through [`sym_inverse`].
pub fn sym_solve(a: &Mat, b: &Vector) -> Result<Vector> {
    Ok(sym_inverse(a)? * b)
}

/// Index-based block extraction.
pub fn block(a: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}
