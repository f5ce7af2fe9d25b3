//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Inverse of a symmetric positive definite matrix, `None` if Cholesky fails.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Solves `m x = b` for symmetric positive definite `m`.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    m.clone().cholesky().map(|c| c.solve(b))
}

/// General inverse via LU, `None` when singular.
pub fn inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().try_inverse()
}

/// Extreme eigenvalues of a symmetric matrix, `(min, max)`.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// 2-norm condition number of a symmetric positive semi-definite matrix.
/// Infinite when the smallest eigenvalue is not positive.
pub fn spd_condition(m: &DMatrix<f64>) -> f64 {
    let (min, max) = sym_eig_range(m);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Ordinary least squares of `y` on the columns of `x` (no intercept).
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    if x.nrows() < x.ncols() {
        return None;
    }
    let gram = x.tr_mul(x);
    let rhs = x.tr_mul(y);
    let (min, max) = sym_eig_range(&gram);
    if !(min > max * 1e-14) {
        return None;
    }
    spd_solve(&gram, &rhs)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
