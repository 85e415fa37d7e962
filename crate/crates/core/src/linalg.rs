//! Small dense helpers on top of nalgebra used throughout the estimators.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Ratio of extreme eigenvalues of a symmetric matrix. Returns infinity when
/// the smallest eigenvalue is not positive.
pub fn condition_number(sym: &Matrix) -> f64 {
    if sym.nrows() == 0 {
        return 1.0;
    }
    let eig = symmetrize(sym).symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if !(min > 0.0) || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn min_eigenvalue(sym: &Matrix) -> f64 {
    if sym.nrows() == 0 {
        return 0.0;
    }
    symmetrize(sym).symmetric_eigenvalues().min()
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Inverse of a general square matrix via LU.
pub fn inverse(m: &Matrix) -> Option<Matrix> {
    m.clone().try_inverse()
}

/// `a * m * bᵀ` for d×d blocks.
pub fn sandwich(a: &Matrix, m: &Matrix, b: &Matrix) -> Matrix {
    a * m * b.transpose()
}

pub fn outer(a: &Vector, b: &Vector) -> Matrix {
    a * b.transpose()
}

pub fn sup_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Relative Frobenius distance `‖a − b‖ / ‖b‖`.
pub fn relative_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let denom = b.norm();
    if denom == 0.0 {
        (a - b).norm()
    } else {
        (a - b).norm() / denom
    }
}
