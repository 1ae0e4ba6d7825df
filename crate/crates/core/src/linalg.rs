//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigenvalues below this (after symmetrization) reject a PSD claim.
pub const PSD_TOL: f64 = -1e-10;
/// Eigenvalues must exceed this (after symmetrization) for a PD claim.
pub const PD_TOL: f64 = 1e-12;

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Largest elementwise `|M - Mᵀ|`.
pub fn asymmetry(m: &Matrix) -> f64 {
    max_abs_diff(m, &m.transpose())
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff_vec(a: &Vector, b: &Vector) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Max-abs entry; used as the ∞-norm of residual matrices.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Minimum eigenvalue of the symmetric part of `m`. Empty matrices report `+∞`.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    let s = symmetrize(m);
    s.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Solve `S X = rhs` for a symmetric positive-definite `S` via Cholesky.
pub fn spd_solve(s: &Matrix, rhs: &Matrix) -> Option<Matrix> {
    let chol = symmetrize(s).cholesky()?;
    let x = chol.solve(rhs);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Spectral radius via the complex eigenvalues of a dense square matrix.
pub fn spectral_radius(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// 2-norm condition number from singular values.
pub fn condition_number(m: &Matrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Symmetric square root of a PSD covariance; negative eigenvalues are clipped to 0.
pub fn psd_sqrt(cov: &Matrix) -> Matrix {
    let n = cov.nrows();
    if n == 0 {
        return cov.clone();
    }
    let eig = symmetrize(cov).symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    v * Matrix::from_diagonal(&roots) * v.transpose()
}

/// Moore–Penrose inverse of a symmetric PSD matrix with a relative cutoff.
pub fn psd_pinv(s: &Matrix) -> Matrix {
    let eig = symmetrize(s).symmetric_eigen();
    let largest = eig.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max);
    let cutoff = largest * 1e-12 * s.nrows().max(1) as f64;
    let inv = eig
        .eigenvalues
        .map(|l| if l > cutoff && l > 0.0 { 1.0 / l } else { 0.0 });
    let v = &eig.eigenvectors;
    v * Matrix::from_diagonal(&inv) * v.transpose()
}

pub fn is_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn quad_form(m: &Matrix, v: &Vector) -> f64 {
    v.dot(&(m * v))
}
