//! Infinite-horizon (time-invariant) tracking controller.
//!
//! `K` solves the algebraic Riccati equation, `g̃` is the fixed point of the
//! feedforward recursion for a constant target `x̃`, and `F` maps a constant
//! reference offset `w̄` onto the change it induces in the optimal control:
//! `ũ(x̂; x̄ + w̄) = u(x̂; x̄) + F w̄`.

use serde::Serialize;

use crate::error::SolveError;
use crate::linalg::{self, Matrix, Vector};
use crate::riccati::riccati_step;

/// Stopping rule shared by the Riccati and filter fixed-point iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200_000,
        }
    }
}

/// Residual bound every returned ARE solution and `g̃` must meet.
pub const RESIDUAL_TOL: f64 = 1e-8;

fn inner_factor(k: &Matrix, b: &Matrix, r: &Matrix) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, SolveError> {
    let s = r + b.transpose() * k * b;
    linalg::symmetrize(&s)
        .cholesky()
        .ok_or(SolveError::SingularInnerMatrix { stage: None })
}

/// `‖K - (AᵀKA - AᵀKB(BᵀKB+R)⁻¹BᵀKA + Q)‖∞`.
pub fn are_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, k: &Matrix) -> Result<f64, SolveError> {
    let (next, _) = riccati_step(k, a, b, q, r)?;
    Ok(linalg::max_abs_diff(k, &next))
}

/// Value iteration `K ← AᵀKA - AᵀKB(BᵀKB+R)⁻¹BᵀKA + Q` from `K = Q`.
///
/// Stops once successive iterates agree to `tol` (relative to `max(1, ‖K‖∞)`),
/// then checks that the resulting feedback stabilizes `A - BL`.
pub fn solve_are(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    opts: IterationOptions,
) -> Result<(Matrix, usize), SolveError> {
    let mut k = linalg::symmetrize(q);
    let mut delta = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let (next, _) = riccati_step(&k, a, b, q, r)?;
        if !linalg::is_finite(&next) {
            return Err(SolveError::Convergence {
                iterations: iter,
                last_delta: f64::INFINITY,
            });
        }
        delta = linalg::max_abs_diff(&next, &k);
        let scale = linalg::max_abs(&next).max(1.0);
        k = next;
        if delta <= opts.tol * scale {
            let residual = are_residual(a, b, q, r, &k)?;
            if residual > RESIDUAL_TOL * scale {
                return Err(SolveError::Convergence {
                    iterations: iter,
                    last_delta: residual,
                });
            }
            let (_, rho) = steady_gain(a, b, &k, r)?;
            if rho >= 1.0 {
                return Err(SolveError::UnstableClosedLoop { spectral_radius: rho });
            }
            return Ok((k, iter));
        }
    }
    Err(SolveError::Convergence {
        iterations: opts.max_iter,
        last_delta: delta,
    })
}

/// `L = (R + BᵀKB)⁻¹ BᵀKA` and the spectral radius of `A - BL`.
pub fn steady_gain(a: &Matrix, b: &Matrix, k: &Matrix, r: &Matrix) -> Result<(Matrix, f64), SolveError> {
    let chol = inner_factor(k, b, r)?;
    let l = chol.solve(&(b.transpose() * k * a));
    let rho = linalg::spectral_radius(&(a - b * &l));
    Ok((l, rho))
}

/// `M = I - Aᵀ(I - KB(R+BᵀKB)⁻¹Bᵀ)` together with `(R+BᵀKB)⁻¹Bᵀ`.
fn feedforward_system(a: &Matrix, b: &Matrix, k: &Matrix, r: &Matrix) -> Result<(Matrix, Matrix), SolveError> {
    let n = a.nrows();
    let chol = inner_factor(k, b, r)?;
    let sinv_bt = chol.solve(&b.transpose());
    let i = Matrix::identity(n, n);
    let m = &i - a.transpose() * (&i - k * b * &sinv_bt);
    Ok((m, sinv_bt))
}

const MAX_CONDITION: f64 = 1e12;

fn solve_feedforward_system(m: &Matrix, rhs: &Matrix) -> Result<Matrix, SolveError> {
    let condition = linalg::condition_number(m);
    if !(condition.is_finite() && condition <= MAX_CONDITION) {
        return Err(SolveError::SingularSystem { condition });
    }
    m.clone()
        .lu()
        .solve(rhs)
        .filter(linalg::is_finite)
        .ok_or(SolveError::SingularSystem { condition })
}

/// Residual of the `g̃` fixed-point equation.
pub fn gtilde_residual(a: &Matrix, b: &Matrix, k: &Matrix, r: &Matrix, q: &Matrix, x_target: &Vector, g: &Vector) -> Result<f64, SolveError> {
    let (m, _) = feedforward_system(a, b, k, r)?;
    // g - (I - M) g + Q x̃ = M g + Q x̃
    let res = &m * g + q * x_target;
    Ok(res.iter().map(|x| x.abs()).fold(0.0, f64::max))
}

/// Closed-form `g̃ = -M⁻¹ Q x̃`, checked by substitution.
pub fn solve_gtilde(
    a: &Matrix,
    b: &Matrix,
    k: &Matrix,
    r: &Matrix,
    q: &Matrix,
    x_target: &Vector,
) -> Result<Vector, SolveError> {
    let (m, _) = feedforward_system(a, b, k, r)?;
    let rhs = Matrix::from_column_slice(x_target.len(), 1, (q * x_target).as_slice());
    let sol = solve_feedforward_system(&m, &rhs)?;
    let g = -Vector::from_column_slice(sol.as_slice());
    let res = gtilde_residual(a, b, k, r, q, x_target, &g)?;
    let scale = g.amax().max(1.0);
    if res > RESIDUAL_TOL * scale {
        return Err(SolveError::SingularSystem {
            condition: linalg::condition_number(&m),
        });
    }
    Ok(g)
}

/// `F = (R+BᵀKB)⁻¹ Bᵀ M⁻¹ Q`.
pub fn correction_gain_f(a: &Matrix, b: &Matrix, k: &Matrix, r: &Matrix, q: &Matrix) -> Result<Matrix, SolveError> {
    let (m, sinv_bt) = feedforward_system(a, b, k, r)?;
    let m_inv_q = solve_feedforward_system(&m, q)?;
    Ok(sinv_bt * m_inv_q)
}

/// `ũ = -(R+BᵀKB)⁻¹ Bᵀ (K A x̂ + g̃)`.
pub fn steady_control(
    k: &Matrix,
    gtilde: &Vector,
    r: &Matrix,
    b: &Matrix,
    a: &Matrix,
    x_hat: &Vector,
) -> Result<Vector, SolveError> {
    let chol = inner_factor(k, b, r)?;
    Ok(-chol.solve(&(b.transpose() * (k * a * x_hat + gtilde))))
}

/// Everything the time-invariant controller needs, for one nominal target.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    pub k: Matrix,
    pub l: Matrix,
    pub gtilde: Vector,
    pub f: Matrix,
    pub closed_loop_spectral_radius: f64,
    pub iterations_used: usize,
    pub are_residual: f64,
    /// `(R+BᵀKB)⁻¹Bᵀ`
    sinv_bt: Matrix,
    /// `M⁻¹Q`, so that `g̃(x̃) = -M⁻¹Q x̃`.
    m_inv_q: Matrix,
}

impl SteadySolution {
    pub fn solve(
        a: &Matrix,
        b: &Matrix,
        q: &Matrix,
        r: &Matrix,
        x_target: &Vector,
        opts: IterationOptions,
    ) -> Result<Self, SolveError> {
        let (k, iterations_used) = solve_are(a, b, q, r, opts)?;
        let are_residual = are_residual(a, b, q, r, &k)?;
        let (l, rho) = steady_gain(a, b, &k, r)?;
        let gtilde = solve_gtilde(a, b, &k, r, q, x_target)?;
        let (m, sinv_bt) = feedforward_system(a, b, &k, r)?;
        let m_inv_q = solve_feedforward_system(&m, q)?;
        let f = &sinv_bt * &m_inv_q;
        Ok(Self {
            k,
            l,
            gtilde,
            f,
            closed_loop_spectral_radius: rho,
            iterations_used,
            are_residual,
            sinv_bt,
            m_inv_q,
        })
    }

    /// `g̃` for another constant target.
    pub fn gtilde_for(&self, x_target: &Vector) -> Vector {
        -(&self.m_inv_q * x_target)
    }

    /// Constant part of the control law, `(R+BᵀKB)⁻¹Bᵀ g̃`.
    pub fn feedforward(&self, gtilde: &Vector) -> Vector {
        &self.sinv_bt * gtilde
    }

    /// `ũ = -L x̂ - (R+BᵀKB)⁻¹Bᵀ g̃`.
    pub fn control(&self, x_hat: &Vector, gtilde: &Vector) -> Vector {
        -(&self.l * x_hat) - self.feedforward(gtilde)
    }

    pub fn summary(&self) -> SteadySummary {
        use crate::model::matrix_to_rows;
        SteadySummary {
            k: matrix_to_rows(&self.k),
            l: matrix_to_rows(&self.l),
            gtilde: self.gtilde.iter().copied().collect(),
            f: matrix_to_rows(&self.f),
            spectral_radius: self.closed_loop_spectral_radius,
            are_residual: self.are_residual,
            iterations: self.iterations_used,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadySummary {
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    pub gtilde: Vec<f64>,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    pub spectral_radius: f64,
    pub are_residual: f64,
    pub iterations: usize,
}
