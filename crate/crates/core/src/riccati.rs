//! Finite-horizon backward recursions for the tracking controller.
//!
//! Starting from `K_N = Q_N` and `g_N = -Q_N x̄_N` the recursion runs
//!
//! ```text
//! S_k = R_k + Bᵀ K_{k+1} B
//! P_k = Aᵀ K_{k+1} B S_k⁻¹ Bᵀ K_{k+1} A
//! K_k = Aᵀ K_{k+1} A - P_k + Q_k
//! g_k = Aᵀ [I - K_{k+1} B S_k⁻¹ Bᵀ] g_{k+1} - Q_k x̄_k
//! ```
//!
//! and the control applied to the conditional mean `x̂_k` is
//! `u_k = -S_k⁻¹ Bᵀ (K_{k+1} A x̂_k + g_{k+1}) = -L_k x̂_k - h_k`.

use crate::error::SolveError;
use crate::linalg::{self, Matrix, Vector};
use crate::model::{ReferenceSpec, ValidatedModel, ValidatedWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    /// `K_0 … K_N`; entry `k` belongs to stage `k`.
    pub k: Vec<Matrix>,
    /// `P_0 … P_{N-1}`.
    pub p: Vec<Matrix>,
    /// `g_0 … g_N`.
    pub g: Vec<Vector>,
    /// Feedback gains `L_k = S_k⁻¹ Bᵀ K_{k+1} A`.
    pub l: Vec<Matrix>,
    /// Feedforward offsets `h_k = S_k⁻¹ Bᵀ g_{k+1}`.
    pub ff: Vec<Vector>,
    pub horizon: usize,
}

struct Inner {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Inner {
    /// Factor `S = R + Bᵀ K B`.
    fn new(k_next: &Matrix, b: &Matrix, r: &Matrix) -> Option<Self> {
        let s = r + b.transpose() * k_next * b;
        let chol = linalg::symmetrize(&s).cholesky()?;
        Some(Self { chol })
    }

    fn solve(&self, rhs: &Matrix) -> Matrix {
        self.chol.solve(rhs)
    }

    fn solve_vec(&self, rhs: &Vector) -> Vector {
        self.chol.solve(rhs)
    }
}

fn covariance_step(inner: &Inner, k_next: &Matrix, a: &Matrix, b: &Matrix, q: &Matrix) -> (Matrix, Matrix, Matrix) {
    let bt_k = b.transpose() * k_next;
    let gain = inner.solve(&(&bt_k * a));
    let p = linalg::symmetrize(&(a.transpose() * bt_k.transpose() * &gain));
    let k = a.transpose() * k_next * a - &p + q;
    (linalg::symmetrize(&k), p, gain)
}

fn feedforward_step(
    inner: &Inner,
    g_next: &Vector,
    k_next: &Matrix,
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    xbar: &Vector,
) -> (Vector, Vector) {
    let h = inner.solve_vec(&(b.transpose() * g_next));
    let g = a.transpose() * (g_next - k_next * b * &h) - q * xbar;
    (g, h)
}

/// One backward Riccati step: `(K_k, P_k)` from `K_{k+1}`.
pub fn riccati_step(
    k_next: &Matrix,
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
) -> Result<(Matrix, Matrix), SolveError> {
    let inner = Inner::new(k_next, b, r).ok_or(SolveError::SingularInnerMatrix { stage: None })?;
    let (k, p, _) = covariance_step(&inner, k_next, a, b, q);
    Ok((k, p))
}

/// One backward feedforward step: `g_k` from `g_{k+1}` and `K_{k+1}`.
#[allow(clippy::too_many_arguments)]
pub fn g_step(
    g_next: &Vector,
    k_next: &Matrix,
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    xbar: &Vector,
) -> Result<Vector, SolveError> {
    let inner = Inner::new(k_next, b, r).ok_or(SolveError::SingularInnerMatrix { stage: None })?;
    Ok(feedforward_step(&inner, g_next, k_next, a, b, q, xbar).0)
}

/// Runs the recursion from the terminal conditions down to stage 0.
pub fn backward_recursion(
    model: &ValidatedModel,
    weights: &ValidatedWeights,
    reference: &ReferenceSpec,
    horizon: usize,
) -> Result<RiccatiSolution, SolveError> {
    if weights.horizon() < horizon {
        return Err(crate::error::ValidationError::WrongLength {
            field: "weights".into(),
            expected: horizon,
            found: weights.horizon(),
        }
        .into());
    }
    let (a, b) = (&model.a, &model.b);
    let q_n = weights.q_terminal();
    let xbar_n = reference.at(horizon)?;

    let mut k_seq = vec![q_n.clone()];
    let mut g_seq = vec![-(q_n * xbar_n)];
    let mut p_seq = Vec::with_capacity(horizon);
    let mut l_seq = Vec::with_capacity(horizon);
    let mut ff_seq = Vec::with_capacity(horizon);

    for stage in (0..horizon).rev() {
        let k_next = k_seq.last().unwrap();
        let g_next = g_seq.last().unwrap();
        let (q, r) = (weights.q(stage), weights.r(stage));
        let inner = Inner::new(k_next, b, r).ok_or(SolveError::SingularInnerMatrix {
            stage: Some(stage),
        })?;
        let (k, p, l) = covariance_step(&inner, k_next, a, b, q);
        let (g, h) = feedforward_step(&inner, g_next, k_next, a, b, q, reference.at(stage)?);
        k_seq.push(k);
        g_seq.push(g);
        p_seq.push(p);
        l_seq.push(l);
        ff_seq.push(h);
    }
    k_seq.reverse();
    g_seq.reverse();
    p_seq.reverse();
    l_seq.reverse();
    ff_seq.reverse();
    Ok(RiccatiSolution {
        k: k_seq,
        p: p_seq,
        g: g_seq,
        l: l_seq,
        ff: ff_seq,
        horizon,
    })
}

impl RiccatiSolution {
    /// `u*_k` for the conditional mean `x_hat`.
    pub fn control(&self, k: usize, x_hat: &Vector) -> Result<Vector, SolveError> {
        if k >= self.horizon {
            return Err(SolveError::IndexOutOfRange {
                index: k,
                horizon: self.horizon,
            });
        }
        Ok(-(&self.l[k] * x_hat) - &self.ff[k])
    }

    /// Recomputes only the feedforward sequence for a different reference; the
    /// `K_k` (and so `L_k`) do not depend on it.
    pub fn retarget(
        &self,
        model: &ValidatedModel,
        weights: &ValidatedWeights,
        reference: &ReferenceSpec,
    ) -> Result<Self, SolveError> {
        let (a, b) = (&model.a, &model.b);
        let n = self.horizon;
        let mut g = vec![Vector::zeros(0); n + 1];
        let mut ff = vec![Vector::zeros(0); n];
        g[n] = -(weights.q_terminal() * reference.at(n)?);
        for stage in (0..n).rev() {
            let inner = Inner::new(&self.k[stage + 1], b, weights.r(stage))
                .ok_or(SolveError::SingularInnerMatrix { stage: Some(stage) })?;
            let (gk, h) = feedforward_step(
                &inner,
                &g[stage + 1],
                &self.k[stage + 1],
                a,
                b,
                weights.q(stage),
                reference.at(stage)?,
            );
            g[stage] = gk;
            ff[stage] = h;
        }
        Ok(Self {
            g,
            ff,
            ..self.clone()
        })
    }
}

/// `u*_k = -(R_k + BᵀK_{k+1}B)⁻¹ Bᵀ (K_{k+1} A x̂_k + g_{k+1})`.
pub fn control_finite(sol: &RiccatiSolution, k: usize, x_hat: &Vector) -> Result<Vector, SolveError> {
    sol.control(k, x_hat)
}
