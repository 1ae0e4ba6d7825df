//! Kalman filter providing the conditional mean `E{x_k | I_k}` used by the
//! controllers. Covariance updates use the Joseph form.

use crate::error::SolveError;
use crate::linalg::{self, Matrix, Vector};
use crate::model::ValidatedModel;
use crate::steady::IterationOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Prior for stage `k`, waiting for `z_k`.
    Predicted,
    /// Posterior for stage `k`, waiting for `u_k`.
    Updated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_hat: Vector,
    pub sigma: Matrix,
    pub k: usize,
    pub phase: Phase,
}

pub fn filter_init(model: &ValidatedModel) -> FilterState {
    FilterState {
        x_hat: model.x0_mean.clone(),
        sigma: model.x0_cov.clone(),
        k: 0,
        phase: Phase::Predicted,
    }
}

/// `Σ Cᵀ (C Σ Cᵀ + V)⁻¹`, falling back to the pseudo-inverse when the innovation
/// covariance is singular (e.g. exact prior with noiseless measurements).
pub fn kalman_gain(sigma: &Matrix, c: &Matrix, v: &Matrix) -> Result<Matrix, SolveError> {
    let s = c * sigma * c.transpose() + v;
    if !linalg::is_finite(&s) {
        return Err(SolveError::SingularInnovation);
    }
    let c_sigma = c * sigma;
    let gain_t = match linalg::symmetrize(&s).cholesky() {
        Some(chol) => chol.solve(&c_sigma),
        None => linalg::psd_pinv(&s) * c_sigma,
    };
    let gain = gain_t.transpose();
    if linalg::is_finite(&gain) {
        Ok(gain)
    } else {
        Err(SolveError::SingularInnovation)
    }
}

fn expect_phase(state: &FilterState, phase: Phase) -> Result<(), SolveError> {
    if state.phase == phase {
        Ok(())
    } else {
        Err(SolveError::Validation(crate::error::ValidationError::Invalid(
            format!("filter is in phase {:?}, expected {:?}", state.phase, phase),
        )))
    }
}

/// Measurement update with an explicit gain (optimal or fixed).
pub fn kf_update_with_gain(
    state: &FilterState,
    c: &Matrix,
    v: &Matrix,
    z: &Vector,
    gain: &Matrix,
) -> Result<FilterState, SolveError> {
    expect_phase(state, Phase::Predicted)?;
    let n = state.x_hat.len();
    let innovation = z - c * &state.x_hat;
    let x_hat = &state.x_hat + gain * innovation;
    let i_gc = Matrix::identity(n, n) - gain * c;
    let sigma = &i_gc * &state.sigma * i_gc.transpose() + gain * v * gain.transpose();
    Ok(FilterState {
        x_hat,
        sigma: linalg::symmetrize(&sigma),
        k: state.k,
        phase: Phase::Updated,
    })
}

/// Minimum-variance measurement update for `z_k = C x_k + v_k`.
pub fn kf_update(state: &FilterState, c: &Matrix, v: &Matrix, z: &Vector) -> Result<FilterState, SolveError> {
    expect_phase(state, Phase::Predicted)?;
    let gain = kalman_gain(&state.sigma, c, v)?;
    kf_update_with_gain(state, c, v, z, &gain)
}

/// Time update through `x' = A x + B u + w`.
pub fn kf_predict(
    state: &FilterState,
    a: &Matrix,
    b: &Matrix,
    w: &Matrix,
    u: &Vector,
) -> Result<FilterState, SolveError> {
    expect_phase(state, Phase::Updated)?;
    let x_hat = a * &state.x_hat + b * u;
    let sigma = a * &state.sigma * a.transpose() + w;
    Ok(FilterState {
        x_hat,
        sigma: linalg::symmetrize(&sigma),
        k: state.k + 1,
        phase: Phase::Predicted,
    })
}

/// Fixed point of the predict/update covariance cycle.
///
/// Returns the post-update covariance and the corresponding stationary gain.
pub fn steady_filter_covariance(
    model: &ValidatedModel,
    opts: IterationOptions,
) -> Result<(Matrix, Matrix), SolveError> {
    let (a, c, w, v) = (&model.a, &model.c, &model.w, &model.v);
    let n = model.n();
    let mut predicted = model.x0_cov.clone();
    let mut updated: Option<Matrix> = None;
    let mut delta = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let gain = kalman_gain(&predicted, c, v)?;
        let i_gc = Matrix::identity(n, n) - &gain * c;
        let post = linalg::symmetrize(
            &(&i_gc * &predicted * i_gc.transpose() + &gain * v * gain.transpose()),
        );
        if !linalg::is_finite(&post) {
            return Err(SolveError::Convergence {
                iterations: iter,
                last_delta: f64::INFINITY,
            });
        }
        if let Some(prev) = &updated {
            delta = linalg::max_abs_diff(prev, &post);
            if delta <= opts.tol * linalg::max_abs(&post).max(1.0) {
                return Ok((post, gain));
            }
        }
        predicted = linalg::symmetrize(&(a * &post * a.transpose() + w));
        updated = Some(post);
    }
    Err(SolveError::Convergence {
        iterations: opts.max_iter,
        last_delta: delta,
    })
}
