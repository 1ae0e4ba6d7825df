//! Batch least-squares oracle for the noiseless, perfect-information problem.
//!
//! Stacking the controls `u = (u_0, …, u_{N-1})` gives the predicted states
//! `x = Φ x_0 + Γ u`, and the tracking cost becomes a strictly convex quadratic
//! in `u`. Its minimizer solves the normal equations
//! `(ΓᵀQ̄Γ + R̄) u = ΓᵀQ̄ (x̄ - Φ x_0)`, with no reference to the backward
//! recursion. The DP controller is checked against this.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::SolveError;
use crate::linalg::{self, Matrix, Vector};
use crate::model::{validate_model, validate_weights, CostWeights, ReferenceSpec, SystemModel, ValidatedModel, ValidatedWeights};
use crate::parallel::{map_indexed, Execution};
use crate::riccati::backward_recursion;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSolution {
    pub u_seq: Vec<Vector>,
    pub x_seq: Vec<Vector>,
    pub cost: f64,
    /// `‖(ΓᵀQ̄Γ + R̄) u - ΓᵀQ̄(x̄ - Φx_0)‖∞` at the returned `u`.
    pub gradient_norm: f64,
}

/// Tracking cost of a noiseless trajectory, terminal term included.
pub fn tracking_cost(
    weights: &ValidatedWeights,
    reference: &ReferenceSpec,
    x_seq: &[Vector],
    u_seq: &[Vector],
) -> Result<f64, SolveError> {
    let horizon = u_seq.len();
    let mut cost = 0.0;
    for k in 0..horizon {
        cost += crate::cost::stage_cost(&x_seq[k], &u_seq[k], reference.at(k)?, weights.q(k), weights.r(k));
    }
    let e = &x_seq[horizon] - reference.at(horizon)?;
    Ok(cost + linalg::quad_form(weights.q_terminal(), &e))
}

fn roll_forward(a: &Matrix, b: &Matrix, x0: &Vector, u_seq: &[Vector]) -> Vec<Vector> {
    let mut xs = Vec::with_capacity(u_seq.len() + 1);
    xs.push(x0.clone());
    for u in u_seq {
        let next = a * xs.last().unwrap() + b * u;
        xs.push(next);
    }
    xs
}

pub fn batch_solve(
    a: &Matrix,
    b: &Matrix,
    weights: &ValidatedWeights,
    reference: &ReferenceSpec,
    x0: &Vector,
    horizon: usize,
) -> Result<BatchSolution, SolveError> {
    let (n, m) = (a.nrows(), b.ncols());
    let (rows, cols) = (horizon * n, horizon * m);

    // powers[k] = A^k
    let mut powers = vec![Matrix::identity(n, n)];
    for k in 1..=horizon {
        powers.push(a * &powers[k - 1]);
    }

    let mut phi = Matrix::zeros(rows, n);
    let mut gamma = Matrix::zeros(rows, cols);
    let mut q_bar = Matrix::zeros(rows, rows);
    let mut r_bar = Matrix::zeros(cols, cols);
    let mut target = Vector::zeros(rows);
    for k in 1..=horizon {
        let row = (k - 1) * n;
        phi.view_mut((row, 0), (n, n)).copy_from(&powers[k]);
        for j in 0..k {
            gamma
                .view_mut((row, j * m), (n, m))
                .copy_from(&(&powers[k - 1 - j] * b));
        }
        let q = if k == horizon { weights.q_terminal() } else { weights.q(k) };
        q_bar.view_mut((row, row), (n, n)).copy_from(q);
        target.rows_mut(row, n).copy_from(reference.at(k)?);
    }
    for k in 0..horizon {
        r_bar.view_mut((k * m, k * m), (m, m)).copy_from(weights.r(k));
    }

    let gt_q = gamma.transpose() * &q_bar;
    let hessian = &gt_q * &gamma + &r_bar;
    let rhs = &gt_q * (target - &phi * x0);
    let u = if cols == 0 {
        Vector::zeros(0)
    } else {
        linalg::symmetrize(&hessian)
            .cholesky()
            .ok_or(SolveError::SingularNormalEquations)?
            .solve(&rhs)
    };
    let gradient_norm = (&hessian * &u - &rhs).amax();

    let u_seq: Vec<Vector> = (0..horizon).map(|k| u.rows(k * m, m).into_owned()).collect();
    let x_seq = roll_forward(a, b, x0, &u_seq);
    let cost = tracking_cost(weights, reference, &x_seq, &u_seq)?;
    Ok(BatchSolution {
        u_seq,
        x_seq,
        cost,
        gradient_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    pub max_u_deviation: f64,
    /// `|J_dp - J_batch| / J_batch` (absolute when `J_batch = 0`).
    pub cost_deviation: f64,
    pub dp_cost: f64,
    pub batch_cost: f64,
}

/// Drives the DP controller on the exact state and compares it with [`batch_solve`].
pub fn compare_dp_vs_batch(
    model: &ValidatedModel,
    weights: &ValidatedWeights,
    reference: &ReferenceSpec,
    x0: &Vector,
    horizon: usize,
) -> Result<Comparison, SolveError> {
    let sol = backward_recursion(model, weights, reference, horizon)?;
    let mut x = x0.clone();
    let mut u_dp = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let u = sol.control(k, &x)?;
        x = &model.a * &x + &model.b * &u;
        u_dp.push(u);
    }
    let x_dp = roll_forward(&model.a, &model.b, x0, &u_dp);
    let dp_cost = tracking_cost(weights, reference, &x_dp, &u_dp)?;

    let batch = batch_solve(&model.a, &model.b, weights, reference, x0, horizon)?;
    let max_u_deviation = u_dp
        .iter()
        .zip(&batch.u_seq)
        .map(|(a, b)| linalg::max_abs_diff_vec(a, b))
        .fold(0.0, f64::max);
    let diff = (dp_cost - batch.cost).abs();
    let cost_deviation = if batch.cost > 0.0 { diff / batch.cost } else { diff };
    Ok(Comparison {
        max_u_deviation,
        cost_deviation,
        dp_cost,
        batch_cost: batch.cost,
    })
}

/// A seeded random noiseless tracking problem.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub seed: u64,
    pub model: ValidatedModel,
    pub weights: ValidatedWeights,
    pub q: Matrix,
    pub r: Matrix,
    pub q_terminal: Matrix,
    pub reference: ReferenceSpec,
    pub x0: Vector,
    pub horizon: usize,
}

/// Largest open-loop spectral radius the generator allows.
pub const MAX_OPEN_LOOP_RADIUS: f64 = 1.2;

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

fn random_pd(rng: &mut ChaCha8Rng, dim: usize) -> Matrix {
    let m = uniform_matrix(rng, dim, dim);
    m.transpose() * m + Matrix::identity(dim, dim) * 0.1
}

impl RandomInstance {
    /// `n ≤ 4`, `m ≤ 2`, `N ≤ 20`; entries uniform on `[-1, 1]`, `A` rescaled so
    /// `ρ(A) ≤ 1.2`, weights `MᵀM + 0.1 I`. Noise-free with `C = I`.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=2);
        let horizon = rng.random_range(1..=20);
        let mut a = uniform_matrix(&mut rng, n, n);
        let rho = linalg::spectral_radius(&a);
        if rho > MAX_OPEN_LOOP_RADIUS {
            a *= MAX_OPEN_LOOP_RADIUS / rho;
        }
        let b = uniform_matrix(&mut rng, n, m);
        let q = random_pd(&mut rng, n);
        let r = random_pd(&mut rng, m);
        let q_terminal = random_pd(&mut rng, n);
        let xbar: Vec<Vector> = (0..=horizon)
            .map(|_| Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0)))
            .collect();
        let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let model = validate_model(SystemModel {
            a,
            b,
            c: Matrix::identity(n, n),
            w: Matrix::zeros(n, n),
            v: Matrix::zeros(n, n),
            x0_mean: x0.clone(),
            x0_cov: Matrix::zeros(n, n),
        })
        .expect("generated model is consistent");
        let weights = validate_weights(&CostWeights::constant(q.clone(), r.clone(), q_terminal.clone()), n, m, horizon)
            .expect("generated weights are positive definite");
        Self {
            seed,
            model,
            weights,
            q,
            r,
            q_terminal,
            reference: ReferenceSpec::trajectory(xbar),
            x0,
            horizon,
        }
    }

    /// Same plant and weights broadcast to another horizon.
    pub fn weights_for(&self, horizon: usize) -> ValidatedWeights {
        validate_weights(
            &CostWeights::constant(self.q.clone(), self.r.clone(), self.q_terminal.clone()),
            self.model.n(),
            self.model.m(),
            horizon,
        )
        .expect("generated weights are positive definite")
    }

    pub fn compare(&self) -> Result<Comparison, SolveError> {
        compare_dp_vs_batch(&self.model, &self.weights, &self.reference, &self.x0, self.horizon)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub index: usize,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    #[serde(flatten)]
    pub comparison: Comparison,
}

/// Instance `i` uses seed `master_seed + i`; results are ordered by `i`.
pub fn sweep(n_instances: usize, master_seed: u64, exec: Execution) -> Result<Vec<SweepEntry>, SolveError> {
    map_indexed(n_instances, exec, |i| {
        let inst = RandomInstance::generate(master_seed.wrapping_add(i as u64));
        inst.compare().map(|comparison| SweepEntry {
            index: i,
            seed: inst.seed,
            n: inst.model.n(),
            m: inst.model.m(),
            horizon: inst.horizon,
            comparison,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }
    fn v1(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn scalar(b: f64, horizon: usize) -> (ValidatedModel, ValidatedWeights) {
        let model = validate_model(SystemModel {
            a: m1(1.0),
            b: m1(b),
            c: m1(1.0),
            w: m1(0.0),
            v: m1(0.0),
            x0_mean: v1(1.0),
            x0_cov: m1(0.0),
        })
        .unwrap();
        let w = validate_weights(&CostWeights::constant(m1(1.0), m1(1.0), m1(1.0)), 1, 1, horizon).unwrap();
        (model, w)
    }

    #[test]
    fn one_step_scalar() {
        let (model, w) = scalar(1.0, 1);
        let r = ReferenceSpec::constant(v1(0.0));
        let sol = batch_solve(&model.a, &model.b, &w, &r, &v1(1.0), 1).unwrap();
        assert!((sol.u_seq[0][0] + 0.5).abs() < 1e-15);
        assert!((sol.cost - 1.5).abs() < 1e-15);
        let cmp = compare_dp_vs_batch(&model, &w, &r, &v1(1.0), 1).unwrap();
        assert!(cmp.max_u_deviation <= 1e-12 && cmp.cost_deviation <= 1e-12);
    }

    #[test]
    fn equilibrium_needs_no_control() {
        let (model, w) = scalar(1.0, 6);
        let r = ReferenceSpec::constant(v1(2.0));
        let sol = batch_solve(&model.a, &model.b, &w, &r, &v1(2.0), 6).unwrap();
        assert!(sol.u_seq.iter().all(|u| u[0] == 0.0));
        assert_eq!(sol.cost, 0.0);
    }

    #[test]
    fn no_actuation() {
        let (model, w) = scalar(0.0, 1);
        let r = ReferenceSpec::constant(v1(0.0));
        let sol = batch_solve(&model.a, &model.b, &w, &r, &v1(1.0), 1).unwrap();
        assert_eq!(sol.u_seq[0][0], 0.0);
        assert_eq!(sol.cost, 2.0);
    }

    #[test]
    fn zero_problem_exact() {
        let (model, w) = scalar(1.0, 5);
        let r = ReferenceSpec::constant(v1(0.0));
        let cmp = compare_dp_vs_batch(&model, &w, &r, &v1(0.0), 5).unwrap();
        assert_eq!(cmp.max_u_deviation, 0.0);
        assert_eq!(cmp.cost_deviation, 0.0);
    }

    #[test]
    fn generator_respects_bounds() {
        for seed in 0..50 {
            let inst = RandomInstance::generate(seed);
            assert!(inst.model.n() <= 4 && inst.model.m() <= 2 && inst.horizon <= 20);
            assert!(linalg::spectral_radius(&inst.model.a) <= MAX_OPEN_LOOP_RADIUS + 1e-12);
        }
    }
}
