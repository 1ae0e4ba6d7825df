#![allow(dead_code)]

use lqgtrack::cost::predicted_gap;
use lqgtrack::estimator::{kf_predict, kf_update, FilterState, Phase};
use lqgtrack::linalg::{self, Matrix, Vector};
use lqgtrack::model::{validate_model, validate_weights, CostWeights, ReferenceSpec, SystemModel, ValidatedModel};
use lqgtrack::oracle::RandomInstance;
use lqgtrack::riccati::{backward_recursion, g_step, riccati_step};
use lqgtrack::steady::{solve_gtilde, IterationOptions, SteadySolution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn m1(x: f64) -> Matrix {
    Matrix::from_element(1, 1, x)
}

pub fn v1(x: f64) -> Vector {
    Vector::from_element(1, x)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..=scale))
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-scale..=scale))
}

/// `MᵀM` with `M` of the given row count, so rank-deficient when `rank < n`.
pub fn psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> Matrix {
    let m = uniform(rng, rank, n, 1.0);
    linalg::symmetrize(&(m.transpose() * m))
}

pub fn pd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    psd(rng, n, n) + Matrix::identity(n, n) * 0.1
}

/// Scalar model `x' = a x + b u + w`, `z = c x + v`.
pub fn scalar_model(a: f64, b: f64, c: f64, w: f64, v: f64, x0_cov: f64) -> ValidatedModel {
    validate_model(SystemModel {
        a: m1(a),
        b: m1(b),
        c: m1(c),
        w: m1(w),
        v: m1(v),
        x0_mean: v1(0.0),
        x0_cov: m1(x0_cov),
    })
    .unwrap()
}

/// `(asymmetry, min eigenvalue of the symmetric part)`.
pub fn psd_violation(m: &Matrix) -> (f64, f64) {
    (linalg::asymmetry(m), linalg::min_eigenvalue(&linalg::symmetrize(m)))
}

#[derive(Debug, Default, Clone)]
pub struct InvariantReport {
    pub steps: usize,
    pub min_eigenvalue: f64,
    pub max_asymmetry: f64,
    pub non_finite: usize,
    pub affinity_error: f64,
    pub linearity_error: f64,
    pub decomposition_error: f64,
    pub gap_linearity_error: f64,
    pub scaling_error: f64,
    pub instances: usize,
}

impl InvariantReport {
    pub fn holds(&self) -> bool {
        self.min_eigenvalue >= -1e-10
            && self.max_asymmetry <= 1e-10
            && self.non_finite == 0
            && self.affinity_error <= 1e-10
            && self.linearity_error <= 1e-10
            && self.decomposition_error <= 1e-10
            && self.gap_linearity_error == 0.0
            && self.scaling_error <= 1e-10
    }
}

fn track(report: &mut InvariantReport, m: &Matrix) {
    let (asym, min_eig) = psd_violation(m);
    report.max_asymmetry = report.max_asymmetry.max(asym);
    report.min_eigenvalue = report.min_eigenvalue.min(min_eig);
    if !linalg::is_finite(m) {
        report.non_finite += 1;
    }
}

fn diff(a: &Vector, b: &Vector) -> f64 {
    linalg::max_abs_diff_vec(a, b)
}

/// Chains of random Riccati, feedforward and filter steps, `steps` of each,
/// carrying `K` and `Σ` forward through up to 10 stages per chain.
pub fn random_step_chains(seed: u64, steps: usize, report: &mut InvariantReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    report.min_eigenvalue = report.min_eigenvalue.min(0.0);
    while done < steps {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=2);
        let s = rng.random_range(1..=3);
        let a = uniform(&mut rng, n, n, 1.0);
        let rho = linalg::spectral_radius(&a);
        let a = if rho > 1.2 { a * (1.2 / rho) } else { a };
        let b = uniform(&mut rng, n, m, 1.0);
        let c = uniform(&mut rng, s, n, 1.0);
        let q_rank = rng.random_range(1..=n);
        let q = psd(&mut rng, n, q_rank);
        let r = pd(&mut rng, m);
        let w_rank = rng.random_range(0..=n);
        let w = psd(&mut rng, n, w_rank);
        // V ≻ 0 keeps the innovation covariance invertible, as kf_update requires.
        let v = pd(&mut rng, s);
        let mut k = psd(&mut rng, n, n);
        let mut g = uniform_vec(&mut rng, n, 1.0);
        let sigma_rank = rng.random_range(0..=n);
        let mut state = FilterState {
            x_hat: uniform_vec(&mut rng, n, 1.0),
            sigma: psd(&mut rng, n, sigma_rank),
            k: 0,
            phase: Phase::Predicted,
        };
        for _ in 0..10 {
            if done >= steps {
                break;
            }
            let xbar = uniform_vec(&mut rng, n, 1.0);
            let g_next = g_step(&g, &k, &a, &b, &q, &r, &xbar).expect("R is positive definite");
            let (k_next, p) = riccati_step(&k, &a, &b, &q, &r).expect("R is positive definite");
            track(report, &k_next);
            track(report, &p);
            if !g_next.iter().all(|x| x.is_finite()) {
                report.non_finite += 1;
            }
            let z = uniform_vec(&mut rng, s, 1.0);
            let updated = kf_update(&state, &c, &v, &z).expect("filter update");
            track(report, &updated.sigma);
            let u = uniform_vec(&mut rng, m, 1.0);
            state = kf_predict(&updated, &a, &b, &w, &u).expect("filter predict");
            track(report, &state.sigma);
            k = k_next;
            g = g_next;
            done += 1;
            report.steps += 1;
        }
    }
}

/// Affinity, linearity, decomposition, gap-linearity and weight-scaling
/// witnesses over the random oracle instances `seed..seed + count`.
pub fn witnesses(seed: u64, count: usize, report: &mut InvariantReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for s in seed..seed + count as u64 {
        let inst = RandomInstance::generate(s);
        let (n, h) = (inst.model.n(), inst.horizon);
        let (a, b) = (&inst.model.a, &inst.model.b);
        report.instances += 1;

        let sol = backward_recursion(&inst.model, &inst.weights, &inst.reference, h).unwrap();
        let xa = uniform_vec(&mut rng, n, 2.0);
        let xb = uniform_vec(&mut rng, n, 2.0);
        let zero = Vector::zeros(n);
        for k in 0..h {
            let u = |x: &Vector| sol.control(k, x).unwrap();
            let witness = u(&(&xa + &xb)) - u(&xa) - u(&xb) + u(&zero);
            report.affinity_error = report.affinity_error.max(witness.amax());
        }

        let alpha: f64 = rng.random_range(0.01..100.0);
        let scaled = backward_recursion(&inst.model, &inst.weights.scaled(alpha), &inst.reference, h).unwrap();
        for k in 0..h {
            report.scaling_error = report.scaling_error.max(linalg::max_abs_diff(&sol.l[k], &scaled.l[k]));
            report.scaling_error = report
                .scaling_error
                .max(diff(&sol.control(k, &xa).unwrap(), &scaled.control(k, &xa).unwrap()));
        }

        let target = inst.reference.limit().clone();
        let Ok(steady) = SteadySolution::solve(a, b, &inst.q, &inst.r, &target, IterationOptions::default()) else {
            continue;
        };
        let ta = uniform_vec(&mut rng, n, 2.0);
        let tb = uniform_vec(&mut rng, n, 2.0);
        let gt = |x: &Vector| solve_gtilde(a, b, &steady.k, &inst.r, &inst.q, x).unwrap();
        report.linearity_error = report.linearity_error.max(diff(&gt(&(&ta + &tb)), &(gt(&ta) + gt(&tb))));

        let ga = steady.gtilde_for(&ta);
        let witness = steady.control(&(&xa + &xb), &ga) - steady.control(&xa, &ga) - steady.control(&xb, &ga)
            + steady.control(&zero, &ga);
        report.affinity_error = report.affinity_error.max(witness.amax());

        let offset = uniform_vec(&mut rng, n, 1.0);
        let shifted = steady.control(&xa, &steady.gtilde_for(&(&target + &offset)));
        let decomposed = steady.control(&xa, &steady.gtilde) + &steady.f * &offset;
        report.decomposition_error = report.decomposition_error.max(diff(&shifted, &decomposed));

        let steady_scaled =
            SteadySolution::solve(a, b, &(&inst.q * alpha), &(&inst.r * alpha), &target, IterationOptions::default())
                .unwrap();
        report.scaling_error = report
            .scaling_error
            .max(linalg::max_abs_diff(&steady.l, &steady_scaled.l))
            .max(linalg::max_abs_diff(&steady.f, &steady_scaled.f))
            .max(diff(
                &steady.control(&xa, &steady.gtilde),
                &steady_scaled.control(&xa, &steady_scaled.gtilde),
            ));

        let cov_rank = rng.random_range(0..=n);
        let cov = psd(&mut rng, n, cov_rank);
        let base = predicted_gap(&inst.q, &inst.r, &steady.f, &cov);
        for power in -3..=3 {
            let alpha = 2f64.powi(power);
            let err = (predicted_gap(&inst.q, &inst.r, &steady.f, &(&cov * alpha)) - alpha * base).abs();
            report.gap_linearity_error = report.gap_linearity_error.max(err);
        }
    }
}

/// Zero-reference degeneracy used by several suites.
pub fn zero_reference_feedforward_max(seed: u64) -> f64 {
    let inst = RandomInstance::generate(seed);
    let n = inst.model.n();
    let weights = validate_weights(
        &CostWeights::constant(inst.q.clone(), inst.r.clone(), inst.q_terminal.clone()),
        n,
        inst.model.m(),
        inst.horizon,
    )
    .unwrap();
    let sol = backward_recursion(&inst.model, &weights, &ReferenceSpec::constant(Vector::zeros(n)), inst.horizon).unwrap();
    sol.g.iter().map(|g| g.amax()).fold(0.0, f64::max)
}
