mod common;

use common::*;
use lqgtrack::cost::{cross_terms, predicted_gap, run_gap, stage_cost};
use lqgtrack::estimator::{filter_init, kf_update};
use lqgtrack::linalg::{self, Matrix, Vector};
use lqgtrack::model::{validate_model, validate_weights, CostWeights, ReferenceSpec, SystemModel};
use lqgtrack::oracle::{batch_solve, tracking_cost, RandomInstance};
use lqgtrack::parallel::Execution;
use lqgtrack::riccati::{backward_recursion, riccati_step};
use lqgtrack::simulate::{rollout, run_batch, run_batch_sequential, ControllerKind, ReferenceKind, ScenarioConfig};
use lqgtrack::steady::{IterationOptions, SteadySolution};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn golden_cfg(offset: f64, horizon: usize, rollouts: usize) -> ScenarioConfig {
    let model = scalar_model(1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
    let weights = validate_weights(&CostWeights::constant(m1(1.0), m1(1.0), m1(1.0)), 1, 1, horizon).unwrap();
    ScenarioConfig {
        model,
        weights,
        reference: ReferenceSpec::constant(v1(1.0)).with_offset_cov(m1(offset)),
        horizon,
        controller: ControllerKind::Steady,
        reference_kind: ReferenceKind::StochasticOffset,
        base_seed: 3,
        n_rollouts: rollouts,
        filter_burn_in: 50,
    }
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    uniform(rng, n, n, 1.0).qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn validation_is_idempotent(seed in any::<u64>(), n in 1usize..4, s in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = SystemModel {
            a: uniform(&mut rng, n, n, 1.0),
            b: uniform(&mut rng, n, 1, 1.0),
            c: uniform(&mut rng, s, n, 1.0),
            w: psd(&mut rng, n, n),
            v: pd(&mut rng, s),
            x0_mean: uniform_vec(&mut rng, n, 1.0),
            x0_cov: psd(&mut rng, n, 1),
        };
        let once = validate_model(model).unwrap();
        let twice = validate_model(once.clone().into_inner()).unwrap();
        prop_assert_eq!(once.into_inner(), twice.into_inner());
    }

    #[test]
    fn riccati_step_is_symmetric_psd_and_consistent(seed in any::<u64>(), n in 1usize..5, m in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = uniform(&mut rng, n, n, 1.5);
        let b = uniform(&mut rng, n, m, 1.0);
        let q_rank = rng.random_range(1..=n);
        let q = psd(&mut rng, n, q_rank);
        let r = pd(&mut rng, m);
        let k_next = psd(&mut rng, n, n);
        let (k, p) = riccati_step(&k_next, &a, &b, &q, &r).unwrap();
        prop_assert!(linalg::asymmetry(&k) <= 1e-12);
        prop_assert!(linalg::min_eigenvalue(&k) >= -1e-10);
        prop_assert!(linalg::min_eigenvalue(&p) >= -1e-10);
        let residual = linalg::max_abs_diff(&k, &(a.transpose() * &k_next * &a - &p + &q));
        prop_assert!(residual <= 1e-12 * linalg::max_abs(&k).max(1.0));
    }

    #[test]
    fn weight_scaling_leaves_gains_and_controls(seed in 0u64..10_000, alpha in 1e-3f64..1e3) {
        let inst = RandomInstance::generate(seed);
        let h = inst.horizon;
        let base = backward_recursion(&inst.model, &inst.weights, &inst.reference, h).unwrap();
        let scaled = backward_recursion(&inst.model, &inst.weights.scaled(alpha), &inst.reference, h).unwrap();
        let x = Vector::from_element(inst.model.n(), 0.7);
        for k in 0..h {
            prop_assert!(linalg::max_abs_diff(&base.l[k], &scaled.l[k]) <= 1e-10);
            let (u0, u1) = (base.control(k, &x).unwrap(), scaled.control(k, &x).unwrap());
            prop_assert!(linalg::max_abs_diff_vec(&u0, &u1) <= 1e-10);
            prop_assert!(linalg::max_abs_diff(&(&base.k[k] * alpha), &scaled.k[k]) <= 1e-9 * linalg::max_abs(&scaled.k[k]).max(1.0));
        }
    }

    #[test]
    fn zero_reference_has_zero_feedforward(seed in 0u64..10_000) {
        prop_assert_eq!(zero_reference_feedforward_max(seed), 0.0);
    }

    #[test]
    fn predicted_gap_is_basis_invariant(seed in any::<u64>(), n in 1usize..5, m in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = pd(&mut rng, n);
        let r = pd(&mut rng, m);
        let f = uniform(&mut rng, m, n, 1.0);
        let cov = psd(&mut rng, n, n);
        let u = random_orthogonal(&mut rng, n);
        let base = predicted_gap(&q, &r, &f, &cov);
        let rotated = predicted_gap(&(u.transpose() * &q * &u), &r, &(&f * &u), &(u.transpose() * &cov * &u));
        prop_assert!((base - rotated).abs() <= 1e-10 * base.max(1.0));
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn predicted_gap_is_exactly_linear(seed in any::<u64>(), n in 1usize..5, power in -20i32..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = pd(&mut rng, n);
        let r = pd(&mut rng, 1);
        let f = uniform(&mut rng, 1, n, 1.0);
        let cov = psd(&mut rng, n, n);
        let alpha = 2f64.powi(power);
        prop_assert_eq!(predicted_gap(&q, &r, &f, &(&cov * alpha)), alpha * predicted_gap(&q, &r, &f, &cov));
    }

    #[test]
    fn batch_optimum_beats_perturbations(seed in 0u64..10_000) {
        let inst = RandomInstance::generate(seed);
        let sol = batch_solve(&inst.model.a, &inst.model.b, &inst.weights, &inst.reference, &inst.x0, inst.horizon).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let u: Vec<Vector> = sol.u_seq.iter().map(|u| u + uniform_vec(&mut rng, u.len(), 0.1)).collect();
            let mut x = vec![inst.x0.clone()];
            for uk in &u {
                let next = &inst.model.a * x.last().unwrap() + &inst.model.b * uk;
                x.push(next);
            }
            let cost = tracking_cost(&inst.weights, &inst.reference, &x, &u).unwrap();
            prop_assert!(sol.cost <= cost * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_innovation_keeps_estimate(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = validate_model(SystemModel {
            a: Matrix::identity(n, n),
            b: Matrix::zeros(n, 1),
            c: uniform(&mut rng, 2, n, 1.0),
            w: Matrix::zeros(n, n),
            v: pd(&mut rng, 2),
            x0_mean: uniform_vec(&mut rng, n, 1.0),
            x0_cov: pd(&mut rng, n),
        }).unwrap();
        let state = filter_init(&model);
        let z = &model.c * &state.x_hat;
        let next = kf_update(&state, &model.c, &model.v, &z).unwrap();
        prop_assert!(linalg::max_abs_diff_vec(&next.x_hat, &state.x_hat) <= 1e-14);
        prop_assert!(linalg::min_eigenvalue(&(&state.sigma - &next.sigma)) >= -1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn perfect_information_estimate_is_exact(seed in any::<u64>(), noiseless in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2;
        let model = validate_model(SystemModel {
            a: Matrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            b: Matrix::from_column_slice(2, 1, &[0.005, 0.1]),
            c: Matrix::identity(n, n),
            w: if noiseless { Matrix::zeros(n, n) } else { pd(&mut rng, n) * 0.01 },
            v: Matrix::zeros(n, n),
            x0_mean: uniform_vec(&mut rng, n, 1.0),
            x0_cov: Matrix::zeros(n, n),
        }).unwrap();
        let horizon = 60;
        let weights = validate_weights(&CostWeights::constant(Matrix::identity(n, n), m1(0.1), Matrix::identity(n, n)), n, 1, horizon).unwrap();
        let cfg = ScenarioConfig {
            model,
            weights,
            reference: ReferenceSpec::constant(Vector::from_vec(vec![1.0, 0.0])),
            horizon,
            controller: ControllerKind::Finite,
            reference_kind: ReferenceKind::Deterministic,
            base_seed: seed,
            n_rollouts: 1,
            filter_burn_in: 50,
        };
        let t = rollout(&cfg, 0).unwrap();
        for k in 0..horizon {
            let err = t.x_true(k).iter().zip(t.x_hat(k)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-12, "stage {} error {}", k, err);
        }
    }

    #[test]
    fn offset_cost_decomposes_exactly(seed in 0u64..1_000) {
        let cfg = ScenarioConfig { base_seed: seed, ..golden_cfg(0.25, 300, 1) };
        let t = rollout(&cfg, 0).unwrap();
        let offset = t.offset.clone().unwrap();
        let (q, r) = (m1(1.0), m1(1.0));
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let solution = SteadySolution::solve(&cfg.model.a, &cfg.model.b, &q, &r, &v1(1.0), IterationOptions::default()).unwrap();
        let f = &solution.f;
        let burn_in = 50;
        let steps = (t.len() - burn_in) as f64;
        let mut deterministic_part = 0.0;
        let mut stochastic = 0.0;
        for k in burn_in..t.len() {
            let x = Vector::from_column_slice(t.x_true(k));
            let u = Vector::from_column_slice(t.u(k));
            let target = Vector::from_column_slice(t.ref_used(k));
            stochastic += t.stage_cost[k];
            deterministic_part += stage_cost(&x, &(&u - f * &offset), &(&target - &offset), &q, &r);
        }
        let (cs, cc) = cross_terms(&t, &offset, &q, &r, f, burn_in);
        let fw = f * &offset;
        let middle = linalg::quad_form(&q, &offset) + linalg::quad_form(&r, &fw);
        let lhs = stochastic / steps;
        let rhs = deterministic_part / steps + middle + cs + cc;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{} vs {}", lhs, rhs);
        prop_assert!((f[(0, 0)] - 1.0 / phi).abs() < 1e-9);
    }
}

#[test]
fn long_rollout_stays_bounded() {
    let t = rollout(&golden_cfg(0.25, 2000, 1), 0).unwrap();
    assert!(!t.diverged);
    let worst = (0..t.len()).map(|k| t.x_true(k)[0].abs()).fold(0.0, f64::max);
    assert!(worst < 20.0, "{worst}");
}

#[test]
fn zero_offset_covariance_gives_zero_gap() {
    let report = run_gap(&golden_cfg(0.0, 300, 16), 50, 5, Execution::Parallel).unwrap().report();
    assert_eq!(report.predicted_gap, 0.0);
    assert_eq!(report.empirical_gap, 0.0);
    assert_eq!(report.cross_term_state, 0.0);
}

#[test]
fn gap_report_is_independent_of_chunking_and_threads() {
    let cfg = golden_cfg(0.25, 200, 23);
    let a = run_gap(&cfg, 50, 1, Execution::Sequential).unwrap().report();
    let b = run_gap(&cfg, 50, 7, Execution::Parallel).unwrap().report();
    let c = run_gap(&cfg, 50, 1000, Execution::Parallel).unwrap().report();
    assert_eq!(a, b);
    assert_eq!(b, c);
}

#[test]
fn batches_match_across_execution_and_seed_shift() {
    let cfg = ScenarioConfig { reference_kind: ReferenceKind::Deterministic, ..golden_cfg(0.25, 150, 12) };
    let par = run_batch(&cfg).unwrap();
    let seq = run_batch_sequential(&cfg).unwrap();
    assert_eq!(par, seq);
    let shifted = ScenarioConfig { base_seed: cfg.base_seed + 5, n_rollouts: 1, ..cfg.clone() };
    let single = rollout(&shifted, 0).unwrap();
    assert_eq!(single.x_true(149), par[5].x_true(149));
    assert_eq!(single.seed, par[5].seed);
}

#[test]
fn seeded_invariant_suite() {
    let mut report = InvariantReport::default();
    random_step_chains(101, 2_000, &mut report);
    witnesses(500, 50, &mut report);
    assert!(report.holds(), "{report:?}");
}
