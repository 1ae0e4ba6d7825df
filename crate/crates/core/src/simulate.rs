//! Seeded closed-loop rollouts: plant, noise, Kalman filter and controller.
//!
//! Rollout `i` of a batch is seeded with `base_seed + i` and is a pure function
//! of the scenario and that index. Plant and measurement noise come from one
//! generator stream; the reference offset `w̄` comes from a second stream of
//! the same seed, so a deterministic-reference batch and a stochastic-offset
//! batch with equal seeds see identical plant and measurement noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{SimulationError, SolveError};
use crate::estimator::{filter_init, kalman_gain, kf_predict, kf_update_with_gain, steady_filter_covariance, FilterState};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{ReferenceSpec, ValidatedModel, ValidatedWeights};
use crate::parallel::{map_indexed, Execution};
use crate::riccati::{backward_recursion, RiccatiSolution};
use crate::steady::{IterationOptions, SteadySolution};

/// State norm beyond which a rollout is declared divergent and truncated.
pub const DIVERGENCE_BOUND: f64 = 1e12;
/// Default number of time-varying filter steps before a steady-state rollout
/// switches to the stationary Kalman gain.
pub const DEFAULT_FILTER_BURN_IN: usize = 50;

const OFFSET_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    /// Time-varying gains from the backward recursion over the horizon.
    Finite,
    /// Time-invariant gains tracking the limit of the reference.
    Steady,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Deterministic,
    /// Target `x̄ + w̄` with `w̄ ~ N(0, offset_cov)` drawn once per rollout.
    StochasticOffset,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub model: ValidatedModel,
    pub weights: ValidatedWeights,
    pub reference: ReferenceSpec,
    pub horizon: usize,
    pub controller: ControllerKind,
    pub reference_kind: ReferenceKind,
    pub base_seed: u64,
    pub n_rollouts: usize,
    pub filter_burn_in: usize,
}

/// One rollout's record. Per-step vectors are stored flat, row `k` at
/// `[k * dim, (k + 1) * dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub n: usize,
    pub m: usize,
    x_true: Vec<f64>,
    x_hat: Vec<f64>,
    u: Vec<f64>,
    ref_used: Vec<f64>,
    pub stage_cost: Vec<f64>,
    /// `x_N` (or the last state reached, for a divergent rollout).
    pub final_state: Vector,
    /// Reference the terminal cost is measured against.
    pub terminal_ref: Vector,
    /// `(x_N - ref_N)ᵀ Q_N (x_N - ref_N)`.
    pub terminal_cost: f64,
    pub offset: Option<Vector>,
    pub seed: u64,
    pub rollout_index: usize,
    pub total_cost: f64,
    pub average_cost_per_stage: f64,
    /// The state norm exceeded [`DIVERGENCE_BOUND`]; the trace is truncated.
    pub diverged: bool,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.stage_cost.len()
    }
    pub fn is_empty(&self) -> bool {
        self.stage_cost.is_empty()
    }
    pub fn x_true(&self, k: usize) -> &[f64] {
        &self.x_true[k * self.n..(k + 1) * self.n]
    }
    pub fn x_hat(&self, k: usize) -> &[f64] {
        &self.x_hat[k * self.n..(k + 1) * self.n]
    }
    pub fn u(&self, k: usize) -> &[f64] {
        &self.u[k * self.m..(k + 1) * self.m]
    }
    pub fn ref_used(&self, k: usize) -> &[f64] {
        &self.ref_used[k * self.n..(k + 1) * self.n]
    }

    /// Builds a trace from per-step records; used for synthetic traces in analysis tests.
    #[allow(clippy::too_many_arguments)]
    pub fn from_steps(
        x_true: &[Vector],
        x_hat: &[Vector],
        u: &[Vector],
        ref_used: &[Vector],
        stage_cost: Vec<f64>,
        final_state: Vector,
        terminal_ref: Vector,
        terminal_cost: f64,
        offset: Option<Vector>,
    ) -> Self {
        let n = final_state.len();
        let m = u.first().map_or(0, |v| v.len());
        let flat = |vs: &[Vector]| vs.iter().flat_map(|v| v.iter().copied()).collect::<Vec<_>>();
        let sum: f64 = stage_cost.iter().sum();
        let len = stage_cost.len().max(1) as f64;
        Self {
            n,
            m,
            x_true: flat(x_true),
            x_hat: flat(x_hat),
            u: flat(u),
            ref_used: flat(ref_used),
            average_cost_per_stage: sum / len,
            stage_cost,
            final_state,
            terminal_ref,
            terminal_cost,
            offset,
            seed: 0,
            rollout_index: 0,
            total_cost: sum + terminal_cost,
            diverged: false,
        }
    }
}

enum Controller {
    Finite(RiccatiSolution),
    Steady {
        solution: SteadySolution,
        filter_gain: Option<Matrix>,
    },
}

/// A validated scenario with its controller and noise factors precomputed.
pub struct Scenario {
    cfg: ScenarioConfig,
    controller: Controller,
    sqrt_w: Matrix,
    sqrt_v: Matrix,
    sqrt_x0: Matrix,
    sqrt_offset: Option<Matrix>,
}

/// True for states past [`DIVERGENCE_BOUND`] or with a non-finite norm.
fn beyond_bound(x: &Vector) -> bool {
    let norm = x.norm();
    norm.is_nan() || norm > DIVERGENCE_BOUND
}

fn gaussian(rng: &mut ChaCha8Rng, sqrt_cov: &Matrix) -> Vector {
    let z = Vector::from_iterator(sqrt_cov.ncols(), (0..sqrt_cov.ncols()).map(|_| StandardNormal.sample(rng)));
    sqrt_cov * z
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimulationError> {
        if cfg.horizon == 0 {
            return Err(SimulationError::Config("horizon must be at least 1".into()));
        }
        if cfg.n_rollouts == 0 {
            return Err(SimulationError::Config("n_rollouts must be at least 1".into()));
        }
        if cfg.weights.horizon() < cfg.horizon {
            return Err(SimulationError::Config(format!(
                "weights cover {} stages, horizon is {}",
                cfg.weights.horizon(),
                cfg.horizon
            )));
        }
        let sqrt_offset = match (cfg.reference_kind, &cfg.reference.offset_cov) {
            (ReferenceKind::StochasticOffset, Some(cov)) => Some(linalg::psd_sqrt(cov)),
            (ReferenceKind::StochasticOffset, None) => {
                return Err(SimulationError::Config(
                    "stochastic-offset reference requires offset_cov".into(),
                ))
            }
            (ReferenceKind::Deterministic, _) => None,
        };
        let model = &cfg.model;
        let controller = match cfg.controller {
            ControllerKind::Finite => {
                Controller::Finite(backward_recursion(model, &cfg.weights, &cfg.reference, cfg.horizon)?)
            }
            ControllerKind::Steady => {
                let (q, r) = cfg.weights.steady().ok_or_else(|| {
                    SimulationError::Config("steady controller needs constant weights".into())
                })?;
                let solution = SteadySolution::solve(
                    &model.a,
                    &model.b,
                    q,
                    r,
                    cfg.reference.limit(),
                    IterationOptions::default(),
                )?;
                let filter_gain = if cfg.horizon > cfg.filter_burn_in {
                    Some(steady_filter_covariance(model, IterationOptions::default())?.1)
                } else {
                    None
                };
                Controller::Steady {
                    solution,
                    filter_gain,
                }
            }
        };
        Ok(Self {
            sqrt_w: linalg::psd_sqrt(&model.w),
            sqrt_v: linalg::psd_sqrt(&model.v),
            sqrt_x0: linalg::psd_sqrt(&model.x0_cov),
            sqrt_offset,
            controller,
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// The steady-state solution, when this scenario uses the time-invariant controller.
    pub fn steady_solution(&self) -> Option<&SteadySolution> {
        match &self.controller {
            Controller::Steady { solution, .. } => Some(solution),
            Controller::Finite(_) => None,
        }
    }

    pub fn riccati_solution(&self) -> Option<&RiccatiSolution> {
        match &self.controller {
            Controller::Finite(sol) => Some(sol),
            Controller::Steady { .. } => None,
        }
    }

    pub fn rollout(&self, rollout_index: usize) -> Result<SimulationTrace, SimulationError> {
        let cfg = &self.cfg;
        let model = &cfg.model;
        let (n, m, horizon) = (model.n(), model.m(), cfg.horizon);
        let seed = cfg.base_seed.wrapping_add(rollout_index as u64);

        let offset = self.sqrt_offset.as_ref().map(|sqrt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(OFFSET_STREAM);
            gaussian(&mut rng, sqrt)
        });

        // Per-rollout target and feedforward.
        let mut finite_sol = None;
        let mut steady = None;
        match (&self.controller, &offset) {
            (Controller::Finite(sol), None) => finite_sol = Some(std::borrow::Cow::Borrowed(sol)),
            (Controller::Finite(sol), Some(w)) => {
                let shifted = cfg.reference.shifted(w);
                finite_sol = Some(std::borrow::Cow::Owned(sol.retarget(model, &cfg.weights, &shifted)?));
            }
            (Controller::Steady { solution, filter_gain }, _) => {
                let target = match &offset {
                    Some(w) => cfg.reference.limit() + w,
                    None => cfg.reference.limit().clone(),
                };
                let gtilde = solution.gtilde_for(&target);
                steady = Some((solution, filter_gain.as_ref(), target, gtilde));
            }
        }
        let reference_at = |k: usize| -> Result<Vector, SolveError> {
            match (&steady, &offset) {
                (Some((_, _, target, _)), _) => Ok(target.clone()),
                (None, Some(w)) => Ok(cfg.reference.at(k)? + w),
                (None, None) => Ok(cfg.reference.at(k)?.clone()),
            }
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = &model.x0_mean + gaussian(&mut rng, &self.sqrt_x0);
        let mut filter: FilterState = filter_init(model);

        let mut trace = SimulationTrace {
            n,
            m,
            x_true: Vec::with_capacity(horizon * n),
            x_hat: Vec::with_capacity(horizon * n),
            u: Vec::with_capacity(horizon * m),
            ref_used: Vec::with_capacity(horizon * n),
            stage_cost: Vec::with_capacity(horizon),
            final_state: Vector::zeros(n),
            terminal_ref: Vector::zeros(n),
            terminal_cost: 0.0,
            offset: offset.clone(),
            seed,
            rollout_index,
            total_cost: 0.0,
            average_cost_per_stage: 0.0,
            diverged: false,
        };

        for k in 0..horizon {
            if beyond_bound(&x) {
                trace.diverged = true;
                break;
            }
            let w = gaussian(&mut rng, &self.sqrt_w);
            let v = gaussian(&mut rng, &self.sqrt_v);
            let z = &model.c * &x + v;

            let fixed_gain = match &steady {
                Some((_, Some(gain), _, _)) if k >= cfg.filter_burn_in => Some(*gain),
                _ => None,
            };
            filter = match fixed_gain {
                Some(gain) => kf_update_with_gain(&filter, &model.c, &model.v, &z, gain)?,
                None => {
                    let gain = kalman_gain(&filter.sigma, &model.c, &model.v)?;
                    kf_update_with_gain(&filter, &model.c, &model.v, &z, &gain)?
                }
            };

            let u = match (&finite_sol, &steady) {
                (Some(sol), _) => sol.control(k, &filter.x_hat)?,
                (None, Some((solution, _, _, gtilde))) => solution.control(&filter.x_hat, gtilde),
                (None, None) => unreachable!("controller always configured"),
            };
            let r = reference_at(k)?;
            let cost = crate::cost::stage_cost(&x, &u, &r, cfg.weights.q(k), cfg.weights.r(k));

            trace.x_true.extend(x.iter());
            trace.x_hat.extend(filter.x_hat.iter());
            trace.u.extend(u.iter());
            trace.ref_used.extend(r.iter());
            trace.stage_cost.push(cost);

            x = &model.a * &x + &model.b * &u + w;
            filter = kf_predict(&filter, &model.a, &model.b, &model.w, &u)?;
        }

        if !trace.diverged && beyond_bound(&x) {
            trace.diverged = true;
        }
        let stage_sum: f64 = trace.stage_cost.iter().sum();
        trace.terminal_ref = if trace.diverged { Vector::zeros(n) } else { reference_at(horizon)? };
        trace.terminal_cost = if trace.diverged {
            f64::INFINITY
        } else {
            linalg::quad_form(cfg.weights.q_terminal(), &(&x - &trace.terminal_ref))
        };
        trace.final_state = x;
        trace.total_cost = match cfg.controller {
            ControllerKind::Finite => stage_sum + trace.terminal_cost,
            ControllerKind::Steady => stage_sum,
        };
        trace.average_cost_per_stage = stage_sum / trace.len().max(1) as f64;
        Ok(trace)
    }

    pub fn run_batch_with(&self, exec: Execution) -> Result<Vec<SimulationTrace>, SimulationError> {
        map_indexed(self.cfg.n_rollouts, exec, |i| {
            self.rollout(i).map_err(|e| SimulationError::Rollout {
                index: i,
                source: Box::new(e),
            })
        })
        .into_iter()
        .collect()
    }

    /// Runs rollouts `start..end`; used to stream large batches in chunks.
    pub fn run_range(
        &self,
        start: usize,
        end: usize,
        exec: Execution,
    ) -> Result<Vec<SimulationTrace>, SimulationError> {
        map_indexed(end.saturating_sub(start), exec, |j| {
            self.rollout(start + j).map_err(|e| SimulationError::Rollout {
                index: start + j,
                source: Box::new(e),
            })
        })
        .into_iter()
        .collect()
    }
}

/// One rollout of `cfg`, seeded `base_seed + rollout_index`.
pub fn rollout(cfg: &ScenarioConfig, rollout_index: usize) -> Result<SimulationTrace, SimulationError> {
    Scenario::new(cfg.clone())?.rollout(rollout_index)
}

/// All `n_rollouts` rollouts, ordered by rollout index.
pub fn run_batch(cfg: &ScenarioConfig) -> Result<Vec<SimulationTrace>, SimulationError> {
    Scenario::new(cfg.clone())?.run_batch_with(Execution::Parallel)
}

pub fn run_batch_sequential(cfg: &ScenarioConfig) -> Result<Vec<SimulationTrace>, SimulationError> {
    Scenario::new(cfg.clone())?.run_batch_with(Execution::Sequential)
}

/// Monte Carlo check of the Kalman filter's covariance against the empirical
/// estimation error at the last stage of a short rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConsistency {
    /// Sample covariance of `x - x̂` after the final measurement update.
    pub empirical_cov: Matrix,
    /// The filter's own post-update covariance at that stage.
    pub filter_cov: Matrix,
    /// `‖empirical - filter‖_F / ‖filter‖_F`.
    pub relative_error: f64,
    pub mean_error: Vector,
    pub mean_std_error: Vector,
}

impl FilterConsistency {
    /// Largest `|mean| / std_error` over components.
    pub fn max_bias_z(&self) -> f64 {
        self.mean_error
            .iter()
            .zip(self.mean_std_error.iter())
            .map(|(m, se)| if *se > 0.0 { m.abs() / se } else if *m == 0.0 { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

/// Runs `cfg` (all rollouts) and compares the final-stage estimation error with
/// the filter covariance. The covariance path does not depend on data, so it is
/// replayed once with zero measurements.
pub fn filter_consistency(cfg: &ScenarioConfig, exec: Execution) -> Result<FilterConsistency, SimulationError> {
    let scenario = Scenario::new(cfg.clone())?;
    let traces = scenario.run_batch_with(exec)?;
    let n = cfg.model.n();
    let last = cfg.horizon - 1;

    let model = &cfg.model;
    let mut state = filter_init(model);
    let zero_z = Vector::zeros(model.s());
    let zero_u = Vector::zeros(model.m());
    for k in 0..cfg.horizon {
        let gain = kalman_gain(&state.sigma, &model.c, &model.v)?;
        state = kf_update_with_gain(&state, &model.c, &model.v, &zero_z, &gain)?;
        if k < last {
            state = kf_predict(&state, &model.a, &model.b, &model.w, &zero_u)?;
        }
    }

    let errors: Vec<Vector> = traces
        .iter()
        .map(|t| Vector::from_column_slice(t.x_true(last)) - Vector::from_column_slice(t.x_hat(last)))
        .collect();
    let count = errors.len() as f64;
    let mean = errors.iter().fold(Vector::zeros(n), |acc, e| acc + e) / count;
    let mut cov = Matrix::zeros(n, n);
    for e in &errors {
        let d = e - &mean;
        cov += &d * d.transpose();
    }
    cov /= (count - 1.0).max(1.0);
    let mean_std_error = cov.diagonal().map(|v| (v / count).sqrt());
    let relative_error = (&cov - &state.sigma).norm() / state.sigma.norm();
    Ok(FilterConsistency {
        empirical_cov: cov,
        filter_cov: state.sigma,
        relative_error,
        mean_error: mean,
        mean_std_error,
    })
}
