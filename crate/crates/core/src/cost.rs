//! Stage and trajectory costs, and the stochastic-reference cost gap.
//!
//! For a constant offset `w̄` on the target, the per-stage cost of the offset
//! loop expands exactly as
//!
//! ```text
//! (x-x̃)ᵀQ(x-x̃) + ũᵀRũ = (x-x̄)ᵀQ(x-x̄) + uᵀRu              (u = ũ - Fw̄)
//!                      + w̄ᵀQw̄ + (Fw̄)ᵀR(Fw̄)                  (predicted gap)
//!                      - 2(x-x̄)ᵀQw̄ + 2uᵀRFw̄                 (cross terms)
//! ```
//!
//! The predicted gap keeps only the middle line. [`GapAccumulator`] measures
//! the closed-loop gap and both cross terms so the dropped terms can be checked.

use serde::Serialize;

use crate::error::CostError;
use crate::linalg::{self, Matrix, Vector};
use crate::model::ValidatedWeights;
use crate::parallel::Execution;
use crate::simulate::{ReferenceKind, Scenario, ScenarioConfig, SimulationTrace};

/// Gap estimates are compared at three standard errors.
pub const SIGMA_MULTIPLIER: f64 = 3.0;
/// Default number of leading stages dropped from average-cost estimates.
pub const DEFAULT_BURN_IN: usize = 50;

/// `(x - ref)ᵀ Q (x - ref) + uᵀ R u`.
pub fn stage_cost(x: &Vector, u: &Vector, reference: &Vector, q: &Matrix, r: &Matrix) -> f64 {
    let e = x - reference;
    linalg::quad_form(q, &e) + linalg::quad_form(r, u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    Include,
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    /// Stage costs from `burn_in` on, plus the terminal cost when included.
    pub total_cost: f64,
    /// Stage costs only, divided by `n_steps_used`.
    pub average_cost_per_stage: f64,
    pub terminal_cost: Option<f64>,
    pub n_steps_used: usize,
    pub burn_in_discarded: usize,
}

pub fn trace_cost(
    trace: &SimulationTrace,
    weights: &ValidatedWeights,
    terminal: Terminal,
    burn_in: usize,
) -> Result<CostReport, CostError> {
    if burn_in >= trace.len() {
        return Err(CostError::BurnInTooLarge {
            burn_in,
            len: trace.len(),
        });
    }
    let stages: f64 = trace.stage_cost[burn_in..].iter().sum();
    let n_steps_used = trace.len() - burn_in;
    let terminal_cost = (terminal == Terminal::Include).then(|| {
        linalg::quad_form(weights.q_terminal(), &(&trace.final_state - &trace.terminal_ref))
    });
    Ok(CostReport {
        total_cost: stages + terminal_cost.unwrap_or(0.0),
        average_cost_per_stage: stages / n_steps_used as f64,
        terminal_cost,
        n_steps_used,
        burn_in_discarded: burn_in,
    })
}

/// `tr(Q Σ) + tr(Fᵀ R F Σ)`: per-stage cost increase predicted for an offset
/// with covariance `Σ`.
pub fn predicted_gap(q: &Matrix, r: &Matrix, f: &Matrix, offset_cov: &Matrix) -> f64 {
    (q * offset_cov).trace() + (f.transpose() * r * f * offset_cov).trace()
}

/// Mean and standard error of a sample, summed in index order.
#[derive(Debug, Clone, Default)]
struct Sample {
    values: Vec<f64>,
}

impl Sample {
    fn push(&mut self, v: f64) {
        self.values.push(v);
    }
    fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
    fn std_error(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub predicted_gap: f64,
    pub empirical_gap: f64,
    pub std_error: f64,
    pub cross_term_state: f64,
    pub cross_term_state_std_error: f64,
    pub cross_term_control: f64,
    pub cross_term_control_std_error: f64,
    pub mean_cost_stochastic: f64,
    pub mean_cost_deterministic: f64,
    pub n_rollouts: usize,
    pub burn_in: usize,
    /// `|empirical - predicted| ≤ 3·std_error`.
    pub gap_matches_prediction: bool,
    /// A cross term lies more than three standard errors from zero, so the
    /// prediction's premise does not hold for this closed loop.
    pub cross_terms_flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GapVerdict {
    /// Empirical gap agrees with the prediction.
    Consistent,
    /// Disagreement explained by non-vanishing cross terms.
    CrossTermsNonzero,
    /// Disagreement although the cross terms vanish.
    Violation,
}

impl GapReport {
    pub fn verdict(&self) -> GapVerdict {
        if self.gap_matches_prediction {
            GapVerdict::Consistent
        } else if self.cross_terms_flagged {
            GapVerdict::CrossTermsNonzero
        } else {
            GapVerdict::Violation
        }
    }
}

fn within(x: f64, se: f64) -> bool {
    x.abs() <= SIGMA_MULTIPLIER * se
}

/// Streams paired (stochastic, deterministic) rollouts into a [`GapReport`].
///
/// Pairs are consumed in rollout order; feeding the same pairs in the same
/// order always yields the same report.
pub struct GapAccumulator {
    q: Matrix,
    r: Matrix,
    f: Matrix,
    predicted: f64,
    burn_in: usize,
    diff: Sample,
    stochastic: Sample,
    deterministic: Sample,
    cross_state: Sample,
    cross_control: Sample,
    len: Option<usize>,
}

impl GapAccumulator {
    pub fn new(q: &Matrix, r: &Matrix, f: &Matrix, offset_cov: &Matrix, burn_in: usize) -> Self {
        Self {
            q: q.clone(),
            r: r.clone(),
            f: f.clone(),
            predicted: predicted_gap(q, r, f, offset_cov),
            burn_in,
            diff: Sample::default(),
            stochastic: Sample::default(),
            deterministic: Sample::default(),
            cross_state: Sample::default(),
            cross_control: Sample::default(),
            len: None,
        }
    }

    pub fn push(&mut self, stochastic: &SimulationTrace, deterministic: &SimulationTrace) -> Result<(), CostError> {
        if stochastic.len() != deterministic.len() {
            return Err(CostError::MismatchedBatches(format!(
                "trace lengths {} and {}",
                stochastic.len(),
                deterministic.len()
            )));
        }
        if *self.len.get_or_insert(stochastic.len()) != stochastic.len() {
            return Err(CostError::MismatchedBatches("traces of different horizons".into()));
        }
        if self.burn_in >= stochastic.len() {
            return Err(CostError::BurnInTooLarge {
                burn_in: self.burn_in,
                len: stochastic.len(),
            });
        }
        let offset = stochastic
            .offset
            .as_ref()
            .ok_or_else(|| CostError::MismatchedBatches("stochastic trace has no offset draw".into()))?;
        let (state, control) = cross_terms(stochastic, offset, &self.q, &self.r, &self.f, self.burn_in);
        let steps = (stochastic.len() - self.burn_in) as f64;
        let avg = |t: &SimulationTrace| t.stage_cost[self.burn_in..].iter().sum::<f64>() / steps;
        let (s, d) = (avg(stochastic), avg(deterministic));
        self.stochastic.push(s);
        self.deterministic.push(d);
        self.diff.push(s - d);
        self.cross_state.push(state);
        self.cross_control.push(control);
        Ok(())
    }

    pub fn n_rollouts(&self) -> usize {
        self.diff.values.len()
    }

    /// Per-rollout average stage costs `(stochastic, deterministic)`.
    pub fn per_rollout(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.stochastic
            .values
            .iter()
            .copied()
            .zip(self.deterministic.values.iter().copied())
    }

    pub fn report(&self) -> GapReport {
        let empirical_gap = self.diff.mean();
        let std_error = self.diff.std_error();
        let (cs, cs_se) = (self.cross_state.mean(), self.cross_state.std_error());
        let (cc, cc_se) = (self.cross_control.mean(), self.cross_control.std_error());
        GapReport {
            predicted_gap: self.predicted,
            empirical_gap,
            std_error,
            cross_term_state: cs,
            cross_term_state_std_error: cs_se,
            cross_term_control: cc,
            cross_term_control_std_error: cc_se,
            mean_cost_stochastic: self.stochastic.mean(),
            mean_cost_deterministic: self.deterministic.mean(),
            n_rollouts: self.n_rollouts(),
            burn_in: self.burn_in,
            gap_matches_prediction: within(empirical_gap - self.predicted, std_error),
            cross_terms_flagged: !(within(cs, cs_se) && within(cc, cc_se)),
        }
    }
}

/// Per-stage means (from `burn_in` on) of `-2(x-x̄)ᵀQw̄` and `2uᵀRFw̄`, where
/// `x̄ = ref - w̄` and `u = ũ - Fw̄` is the control the deterministic-target
/// law would apply at the same estimate.
pub fn cross_terms(
    trace: &SimulationTrace,
    offset: &Vector,
    q: &Matrix,
    r: &Matrix,
    f: &Matrix,
    burn_in: usize,
) -> (f64, f64) {
    let q_w = q * offset;
    let f_w = f * offset;
    let r_f_w = r * &f_w;
    let mut state = 0.0;
    let mut control = 0.0;
    for k in burn_in..trace.len() {
        let dev = Vector::from_column_slice(trace.x_true(k)) - (Vector::from_column_slice(trace.ref_used(k)) - offset);
        state += -2.0 * dev.dot(&q_w);
        let u_det = Vector::from_column_slice(trace.u(k)) - &f_w;
        control += 2.0 * u_det.dot(&r_f_w);
    }
    let steps = (trace.len() - burn_in) as f64;
    (state / steps, control / steps)
}

/// Gap report over two equally sized batches paired by position.
pub fn empirical_gap(
    stochastic: &[SimulationTrace],
    deterministic: &[SimulationTrace],
    weights: &ValidatedWeights,
    f: &Matrix,
    offset_cov: &Matrix,
    burn_in: usize,
) -> Result<GapReport, CostError> {
    if stochastic.len() != deterministic.len() {
        return Err(CostError::MismatchedBatches(format!(
            "{} stochastic vs {} deterministic rollouts",
            stochastic.len(),
            deterministic.len()
        )));
    }
    if stochastic.is_empty() {
        return Err(CostError::MismatchedBatches("empty batches".into()));
    }
    let (q, r) = weights
        .steady()
        .ok_or_else(|| CostError::MismatchedBatches("gap analysis needs constant weights".into()))?;
    let mut acc = GapAccumulator::new(q, r, f, offset_cov, burn_in);
    for (s, d) in stochastic.iter().zip(deterministic) {
        acc.push(s, d)?;
    }
    Ok(acc.report())
}

/// Rollouts held in memory at once by [`run_gap`].
pub const GAP_CHUNK: usize = 256;

/// Runs `cfg` twice, once with the stochastic offset and once with the
/// deterministic reference, on the same seeds, and accumulates the paired
/// costs `chunk` rollouts at a time. `cfg` must use the steady controller.
pub fn run_gap(cfg: &ScenarioConfig, burn_in: usize, chunk: usize, exec: Execution) -> Result<GapAccumulator, CostError> {
    let stochastic = Scenario::new(ScenarioConfig {
        reference_kind: ReferenceKind::StochasticOffset,
        ..cfg.clone()
    })?;
    let deterministic = Scenario::new(ScenarioConfig {
        reference_kind: ReferenceKind::Deterministic,
        ..cfg.clone()
    })?;
    let solution = stochastic
        .steady_solution()
        .ok_or_else(|| CostError::MismatchedBatches("gap analysis needs the steady controller".into()))?;
    let (q, r) = cfg
        .weights
        .steady()
        .ok_or_else(|| CostError::MismatchedBatches("gap analysis needs constant weights".into()))?;
    let offset_cov = cfg.reference.offset_cov.as_ref().expect("checked by Scenario::new");
    let mut acc = GapAccumulator::new(q, r, &solution.f, offset_cov, burn_in);
    let chunk = chunk.max(1);
    let mut start = 0;
    while start < cfg.n_rollouts {
        let end = (start + chunk).min(cfg.n_rollouts);
        let s = stochastic.run_range(start, end, exec)?;
        let d = deterministic.run_range(start, end, exec)?;
        for (a, b) in s.iter().zip(&d) {
            if a.diverged || b.diverged {
                return Err(CostError::Diverged { index: a.rollout_index });
            }
            acc.push(a, b)?;
        }
        start = end;
    }
    Ok(acc)
}
