//! Golden problem files and the expected-value manifest that ships with them.
//!
//! Each manifest entry names a quantity, its expected value and tolerance, and
//! how the expected value was obtained. [`fixture_check`] recomputes every
//! entry from the problem files and reports pass/fail per entry.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::predicted_gap;
use crate::estimator::steady_filter_covariance;
use crate::export::trace_csv;
use crate::linalg::{self, Matrix};
use crate::model::{Problem, ReferenceSpec};
use crate::oracle::{sweep, RandomInstance};
use crate::parallel::Execution;
use crate::riccati::backward_recursion;
use crate::simulate::{filter_consistency, ControllerKind, ReferenceKind, Scenario, ScenarioConfig, DEFAULT_FILTER_BURN_IN};
use crate::steady::{IterationOptions, SteadySolution};

pub const GOLDEN_SCALAR: &str = "golden_scalar.json";
pub const GOLDEN_NOISELESS: &str = "golden_noiseless.json";
pub const TWO_STATE: &str = "two_state.json";
pub const UNSTABILIZABLE: &str = "unstabilizable.json";
pub const MANIFEST: &str = "manifest.json";

/// Number of acceptance criteria the manifest must cover, one entry each.
pub const CRITERIA: usize = 8;

/// Directory holding the fixtures shipped with this crate.
pub fn default_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixtureOutcome {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    pub tol: f64,
    pub provenance: String,
    pub pass: bool,
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("unknown manifest entry `{0}`")]
    UnknownEntry(String),
    #[error("computing `{name}`: {message}")]
    Compute { name: String, message: String },
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, FixtureError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| FixtureError::Manifest(e.to_string()))
    }

    /// Every entry has a finite value and non-negative tolerance, and each
    /// acceptance criterion `1..=CRITERIA` is referenced by exactly one entry.
    pub fn check_complete(&self) -> Result<(), FixtureError> {
        let mut seen: BTreeMap<u32, usize> = BTreeMap::new();
        for e in &self.entries {
            if !e.value.is_finite() || e.tol.is_nan() || e.tol < 0.0 || e.provenance.is_empty() {
                return Err(FixtureError::Manifest(format!("entry `{}` is incomplete", e.name)));
            }
            if let Some(c) = e.criterion {
                *seen.entry(c).or_default() += 1;
            }
        }
        for c in 1..=CRITERIA as u32 {
            match seen.get(&c) {
                Some(1) => {}
                Some(k) => return Err(FixtureError::Manifest(format!("criterion {c} appears {k} times"))),
                None => return Err(FixtureError::Manifest(format!("criterion {c} has no entry"))),
            }
        }
        if let Some(c) = seen.keys().find(|c| **c == 0 || **c > CRITERIA as u32) {
            return Err(FixtureError::Manifest(format!("unknown criterion {c}")));
        }
        Ok(())
    }
}

fn load_problem(dir: &Path, file: &str) -> Result<Problem, FixtureError> {
    Problem::load(&dir.join(file)).map_err(|e| FixtureError::Compute {
        name: file.to_string(),
        message: e.to_string(),
    })
}

/// Lazily computed quantities shared across entries.
struct Context<'a> {
    dir: &'a Path,
    golden: Option<(Problem, SteadySolution)>,
}

fn compute_err(name: &str, e: impl std::fmt::Display) -> FixtureError {
    FixtureError::Compute {
        name: name.to_string(),
        message: e.to_string(),
    }
}

impl Context<'_> {
    fn golden(&mut self, name: &str) -> Result<&(Problem, SteadySolution), FixtureError> {
        if self.golden.is_none() {
            let p = load_problem(self.dir, GOLDEN_SCALAR)?;
            let w = p.weights_for(1).map_err(|e| compute_err(name, e))?;
            let (q, r) = w.steady().expect("constant golden weights");
            let sol = SteadySolution::solve(&p.model.a, &p.model.b, q, r, p.reference.limit(), IterationOptions::default())
                .map_err(|e| compute_err(name, e))?;
            self.golden = Some((p, sol));
        }
        Ok(self.golden.as_ref().unwrap())
    }

    fn evaluate(&mut self, name: &str) -> Result<f64, FixtureError> {
        let scalar = |m: &Matrix| m[(0, 0)];
        Ok(match name {
            "golden.are_solution" => scalar(&self.golden(name)?.1.k),
            "golden.steady_gain" => scalar(&self.golden(name)?.1.l),
            "golden.correction_gain" => scalar(&self.golden(name)?.1.f),
            "golden.spectral_radius" => self.golden(name)?.1.closed_loop_spectral_radius,
            "golden.gtilde" => self.golden(name)?.1.gtilde[0],
            "golden.filter_sigma" => {
                let (p, _) = self.golden(name)?;
                let (sigma, _) = steady_filter_covariance(&p.model, IterationOptions::default())
                    .map_err(|e| compute_err(name, e))?;
                scalar(&sigma)
            }
            "golden.predicted_gap" => {
                let (p, sol) = self.golden(name)?;
                let cov = p.reference.offset_cov.as_ref().ok_or_else(|| compute_err(name, "no offset_cov"))?;
                let w = p.weights_for(1).map_err(|e| compute_err(name, e))?;
                let (q, r) = w.steady().unwrap();
                predicted_gap(q, r, &sol.f, cov)
            }
            "golden.terminal_feedforward" => {
                let (p, _) = self.golden(name)?;
                let horizon = 10;
                let w = p.weights_for(horizon).map_err(|e| compute_err(name, e))?;
                let sol = backward_recursion(&p.model, &w, &p.reference, horizon).map_err(|e| compute_err(name, e))?;
                let exact = -(w.q_terminal() * p.reference.at(horizon).unwrap());
                if sol.k[horizon] != *w.q_terminal() || sol.g[horizon] != exact {
                    return Err(compute_err(name, "terminal conditions not exact"));
                }
                sol.g[horizon][0]
            }
            "golden.filter_variance_ratio" => {
                let (p, _) = self.golden(name)?;
                let cfg = filter_scenario(p, 100_000, 0).map_err(|e| compute_err(name, e))?;
                let fc = filter_consistency(&cfg, Execution::Parallel).map_err(|e| compute_err(name, e))?;
                scalar(&fc.empirical_cov) / scalar(&fc.filter_cov)
            }
            "oracle.max_control_deviation" => sweep(100, 0, Execution::Parallel)
                .map_err(|e| compute_err(name, e))?
                .iter()
                .map(|e| e.comparison.max_u_deviation.max(e.comparison.cost_deviation))
                .fold(0.0, f64::max),
            "oracle.finite_infinite_gain_deviation" => (0..100)
                .filter_map(|seed| finite_infinite_deviation(&RandomInstance::generate(seed), 500))
                .map(|(dl, dg)| dl.max(dg))
                .fold(0.0, f64::max),
            "invariants.gap_linearity_error" => {
                let mut worst: f64 = 0.0;
                for file in [GOLDEN_SCALAR, TWO_STATE] {
                    let p = load_problem(self.dir, file)?;
                    let w = p.weights_for(1).map_err(|e| compute_err(name, e))?;
                    let (q, r) = w.steady().unwrap();
                    let sol = SteadySolution::solve(&p.model.a, &p.model.b, q, r, p.reference.limit(), IterationOptions::default())
                        .map_err(|e| compute_err(name, e))?;
                    let cov = p.reference.offset_cov.clone().unwrap();
                    let base = predicted_gap(q, r, &sol.f, &cov);
                    for alpha in [0.5, 2.0, 4.0] {
                        worst = worst.max((predicted_gap(q, r, &sol.f, &(&cov * alpha)) - alpha * base).abs());
                    }
                }
                worst
            }
            "determinism.trace_byte_mismatches" => {
                let p = load_problem(self.dir, GOLDEN_SCALAR)?;
                let horizon = 200;
                let w = p.weights_for(horizon).map_err(|e| compute_err(name, e))?;
                let cfg = ScenarioConfig {
                    model: p.model.clone(),
                    weights: w,
                    reference: p.reference.clone(),
                    horizon,
                    controller: ControllerKind::Steady,
                    reference_kind: ReferenceKind::StochasticOffset,
                    base_seed: 42,
                    n_rollouts: 3,
                    filter_burn_in: DEFAULT_FILTER_BURN_IN,
                };
                let render = || -> Result<Vec<u8>, FixtureError> {
                    let traces = Scenario::new(cfg.clone())
                        .and_then(|s| s.run_batch_with(Execution::Parallel))
                        .map_err(|e| compute_err(name, e))?;
                    Ok(traces.iter().flat_map(|t| trace_csv(t).into_bytes()).collect())
                };
                let (a, b) = (render()?, render()?);
                let mismatches = a.iter().zip(&b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len());
                mismatches as f64
            }
            other => return Err(FixtureError::UnknownEntry(other.to_string())),
        })
    }
}

/// Fixed short scenario used for the filter consistency check: the problem's
/// plant and prior over 10 stages under the finite-horizon controller.
pub fn filter_scenario(problem: &Problem, n_rollouts: usize, base_seed: u64) -> Result<ScenarioConfig, crate::error::ValidationError> {
    let horizon = 10;
    Ok(ScenarioConfig {
        model: problem.model.clone(),
        weights: problem.weights_for(horizon)?,
        reference: problem.reference.clone(),
        horizon,
        controller: ControllerKind::Finite,
        reference_kind: ReferenceKind::Deterministic,
        base_seed,
        n_rollouts,
        filter_burn_in: DEFAULT_FILTER_BURN_IN,
    })
}

/// `(‖L_0 - L‖∞, ‖g_0 - g̃‖∞)` for a long finite horizon against the steady
/// solution, tracking the instance's final reference point as a constant.
/// `None` when the algebraic Riccati iteration does not converge.
pub fn finite_infinite_deviation(inst: &RandomInstance, horizon: usize) -> Option<(f64, f64)> {
    let target = inst.reference.limit().clone();
    let steady = SteadySolution::solve(&inst.model.a, &inst.model.b, &inst.q, &inst.r, &target, IterationOptions::default()).ok()?;
    let weights = inst.weights_for(horizon);
    let sol = backward_recursion(&inst.model, &weights, &ReferenceSpec::constant(target), horizon).ok()?;
    Some((
        linalg::max_abs_diff(&sol.l[0], &steady.l),
        linalg::max_abs_diff_vec(&sol.g[0], &steady.gtilde),
    ))
}

/// Recomputes every manifest entry in `dir`.
pub fn fixture_check(dir: &Path) -> Result<Vec<FixtureOutcome>, FixtureError> {
    let manifest = Manifest::load(dir)?;
    manifest.check_complete()?;
    let mut ctx = Context { dir, golden: None };
    manifest
        .entries
        .iter()
        .map(|e| {
            let actual = ctx.evaluate(&e.name)?;
            Ok(FixtureOutcome {
                name: e.name.clone(),
                expected: e.value,
                actual,
                tol: e.tol,
                provenance: e.provenance.clone(),
                pass: (actual - e.value).abs() <= e.tol,
            })
        })
        .collect()
}
