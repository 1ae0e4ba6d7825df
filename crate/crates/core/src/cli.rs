//! `lqgtrack` command-line front end.
//!
//! Exit codes: 0 ok, 1 I/O, 2 invalid input, 3 synthesis failure, 4 divergent
//! rollout, 5 gap formula violation, 6 verification failure. Failures print
//! one JSON object on standard error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::cost::{run_gap, trace_cost, CostReport, GapReport, GapVerdict, Terminal, DEFAULT_BURN_IN, GAP_CHUNK};
use crate::error::{CostError, SimulationError, SolveError, ValidationError};
use crate::estimator::steady_filter_covariance;
use crate::export::{write_json, write_trace};
use crate::fixtures::{self, FixtureError};
use crate::model::{matrix_to_rows, Problem};
use crate::oracle::sweep;
use crate::parallel::Execution;
use crate::riccati::backward_recursion;
use crate::simulate::{ControllerKind, ReferenceKind, Scenario, ScenarioConfig, DEFAULT_FILTER_BURN_IN};
use crate::steady::{IterationOptions, SteadySolution, SteadySummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SYNTHESIS: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_GAP_VIOLATION: i32 = 5;
pub const EXIT_VERIFY: i32 = 6;

const DEFAULT_GAP_ROLLOUTS: usize = 10_000;
const DEFAULT_VERIFY_INSTANCES: usize = 100;
const DEFAULT_VERIFY_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "lqgtrack", version, about = "Discrete-time LQG tracking: synthesis, simulation and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the steady-state controller and filter, and the finite-horizon
    /// recursion when a horizon is given.
    Synth(SynthArgs),
    /// Run seeded closed-loop rollouts and write traces and cost reports.
    Simulate(SimulateArgs),
    /// Measure the cost of a random target offset against its prediction.
    Gap(GapArgs),
    /// Compare the recursion against a batch least-squares solve on random instances.
    Verify(VerifyArgs),
    /// Recompute every entry of a fixture manifest.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Problem file (JSON).
    #[arg(long)]
    pub problem: PathBuf,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the horizon in the problem file.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: ProblemArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerArg {
    Finite,
    Steady,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: ProblemArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub rollouts: usize,
    /// Leading stages excluded from cost averages. Defaults to 50 for the
    /// steady controller and 0 for the finite one.
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Defaults to `steady` with constant weights, `finite` otherwise.
    #[arg(long, value_enum)]
    pub controller: Option<ControllerArg>,
    /// Draw a random target offset per rollout from `offset_cov`.
    #[arg(long)]
    pub stochastic: bool,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    #[command(flatten)]
    pub common: ProblemArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_GAP_ROLLOUTS)]
    pub rollouts: usize,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    pub burn_in: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = DEFAULT_VERIFY_INSTANCES)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_VERIFY_TOL)]
    pub tol: f64,
    /// Also write `verify.json` and `verify.txt` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    /// Directory holding `manifest.json`. Defaults to the bundled fixtures.
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

/// A failed command: exit code, error kind and message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    pub path: Option<String>,
    pub seeds: Vec<u64>,
}

impl Failure {
    fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
            path: None,
            seeds: Vec::new(),
        }
    }

    fn to_json(&self) -> String {
        let mut v = json!({ "error": self.kind, "exit_code": self.code, "message": self.message });
        if let Some(p) = &self.path {
            v["path"] = json!(p);
        }
        if !self.seeds.is_empty() {
            v["seeds"] = json!(self.seeds);
        }
        v.to_string()
    }
}

impl From<ValidationError> for Failure {
    fn from(e: ValidationError) -> Self {
        let path = match &e {
            ValidationError::Parse { path, .. } => Some(path.clone()),
            ValidationError::DimensionMismatch { field, .. } | ValidationError::WrongLength { field, .. } => {
                Some(field.clone())
            }
            _ => None,
        };
        Self {
            path,
            ..Self::new(EXIT_VALIDATION, "validation", e.to_string())
        }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Validation(v) => v.into(),
            SolveError::IndexOutOfRange { .. } => Self::new(EXIT_VALIDATION, "validation", e.to_string()),
            other => Self::new(EXIT_SYNTHESIS, "synthesis", other.to_string()),
        }
    }
}

impl From<SimulationError> for Failure {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Config(m) => Self::new(EXIT_VALIDATION, "validation", m),
            SimulationError::Solve(s) => s.into(),
            SimulationError::Validation(v) => v.into(),
            SimulationError::Rollout { index, source } => {
                let mut f = Self::from(*source);
                f.message = format!("rollout {index}: {}", f.message);
                f
            }
        }
    }
}

impl From<CostError> for Failure {
    fn from(e: CostError) -> Self {
        match e {
            CostError::Simulation(s) => s.into(),
            CostError::Diverged { .. } => Self::new(EXIT_DIVERGED, "non_finite_state", e.to_string()),
            other => Self::new(EXIT_VALIDATION, "validation", other.to_string()),
        }
    }
}

impl From<FixtureError> for Failure {
    fn from(e: FixtureError) -> Self {
        match e {
            FixtureError::Io { .. } => Self::new(EXIT_IO, "io", e.to_string()),
            other => Self::new(EXIT_VALIDATION, "validation", other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_IO, "io", format!("{}: {e}", path.display()))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure::new(EXIT_VALIDATION, "validation", message)
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            print!("{summary}");
            EXIT_OK
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            f.code
        }
    }
}

/// Runs a parsed command, returning the text summary for standard output.
pub fn execute(command: &Command) -> Result<String, Failure> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Gap(a) => cmd_gap(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Fixtures(a) => cmd_fixtures(a),
    }
}

fn load(common: &ProblemArgs) -> Result<(Problem, Option<usize>), Failure> {
    let problem = Problem::load(&common.problem)?;
    let horizon = common.horizon.or(problem.horizon);
    if horizon == Some(0) {
        return Err(Failure {
            path: Some("horizon".into()),
            ..invalid("horizon must be at least 1")
        });
    }
    Ok((problem, horizon))
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_report<T: Serialize>(dir: &Path, stem: &str, value: &T, text: &str) -> Result<(), Failure> {
    let json_path = dir.join(format!("{stem}.json"));
    write_json(&json_path, value).map_err(|e| io_failure(&json_path, e))?;
    let txt_path = dir.join(format!("{stem}.txt"));
    fs::write(&txt_path, text).map_err(|e| io_failure(&txt_path, e))
}

#[derive(Debug, Serialize)]
struct FilterSummary {
    sigma: Vec<Vec<f64>>,
    gain: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct FiniteSummary {
    horizon: usize,
    #[serde(rename = "K")]
    k: Vec<Vec<Vec<f64>>>,
    g: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    l: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize)]
struct SynthReport {
    steady: Option<SteadySummary>,
    filter: Option<FilterSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    filter_error: Option<String>,
    finite: Option<FiniteSummary>,
}

fn fmt_rows(rows: &[Vec<f64>]) -> String {
    let inner: Vec<String> = rows
        .iter()
        .map(|r| format!("[{}]", r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", inner.join(", "))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<String, Failure> {
    let (problem, horizon) = load(&args.common)?;
    let weights = problem.weights_for(horizon.unwrap_or(1))?;
    if !weights.is_constant() && horizon.is_none() {
        return Err(invalid("per-stage weights need a horizon"));
    }
    let steady = match weights.steady() {
        Some((q, r)) => Some(SteadySolution::solve(
            &problem.model.a,
            &problem.model.b,
            q,
            r,
            problem.reference.limit(),
            IterationOptions::default(),
        )?),
        None => None,
    };
    let finite = match horizon {
        Some(h) => {
            let sol = backward_recursion(&problem.model, &weights, &problem.reference, h)?;
            Some(FiniteSummary {
                horizon: h,
                k: sol.k.iter().map(matrix_to_rows).collect(),
                g: sol.g.iter().map(|g| g.iter().copied().collect()).collect(),
                l: sol.l.iter().map(matrix_to_rows).collect(),
            })
        }
        None => None,
    };
    let (filter, filter_error) = match steady_filter_covariance(&problem.model, IterationOptions::default()) {
        Ok((sigma, gain)) => (
            Some(FilterSummary {
                sigma: matrix_to_rows(&sigma),
                gain: matrix_to_rows(&gain),
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = SynthReport {
        steady: steady.as_ref().map(SteadySolution::summary),
        filter,
        filter_error,
        finite,
    };

    let mut text = String::new();
    if let Some(s) = &report.steady {
        let _ = writeln!(text, "K = {}", fmt_rows(&s.k));
        let _ = writeln!(text, "L = {}", fmt_rows(&s.l));
        let _ = writeln!(text, "gtilde = {:?}", s.gtilde);
        let _ = writeln!(text, "F = {}", fmt_rows(&s.f));
        let _ = writeln!(text, "spectral_radius = {:?}", s.spectral_radius);
        let _ = writeln!(text, "are_residual = {:e}", s.are_residual);
        let _ = writeln!(text, "iterations = {}", s.iterations);
    } else {
        let _ = writeln!(text, "steady: not available (per-stage weights)");
    }
    match (&report.filter, &report.filter_error) {
        (Some(f), _) => {
            let _ = writeln!(text, "filter_sigma = {}", fmt_rows(&f.sigma));
            let _ = writeln!(text, "filter_gain = {}", fmt_rows(&f.gain));
        }
        (None, Some(e)) => {
            let _ = writeln!(text, "filter: {e}");
        }
        _ => {}
    }
    if let Some(f) = &report.finite {
        let _ = writeln!(text, "finite horizon = {}", f.horizon);
        let _ = writeln!(text, "K_0 = {}", fmt_rows(&f.k[0]));
        let _ = writeln!(text, "g_0 = {:?}", f.g[0]);
        let _ = writeln!(text, "L_0 = {}", fmt_rows(&f.l[0]));
    }

    prepare_out(&args.common.out)?;
    write_report(&args.common.out, "synth", &report, &text)?;
    Ok(text)
}

#[derive(Debug, Serialize)]
struct RolloutCost {
    rollout_index: usize,
    seed: u64,
    diverged: bool,
    cost: Option<CostReport>,
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    controller: &'static str,
    reference: &'static str,
    horizon: usize,
    burn_in: usize,
    base_seed: u64,
    n_rollouts: usize,
    n_diverged: usize,
    mean_total_cost: Option<f64>,
    mean_average_cost_per_stage: Option<f64>,
    rollouts: Vec<RolloutCost>,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String, Failure> {
    let (problem, horizon) = load(&args.common)?;
    let horizon = horizon.ok_or_else(|| invalid("no horizon in the problem file or on the command line"))?;
    if args.rollouts == 0 {
        return Err(invalid("rollouts must be at least 1"));
    }
    let weights = problem.weights_for(horizon)?;
    let controller = match args.controller {
        Some(ControllerArg::Finite) => ControllerKind::Finite,
        Some(ControllerArg::Steady) => ControllerKind::Steady,
        None if weights.is_constant() => ControllerKind::Steady,
        None => ControllerKind::Finite,
    };
    let (burn_in, terminal) = match controller {
        ControllerKind::Steady => (args.burn_in.unwrap_or(DEFAULT_BURN_IN), Terminal::Exclude),
        ControllerKind::Finite => (args.burn_in.unwrap_or(0), Terminal::Include),
    };
    if burn_in >= horizon {
        return Err(invalid(format!("burn-in {burn_in} must be below the horizon {horizon}")));
    }
    let reference_kind = if args.stochastic {
        ReferenceKind::StochasticOffset
    } else {
        ReferenceKind::Deterministic
    };
    let cfg = ScenarioConfig {
        model: problem.model,
        weights,
        reference: problem.reference,
        horizon,
        controller,
        reference_kind,
        base_seed: args.seed,
        n_rollouts: args.rollouts,
        filter_burn_in: DEFAULT_FILTER_BURN_IN,
    };
    let traces = Scenario::new(cfg.clone())?.run_batch_with(Execution::Parallel)?;

    let out = &args.common.out;
    prepare_out(out)?;
    let mut rollouts = Vec::with_capacity(traces.len());
    for t in &traces {
        write_trace(out, t).map_err(|e| io_failure(out, e))?;
        let cost = if t.diverged {
            None
        } else {
            Some(trace_cost(t, &cfg.weights, terminal, burn_in).map_err(Failure::from)?)
        };
        rollouts.push(RolloutCost {
            rollout_index: t.rollout_index,
            seed: t.seed,
            diverged: t.diverged,
            cost,
        });
    }
    let costs: Vec<&CostReport> = rollouts.iter().filter_map(|r| r.cost.as_ref()).collect();
    let mean = |f: fn(&CostReport) -> f64| {
        (!costs.is_empty()).then(|| costs.iter().map(|c| f(c)).sum::<f64>() / costs.len() as f64)
    };
    let n_diverged = rollouts.iter().filter(|r| r.diverged).count();
    let report = SimulateReport {
        controller: match controller {
            ControllerKind::Finite => "finite",
            ControllerKind::Steady => "steady",
        },
        reference: match reference_kind {
            ReferenceKind::Deterministic => "deterministic",
            ReferenceKind::StochasticOffset => "stochastic_offset",
        },
        horizon,
        burn_in,
        base_seed: args.seed,
        n_rollouts: args.rollouts,
        n_diverged,
        mean_total_cost: mean(|c| c.total_cost),
        mean_average_cost_per_stage: mean(|c| c.average_cost_per_stage),
        rollouts,
    };

    let mut text = String::new();
    let _ = writeln!(text, "controller = {}", report.controller);
    let _ = writeln!(text, "reference = {}", report.reference);
    let _ = writeln!(text, "horizon = {horizon}");
    let _ = writeln!(text, "burn_in = {burn_in}");
    let _ = writeln!(text, "rollouts = {} (seeds {}..)", report.n_rollouts, report.base_seed);
    let _ = writeln!(text, "diverged = {n_diverged}");
    if let Some(v) = report.mean_total_cost {
        let _ = writeln!(text, "mean_total_cost = {v:?}");
    }
    if let Some(v) = report.mean_average_cost_per_stage {
        let _ = writeln!(text, "mean_average_cost_per_stage = {v:?}");
    }
    write_report(out, "cost_report", &report, &text)?;

    if n_diverged > 0 {
        let mut f = Failure::new(
            EXIT_DIVERGED,
            "non_finite_state",
            format!("{n_diverged} of {} rollouts diverged", report.n_rollouts),
        );
        f.seeds = report.rollouts.iter().filter(|r| r.diverged).map(|r| r.seed).collect();
        return Err(f);
    }
    Ok(text)
}

#[derive(Debug, Serialize)]
struct GapDocument {
    #[serde(flatten)]
    report: GapReport,
    verdict: GapVerdict,
    horizon: usize,
    base_seed: u64,
}

pub fn cmd_gap(args: &GapArgs) -> Result<String, Failure> {
    let (problem, horizon) = load(&args.common)?;
    if problem.reference.offset_cov.is_none() {
        return Err(Failure {
            path: Some("reference.offset_cov".into()),
            ..invalid("gap analysis needs reference.offset_cov")
        });
    }
    let horizon = horizon.ok_or_else(|| invalid("no horizon in the problem file or on the command line"))?;
    if args.rollouts < 2 {
        return Err(invalid("gap analysis needs at least 2 rollouts"));
    }
    if args.burn_in >= horizon {
        return Err(invalid(format!("burn-in {} must be below the horizon {horizon}", args.burn_in)));
    }
    let weights = problem.weights_for(horizon)?;
    if !weights.is_constant() {
        return Err(invalid("gap analysis needs constant weights"));
    }
    let cfg = ScenarioConfig {
        model: problem.model,
        weights,
        reference: problem.reference,
        horizon,
        controller: ControllerKind::Steady,
        reference_kind: ReferenceKind::StochasticOffset,
        base_seed: args.seed,
        n_rollouts: args.rollouts,
        filter_burn_in: DEFAULT_FILTER_BURN_IN,
    };
    let acc = run_gap(&cfg, args.burn_in, GAP_CHUNK, Execution::Parallel)?;
    let report = acc.report();
    let verdict = report.verdict();

    let mut text = String::new();
    let _ = writeln!(text, "predicted_gap = {:?}", report.predicted_gap);
    let _ = writeln!(text, "empirical_gap = {:?} (std_error {:e})", report.empirical_gap, report.std_error);
    let _ = writeln!(
        text,
        "cross_term_state = {:?} (std_error {:e})",
        report.cross_term_state, report.cross_term_state_std_error
    );
    let _ = writeln!(
        text,
        "cross_term_control = {:?} (std_error {:e})",
        report.cross_term_control, report.cross_term_control_std_error
    );
    let _ = writeln!(text, "mean_cost_stochastic = {:?}", report.mean_cost_stochastic);
    let _ = writeln!(text, "mean_cost_deterministic = {:?}", report.mean_cost_deterministic);
    let _ = writeln!(text, "rollouts = {}, horizon = {horizon}, burn_in = {}", report.n_rollouts, report.burn_in);
    let _ = writeln!(text, "verdict = {}", serde_json::to_value(verdict).unwrap().as_str().unwrap_or_default());

    let out = &args.common.out;
    prepare_out(out)?;
    let doc = GapDocument {
        report,
        verdict,
        horizon,
        base_seed: args.seed,
    };
    write_report(out, "gap_report", &doc, &text)?;
    let mut csv = String::from("rollout,seed,average_cost_stochastic,average_cost_deterministic,difference\n");
    for (i, (s, d)) in acc.per_rollout().enumerate() {
        let _ = writeln!(csv, "{i},{},{s:?},{d:?},{:?}", args.seed + i as u64, s - d);
    }
    let csv_path = out.join("gap_rollouts.csv");
    fs::write(&csv_path, csv).map_err(|e| io_failure(&csv_path, e))?;

    if verdict == GapVerdict::Violation {
        return Err(Failure::new(
            EXIT_GAP_VIOLATION,
            "gap_violation",
            format!(
                "empirical gap {:?} differs from predicted {:?} by more than 3 standard errors while cross terms vanish",
                doc.report.empirical_gap, doc.report.predicted_gap
            ),
        ));
    }
    Ok(text)
}

#[derive(Debug, Serialize)]
struct VerifyInstance {
    index: usize,
    seed: u64,
    n: usize,
    m: usize,
    horizon: usize,
    max_u_deviation: f64,
    cost_deviation: f64,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    instances: usize,
    master_seed: u64,
    tol: f64,
    worst_u_deviation: f64,
    worst_cost_deviation: f64,
    failing_seeds: Vec<u64>,
    results: Vec<VerifyInstance>,
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<String, Failure> {
    if args.instances == 0 {
        return Err(invalid("instances must be at least 1"));
    }
    if args.tol.is_nan() || args.tol < 0.0 {
        return Err(invalid("tol must be a non-negative number"));
    }
    let entries = sweep(args.instances, args.seed, Execution::Parallel)?;
    let results: Vec<VerifyInstance> = entries
        .iter()
        .map(|e| VerifyInstance {
            index: e.index,
            seed: e.seed,
            n: e.n,
            m: e.m,
            horizon: e.horizon,
            max_u_deviation: e.comparison.max_u_deviation,
            cost_deviation: e.comparison.cost_deviation,
        })
        .collect();
    let worst_u = results.iter().map(|r| r.max_u_deviation).fold(0.0, f64::max);
    let worst_cost = results.iter().map(|r| r.cost_deviation).fold(0.0, f64::max);
    let failing_seeds: Vec<u64> = results
        .iter()
        .filter(|r| r.max_u_deviation > args.tol || r.cost_deviation > args.tol)
        .map(|r| r.seed)
        .collect();
    let report = VerifyReport {
        instances: args.instances,
        master_seed: args.seed,
        tol: args.tol,
        worst_u_deviation: worst_u,
        worst_cost_deviation: worst_cost,
        failing_seeds,
        results,
    };

    let mut text = String::new();
    let _ = writeln!(text, "instances = {} (master seed {})", report.instances, report.master_seed);
    let _ = writeln!(text, "worst_u_deviation = {:e}", worst_u);
    let _ = writeln!(text, "worst_cost_deviation = {:e}", worst_cost);
    let _ = writeln!(text, "tol = {:e}", args.tol);
    let _ = writeln!(text, "failing = {}", report.failing_seeds.len());
    if let Some(out) = &args.out {
        prepare_out(out)?;
        write_report(out, "verify", &report, &text)?;
    }
    if !report.failing_seeds.is_empty() {
        print!("{text}");
        let mut f = Failure::new(
            EXIT_VERIFY,
            "verification",
            format!("{} of {} instances exceed tol {:e}", report.failing_seeds.len(), report.instances, args.tol),
        );
        f.seeds = report.failing_seeds;
        return Err(f);
    }
    Ok(text)
}

pub fn cmd_fixtures(args: &FixturesArgs) -> Result<String, Failure> {
    let dir = args.dir.clone().unwrap_or_else(fixtures::default_dir);
    let outcomes = fixtures::fixture_check(&dir)?;
    let mut text = String::new();
    for o in &outcomes {
        let _ = writeln!(
            text,
            "{} {:<40} expected {:<24?} actual {:<24?} tol {:e} [{}]",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.expected,
            o.actual,
            o.tol,
            o.provenance
        );
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name.as_str()).collect();
    if !failed.is_empty() {
        print!("{text}");
        return Err(Failure::new(EXIT_VERIFY, "fixtures", format!("failing entries: {}", failed.join(", "))));
    }
    Ok(text)
}
