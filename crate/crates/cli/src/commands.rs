//! The subcommands. Each returns a report plus the process exit code.

use std::fmt::Write as _;
use std::path::PathBuf;

use opacity_core::baseline::{baseline_sweep, mean_policy_entropy_bits};
use opacity_core::grid::{Cell, GridSpec};
use opacity_core::hmm::{backward_messages, forward_messages, likelihood_given_start};
use opacity_core::mdp::{evaluate_value, Horizon, InducedChain, PolicyParams};
use opacity_core::objective::{
    evaluate_entropy, exact_entropy_with, for_each_sequence, sequence_evidence, EntropyMethod, GradientEngine, Objective,
};
use opacity_core::random::random_theta;
use opacity_core::rng;
use opacity_core::solver::{lagrangian_gradient, solve_with, OpacityProblem, RunStatus, Silent, SolverConfig, TrainLog};
use serde::Serialize;

use crate::config::{ExperimentConfig, LoadedConfig, Mode, Model};
use crate::error::{exit, CliError, CliResult};
use crate::mdp_doc::MdpDocument;
use crate::output::{with_suffix, write_json, write_text, CsvLog, RunSummary, ThetaDocument};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<Mode>,
    /// Fill `elapsed_ms` with wall-clock time (breaks byte-identical reruns).
    pub timing: bool,
    /// Test hook: perturb the analytic gradient so grad-check must fail.
    pub corrupt_gradient: bool,
}

#[derive(Debug)]
pub struct Outcome<R> {
    pub report: R,
    pub exit_code: i32,
}

fn load(opts: &RunOptions) -> CliResult<LoadedConfig> {
    let mut loaded = ExperimentConfig::load(&opts.config)?;
    if let Some(seed) = opts.seed {
        loaded.config.solver.seed = seed;
    }
    if let Some(mode) = opts.mode {
        loaded.config.solver.mode = mode;
    }
    loaded.config.validate()?;
    Ok(loaded)
}

/// Every logged entropy must lie in `[0, upper]`.
fn assert_bounds(log: &TrainLog, upper: f64) -> CliResult<()> {
    let finals = log.final_eval.iter().map(|f| f.entropy);
    for h in log.records.iter().map(|r| r.entropy).chain(finals) {
        if h.is_finite() && !(0.0..=upper).contains(&h) {
            return Err(opacity_core::Error::BoundViolation { value: h, upper }.into());
        }
    }
    Ok(())
}

fn solve_exit_code(log: &TrainLog) -> i32 {
    match log.status {
        RunStatus::Aborted { .. } => exit::NUMERICAL,
        _ if !log.feasible() => exit::INFEASIBLE,
        RunStatus::IterationLimit => exit::NOT_CONVERGED,
        _ => exit::FEASIBLE,
    }
}

pub fn run_solve(opts: &RunOptions) -> CliResult<Outcome<RunSummary>> {
    let loaded = load(opts)?;
    let (model, problem) = loaded.problem()?;
    let config = loaded.config.solver.to_config();
    let prefix = loaded.output_prefix(opts.out.as_deref());

    let mut csv = CsvLog::create(&with_suffix(&prefix, ".csv"), opts.timing)?;
    let log = solve_with(&problem, &config, &mut csv)?;
    csv.finish()?;
    assert_bounds(&log, problem.objective.upper_bound(problem.mdp.initial()))?;

    write_json(&with_suffix(&prefix, ".theta.json"), &ThetaDocument::new(&model, &log.final_theta))?;
    let summary = RunSummary::from_log(&log, problem.objective.name(), &loaded.config.hash());
    write_json(&with_suffix(&prefix, ".summary.json"), &summary)?;
    Ok(Outcome { exit_code: solve_exit_code(&log), report: summary })
}

/// Finite-difference step and tolerance for `grad-check`.
pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const REL_FLOOR: f64 = 1e-6;

pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub dim: usize,
    pub step: f64,
    pub lambda: f64,
    pub tolerance: f64,
    pub entropy_max_rel_error: f64,
    pub value_max_rel_error: f64,
    pub lagrangian_max_rel_error: f64,
    pub pass: bool,
}

/// The parameters self-checks evaluate at: random, derived from the seed.
fn check_theta(problem: &OpacityProblem, seed: u64) -> PolicyParams {
    let mut g = rng::stream(seed, "check-theta", 0);
    random_theta(&mut g, problem.mdp.n_states(), problem.mdp.n_actions(), 1.0)
}

fn exact_config(config: &SolverConfig) -> SolverConfig {
    SolverConfig {
        entropy_mode: opacity_core::solver::EntropyMode::Exact,
        value_mode: opacity_core::solver::ValueMode::Exact,
        ..config.clone()
    }
}

fn value_horizon(config: &SolverConfig) -> Horizon {
    if config.infinite_value {
        Horizon::Infinite
    } else {
        Horizon::Finite(config.horizon)
    }
}

pub fn run_grad_check(opts: &RunOptions) -> CliResult<Outcome<GradCheckReport>> {
    let loaded = load(opts)?;
    let (_, problem) = loaded.problem()?;
    let config = exact_config(&loaded.config.solver.to_config());
    let theta = check_theta(&problem, config.seed);
    let lambda = config.lambda0;

    let mut eval = lagrangian_gradient(&problem, &theta, lambda, &config, 0)?;
    if opts.corrupt_gradient {
        eval.entropy.grad[0] += 1e-3;
        eval.grad[0] += 1e-3;
    }

    let method = EntropyMethod::Exact { cap: config.enumeration_cap };
    let entropy_at = |t: &PolicyParams| -> CliResult<f64> {
        let chain = InducedChain::new(&problem.mdp, t)?;
        Ok(evaluate_entropy(&problem.mdp, &problem.obs, &chain, &problem.objective, config.horizon, method)?.value)
    };
    let value_at =
        |t: &PolicyParams| -> CliResult<f64> { Ok(evaluate_value(&problem.mdp, t, value_horizon(&config), &problem.value_start)?.value) };

    let d = theta.dim();
    let (mut fd_h, mut fd_v) = (vec![0.0; d], vec![0.0; d]);
    for c in 0..d {
        let mut plus = theta.clone();
        plus.as_mut_slice()[c] += FD_STEP;
        let mut minus = theta.clone();
        minus.as_mut_slice()[c] -= FD_STEP;
        fd_h[c] = (entropy_at(&plus)? - entropy_at(&minus)?) / (2.0 * FD_STEP);
        fd_v[c] = (value_at(&plus)? - value_at(&minus)?) / (2.0 * FD_STEP);
    }
    // the constant -lambda * delta drops out of the difference
    let fd_l: Vec<f64> = fd_h.iter().zip(&fd_v).map(|(h, v)| h + lambda * v).collect();

    let entropy_err = max_rel_error(&eval.entropy.grad, &fd_h);
    let value_err = max_rel_error(&eval.value_grad, &fd_v);
    let lagrangian_err = max_rel_error(&eval.grad, &fd_l);
    let pass = [entropy_err, value_err, lagrangian_err].iter().all(|&e| e <= FD_TOLERANCE);
    let report = GradCheckReport {
        dim: d,
        step: FD_STEP,
        lambda,
        tolerance: FD_TOLERANCE,
        entropy_max_rel_error: entropy_err,
        value_max_rel_error: value_err,
        lagrangian_max_rel_error: lagrangian_err,
        pass,
    };
    Ok(Outcome { exit_code: if pass { exit::FEASIBLE } else { exit::NUMERICAL }, report })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    /// The measured quantity (an error or a count).
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub const EVIDENCE_TOLERANCE: f64 = 1e-10;
pub const ALPHA_BETA_TOLERANCE: f64 = 1e-10;
pub const START_END_TOLERANCE: f64 = 1e-12;
pub const POSTERIOR_TOLERANCE: f64 = 1e-12;
pub const ENGINE_TOLERANCE: f64 = 1e-10;
pub const SAMPLED_TRIALS: u64 = 20;
/// Trials (out of [`SAMPLED_TRIALS`]) that must land within 3 standard errors.
pub const SAMPLED_REQUIRED: u64 = 19;

pub fn run_oracle_check(opts: &RunOptions) -> CliResult<Outcome<OracleReport>> {
    let loaded = load(opts)?;
    let (_, problem) = loaded.problem()?;
    let config = loaded.config.solver.to_config();
    let theta = check_theta(&problem, config.seed);
    let (mdp, obs) = (&problem.mdp, &problem.obs);
    let chain = InducedChain::new(mdp, &theta)?;
    let mu0 = mdp.initial();
    let n = mdp.n_states();
    let horizon = config.horizon;

    let mut total = 0.0;
    let mut alpha_beta: f64 = 0.0;
    let mut start_end: f64 = 0.0;
    let mut posterior: f64 = 0.0;
    for_each_sequence(obs, horizon, config.enumeration_cap, |y| {
        let ft = forward_messages(&chain, obs, mu0, y)?;
        let bt = backward_messages(&chain, obs, y)?;
        let py = ft.seq_prob();
        total += py;
        for t in 0..=horizon {
            let s: f64 = (0..n).map(|i| ft.alpha(t, i) * bt.beta(t, i)).sum();
            alpha_beta = alpha_beta.max((s - py).abs());
        }
        let mut from_start = 0.0;
        for i in 0..n {
            from_start += mu0[i] * likelihood_given_start(&bt, obs, y, i)?.0;
        }
        start_end = start_end.max((from_start - py).abs());
        if py > 0.0 {
            for objective in [&problem.objective, &Objective::InitialState] {
                let ev = sequence_evidence(&chain, obs, mu0, objective, y, GradientEngine::ForwardMode)?;
                let sum: f64 = ev.posterior.iter().sum();
                let in_range = ev.posterior.iter().all(|p| (-POSTERIOR_TOLERANCE..=1.0 + POSTERIOR_TOLERANCE).contains(p));
                let err = if in_range { (sum - 1.0).abs() } else { f64::INFINITY };
                posterior = posterior.max(err);
            }
        }
        Ok(())
    })?;

    let cap = config.enumeration_cap;
    let forward = exact_entropy_with(&chain, obs, mu0, &problem.objective, horizon, cap, GradientEngine::ForwardMode)?;
    let adjoint = exact_entropy_with(&chain, obs, mu0, &problem.objective, horizon, cap, GradientEngine::Adjoint)?;
    let engine_gap = forward
        .grad
        .iter()
        .zip(&adjoint.grad)
        .map(|(a, b)| (a - b).abs())
        .fold((forward.value - adjoint.value).abs(), f64::max);

    let mut within = 0;
    for trial in 0..SAMPLED_TRIALS {
        let seed = rng::derive_seed(config.seed, "oracle-sampled", trial);
        let method = EntropyMethod::Sampled { samples: config.eval_samples, seed };
        let est = evaluate_entropy(mdp, obs, &chain, &problem.objective, horizon, method)?;
        if (est.value - forward.value).abs() <= 3.0 * est.std_err {
            within += 1;
        }
    }

    let le = |name, value: f64, tolerance| Check { name, pass: value <= tolerance, value, tolerance };
    let checks = vec![
        le("evidence-normalization", (total - 1.0).abs(), EVIDENCE_TOLERANCE),
        le("alpha-beta-constant", alpha_beta, ALPHA_BETA_TOLERANCE),
        le("start-end-evidence", start_end, START_END_TOLERANCE),
        le("posterior-normalization", posterior, POSTERIOR_TOLERANCE),
        le("engine-agreement", engine_gap, ENGINE_TOLERANCE),
        Check {
            name: "sampled-vs-exact",
            pass: within >= SAMPLED_REQUIRED,
            value: within as f64,
            tolerance: SAMPLED_REQUIRED as f64,
        },
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(Outcome { exit_code: if pass { exit::FEASIBLE } else { exit::NUMERICAL }, report: OracleReport { checks, pass } })
}

pub const BASELINE_HEADER: &str = "method,tau,policy_entropy,opacity_entropy,opacity_stderr,value,feasible";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: &'static str,
    pub tau: Option<f64>,
    pub policy_entropy: f64,
    pub opacity_entropy: f64,
    pub opacity_std_err: f64,
    pub value: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub delta: f64,
    pub rows: Vec<SweepRow>,
    pub csv: PathBuf,
}

impl SweepReport {
    pub fn primal_dual(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.method == "primal-dual")
    }

    pub fn baseline_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.method == "entropy-regularized")
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(BASELINE_HEADER);
    out.push('\n');
    for r in rows {
        let tau = r.tau.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method, tau, r.policy_entropy, r.opacity_entropy, r.opacity_std_err, r.value, r.feasible
        );
    }
    out
}

pub fn run_baseline_sweep(opts: &RunOptions) -> CliResult<Outcome<SweepReport>> {
    let loaded = load(opts)?;
    let section =
        loaded.config.baseline.clone().ok_or_else(|| CliError::Config("baseline-sweep needs a [baseline] section".into()))?;
    let (_, problem) = loaded.problem()?;
    let config = loaded.config.solver.to_config();
    let (mdp, obs) = (&problem.mdp, &problem.obs);
    let method = match loaded.config.solver.mode {
        Mode::Exact => EntropyMethod::Exact { cap: config.enumeration_cap },
        Mode::Sampled => {
            EntropyMethod::Sampled { samples: config.eval_samples, seed: rng::derive_seed(config.seed, "baseline-entropy", 0) }
        }
    };
    let upper = problem.objective.upper_bound(mdp.initial());
    let base = section.to_config(config.seed);
    let mut rows = Vec::new();
    for row in baseline_sweep(mdp, obs, &section.taus, config.horizon, &problem.objective, &base, method)? {
        if !(0.0..=upper).contains(&row.opacity_entropy) {
            return Err(opacity_core::Error::BoundViolation { value: row.opacity_entropy, upper }.into());
        }
        rows.push(SweepRow {
            method: "entropy-regularized",
            tau: Some(row.tau),
            policy_entropy: row.policy_entropy,
            opacity_entropy: row.opacity_entropy,
            opacity_std_err: row.opacity_std_err,
            value: row.value,
            feasible: row.value >= config.delta - opacity_core::solver::FEASIBILITY_SLACK,
        });
    }

    let log = solve_with(&problem, &config, &mut Silent)?;
    assert_bounds(&log, upper)?;
    let mut exit_code = exit::FEASIBLE;
    match &log.final_eval {
        Some(fin) => rows.push(SweepRow {
            method: "primal-dual",
            tau: None,
            policy_entropy: mean_policy_entropy_bits(mdp, &log.final_theta)?,
            opacity_entropy: fin.entropy,
            opacity_std_err: fin.entropy_std_err,
            value: fin.value,
            feasible: fin.feasible,
        }),
        None => exit_code = exit::NUMERICAL,
    }

    let prefix = loaded.output_prefix(opts.out.as_deref());
    let csv = with_suffix(&prefix, ".baseline.csv");
    write_text(&csv, &sweep_csv(&rows))?;
    Ok(Outcome { exit_code, report: SweepReport { delta: config.delta, rows, csv } })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildReport {
    pub mdp_document: PathBuf,
    /// Text picture of the grid, when the model is a grid.
    pub layout: Option<String>,
}

/// One line per row, north at the top. Each cell shows its sensor symbol
/// (or `.`) followed by `S` secret, `G` goal, `I` initial support (or `.`).
pub fn render_layout(spec: &GridSpec) -> String {
    let mut out = String::new();
    for y in (0..spec.height).rev() {
        let cells: Vec<String> = (0..spec.width)
            .map(|x| {
                let c = Cell::new(x, y);
                let sensor = spec.sensors.iter().find(|s| s.cells.contains(&c)).map_or(".", |s| s.symbol.as_str());
                let role = if spec.secret_cells.contains(&c) {
                    "S"
                } else if spec.goal_cells.contains(&c) {
                    "G"
                } else if spec.initial.iter().any(|(i, w)| *i == c && *w > 0.0) {
                    "I"
                } else {
                    "."
                };
                format!("{sensor}{role}")
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    out
}

pub fn run_build_grid(opts: &RunOptions) -> CliResult<Outcome<BuildReport>> {
    let loaded = load(opts)?;
    let model: Model = loaded.model()?;
    let prefix = loaded.output_prefix(opts.out.as_deref());
    let path = with_suffix(&prefix, ".mdp.toml");
    write_text(&path, &MdpDocument::from_model(&model).to_toml())?;
    let layout = match &loaded.config.model.grid {
        Some(g) => {
            let text = render_layout(&g.to_spec()?);
            write_text(&with_suffix(&prefix, ".layout.txt"), &text)?;
            Some(text)
        }
        None => None,
    };
    Ok(Outcome { exit_code: exit::FEASIBLE, report: BuildReport { mdp_document: path, layout } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_picture() {
        let text = render_layout(&GridSpec::default_layout());
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 6);
        // bottom row holds the start corner and the southern sensor
        assert_eq!(rows[5], ".I .. g. g. .. ..");
        assert_eq!(rows[2], "b. b. .S .G y. y.");
    }

    #[test]
    fn exit_codes_follow_status() {
        assert_eq!(max_rel_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((max_rel_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
        assert!((max_rel_error(&[1e-9], &[0.0]) - 1e-3).abs() < 1e-15);
    }
}
