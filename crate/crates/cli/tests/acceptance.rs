//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line straight to stderr, so the lines show up even when output capture is on.

mod common;

use std::io::Write as _;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::*;
use opacity_cli::commands::{self, Outcome, SweepReport};
use opacity_cli::config::ExperimentConfig;
use opacity_cli::output::RunSummary;
use opacity_core::mdp::InducedChain;
use opacity_core::objective::{evaluate_entropy, EntropyMethod};
use opacity_core::random::random_theta;
use opacity_core::rng;
use tempfile::TempDir;

const GRAD_TOLERANCE: f64 = 1e-5;
const GRAD_MODELS: u64 = 10;
const GRAD_BUDGET: Duration = Duration::from_secs(60);

const EVIDENCE_TOLERANCE: f64 = 1e-10;
const ALPHA_BETA_TOLERANCE: f64 = 1e-10;
const START_END_TOLERANCE: f64 = 1e-12;
const MESSAGE_BUDGET: Duration = Duration::from_secs(1);

const CONSISTENCY_SAMPLES: usize = 20_000;
const CONSISTENCY_TRIALS: u64 = 100;
const CONSISTENCY_REQUIRED: usize = 95;
const CONSISTENCY_BUDGET: Duration = Duration::from_secs(120);

const DELTA: f64 = 0.3;
const LAST_STATE_MIN_ENTROPY: f64 = 0.85;
const INITIAL_STATE_MIN_ENTROPY: f64 = 0.25;
const MIN_VALUE: f64 = 0.29;
const GRID_BUDGET: Duration = Duration::from_secs(30 * 60);

const LAST_STATE_UPPER: f64 = 1.0;
/// log2 of the four start corners.
const INITIAL_STATE_UPPER: f64 = 2.0;

fn report(criterion: u32, pass: bool, detail: &str) {
    let line = format!("criterion {criterion}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{line}");
}

fn scratch() -> &'static TempDir {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().unwrap())
}

struct GridRun {
    outcome: Outcome<RunSummary>,
    csv: PathBuf,
    elapsed: Duration,
}

fn solve_shipped(name: &str) -> GridRun {
    let out = scratch().path().join(name);
    let start = Instant::now();
    let outcome = commands::run_solve(&options(&configs_dir().join(format!("{name}.toml")), &out)).expect("grid run");
    GridRun { outcome, csv: scratch().path().join(format!("{name}.csv")), elapsed: start.elapsed() }
}

fn last_state_run() -> &'static GridRun {
    static RUN: OnceLock<GridRun> = OnceLock::new();
    RUN.get_or_init(|| solve_shipped("grid_last_state"))
}

fn initial_state_run() -> &'static GridRun {
    static RUN: OnceLock<GridRun> = OnceLock::new();
    RUN.get_or_init(|| solve_shipped("grid_initial_state"))
}

fn sweep_run() -> &'static (Outcome<SweepReport>, Duration) {
    static RUN: OnceLock<(Outcome<SweepReport>, Duration)> = OnceLock::new();
    RUN.get_or_init(|| {
        let out = scratch().path().join("grid_baseline_sweep");
        let start = Instant::now();
        let outcome =
            commands::run_baseline_sweep(&options(&configs_dir().join("grid_baseline_sweep.toml"), &out)).expect("sweep");
        (outcome, start.elapsed())
    })
}

#[test]
fn criterion_1_gradient_correctness() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for seed in 1..=GRAD_MODELS {
        let (n, k, m, t) = random_dims(seed);
        for kind in ["last-state", "initial-state"] {
            let cfg = write_config(dir.path(), "c.toml", &random_config(seed, n, k, m, t, kind, ""));
            let r = commands::run_grad_check(&options(&cfg, &dir.path().join("o"))).unwrap().report;
            assert_eq!(r.tolerance, GRAD_TOLERANCE);
            worst = worst.max(r.entropy_max_rel_error);
            if r.entropy_max_rel_error > GRAD_TOLERANCE || !r.pass {
                failures.push(format!("seed {seed} {kind}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < GRAD_BUDGET;
    report(
        1,
        pass,
        &format!("{GRAD_MODELS} models x 2 objectives, worst rel err {worst:.2e}, {elapsed:.2?}, failures {failures:?}"),
    );
}

#[test]
fn criterion_2_message_passing() {
    let dir = tempfile::tempdir().unwrap();
    let mut slowest = Duration::ZERO;
    let mut worst = [0.0f64; 3];
    let mut pass = true;
    for seed in 1..=GRAD_MODELS {
        let (n, k, m, t) = random_dims(seed);
        let cfg = write_config(dir.path(), "c.toml", &random_config(seed, n, k, m, t, "last-state", "eval_samples = 1000"));
        let start = Instant::now();
        let r = commands::run_oracle_check(&options(&cfg, &dir.path().join("o"))).unwrap().report;
        slowest = slowest.max(start.elapsed());
        for (slot, (name, tol)) in [
            ("evidence-normalization", EVIDENCE_TOLERANCE),
            ("alpha-beta-constant", ALPHA_BETA_TOLERANCE),
            ("start-end-evidence", START_END_TOLERANCE),
        ]
        .into_iter()
        .enumerate()
        {
            let c = r.checks.iter().find(|c| c.name == name).unwrap();
            worst[slot] = worst[slot].max(c.value);
            pass &= c.value <= tol;
        }
    }
    pass &= slowest < MESSAGE_BUDGET;
    report(
        2,
        pass,
        &format!(
            "sum P(y)-1 {:.1e}, alpha.beta drift {:.1e}, start/end gap {:.1e}, slowest instance {slowest:.2?}",
            worst[0], worst[1], worst[2]
        ),
    );
}

#[test]
fn criterion_3_estimator_consistency() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let mut counts = Vec::new();
    for kind in ["last-state", "initial-state"] {
        let cfg = write_config(dir.path(), "c.toml", &random_config(17, 4, 2, 2, 4, kind, ""));
        let (_, problem) = ExperimentConfig::load(&cfg).unwrap().problem().unwrap();
        let theta = random_theta(&mut rng::stream(17, "acceptance-theta", 0), 4, 2, 1.0);
        let chain = InducedChain::new(&problem.mdp, &theta).unwrap();
        let eval = |method| evaluate_entropy(&problem.mdp, &problem.obs, &chain, &problem.objective, 4, method).unwrap();
        let exact = eval(EntropyMethod::Exact { cap: 1_000_000 }).value;
        let within = (0..CONSISTENCY_TRIALS)
            .filter(|&trial| {
                let seed = rng::derive_seed(17, "acceptance-trial", trial);
                let est = eval(EntropyMethod::Sampled { samples: CONSISTENCY_SAMPLES, seed });
                (est.value - exact).abs() <= 3.0 * est.std_err
            })
            .count();
        counts.push((kind, within));
    }
    let elapsed = start.elapsed();
    let pass = counts.iter().all(|(_, c)| *c >= CONSISTENCY_REQUIRED) && elapsed < CONSISTENCY_BUDGET;
    report(3, pass, &format!("within 3 se out of {CONSISTENCY_TRIALS}: {counts:?}, {elapsed:.2?}"));
}

fn final_numbers(run: &GridRun) -> (f64, f64) {
    let s = &run.outcome.report;
    (s.entropy.expect("final evaluation"), s.value.expect("final evaluation"))
}

#[test]
fn criterion_4_grid_last_state() {
    let run = last_state_run();
    let (h, v) = final_numbers(run);
    let pass = h >= LAST_STATE_MIN_ENTROPY && v >= MIN_VALUE && run.elapsed <= GRID_BUDGET;
    report(4, pass, &format!("H(Z_T|Y) = {h:.4}, V = {v:.4}, status {}, {:.1?}", run.outcome.report.status, run.elapsed));
}

#[test]
fn criterion_5_grid_initial_state() {
    let run = initial_state_run();
    let (h, v) = final_numbers(run);
    let pass = h >= INITIAL_STATE_MIN_ENTROPY && v >= MIN_VALUE && run.elapsed <= GRID_BUDGET;
    report(5, pass, &format!("H(S_0|Y) = {h:.4}, V = {v:.4}, status {}, {:.1?}", run.outcome.report.status, run.elapsed));
}

#[test]
fn criterion_6_baseline_dominance() {
    let (outcome, elapsed) = sweep_run();
    let sweep = &outcome.report;
    assert_eq!(sweep.delta, DELTA);
    let pd = sweep.primal_dual().expect("primal-dual row");
    let dominating: Vec<f64> = sweep
        .baseline_rows()
        .filter(|r| r.opacity_entropy >= pd.opacity_entropy && r.value >= DELTA)
        .filter_map(|r| r.tau)
        .collect();
    let violating: Vec<f64> = sweep.baseline_rows().filter(|r| r.value < DELTA).filter_map(|r| r.tau).collect();
    let best = sweep.baseline_rows().map(|r| r.opacity_entropy).fold(0.0, f64::max);
    let pass = dominating.is_empty() && !violating.is_empty() && *elapsed <= GRID_BUDGET;
    report(
        6,
        pass,
        &format!(
            "primal-dual H = {:.4}; best baseline H = {best:.4}; taus matching it with V >= delta {dominating:?}; taus violating delta {violating:?}; {elapsed:.1?}",
            pd.opacity_entropy
        ),
    );
}

#[test]
fn criterion_7_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = |path: &std::path::Path| path.to_str().unwrap().to_string();
    let grid = write_config(
        d,
        "grid.toml",
        "[model]\ngrid = { preset = \"default\" }\n[objective]\nkind = \"last-state\"\n\
         [solver]\nmode = \"sampled\"\neta = 1.0\nsamples = 200\neval_samples = 2000\niterations = 15\nseed = 3\n",
    );
    let exact = write_config(d, "exact.toml", &random_config(9, 4, 3, 3, 4, "initial-state", "iterations = 40"));
    let sweep = write_config(
        d,
        "sweep.toml",
        &(random_config(9, 4, 3, 3, 4, "last-state", "iterations = 20\nsamples = 300\neval_samples = 2000")
            .replace("mode = \"exact\"", "mode = \"sampled\"")
            + "\n[baseline]\ntaus = [0.01, 0.1]\n"),
    );
    let cases: Vec<(&str, PathBuf, &str)> =
        vec![("solve", grid, ".csv"), ("solve", exact, ".csv"), ("baseline-sweep", sweep, ".baseline.csv")];
    let mut mismatches = Vec::new();
    for (i, (command, cfg, suffix)) in cases.iter().enumerate() {
        let outputs: Vec<Vec<u8>> = ["a", "b"]
            .iter()
            .map(|run| {
                let prefix = d.join(format!("{i}{run}"));
                let o = opacity(&[command, "--config", &p(cfg), "--out", &p(&prefix)]);
                assert!(matches!(code(&o), 0 | 2 | 3), "{}", String::from_utf8_lossy(&o.stderr));
                std::fs::read(d.join(format!("{i}{run}{suffix}"))).unwrap()
            })
            .collect();
        if outputs[0] != outputs[1] {
            mismatches.push(format!("{command} {}", cfg.display()));
        }
    }
    for command in ["grad-check", "oracle-check"] {
        let cfg = p(&d.join("exact.toml"));
        let a = opacity(&[command, "--config", &cfg]).stdout;
        if a != opacity(&[command, "--config", &cfg]).stdout {
            mismatches.push(command.to_string());
        }
    }
    report(7, mismatches.is_empty(), &format!("{} commands rerun, mismatches {mismatches:?}", cases.len() + 2));
}

#[test]
fn criterion_8_entropy_bounds() {
    let mut checked = 0;
    let mut violations = Vec::new();
    let mut check = |label: &str, values: &[f64], upper: f64| {
        for &h in values {
            checked += 1;
            if !(0.0..=upper).contains(&h) {
                violations.push(format!("{label}: {h}"));
            }
        }
    };
    for (run, upper, label) in
        [(last_state_run(), LAST_STATE_UPPER, "last-state"), (initial_state_run(), INITIAL_STATE_UPPER, "initial-state")]
    {
        check(label, &csv_column(&run.csv, "entropy"), upper);
        check(label, &[final_numbers(run).0], upper);
    }
    let (sweep, _) = sweep_run();
    check("sweep", &csv_column(&sweep.report.csv, "opacity_entropy"), LAST_STATE_UPPER);
    report(8, violations.is_empty(), &format!("{checked} reported entropies checked, violations {violations:?}"));
}
