use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use opacity_cli::commands::{self, RunOptions};
use opacity_cli::config::Mode;
use opacity_cli::{exit, CliResult};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "opacity", version, about = "Opacity-maximizing policy synthesis under partial observation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the primal-dual solver and write the CSV log plus JSON sidecars.
    Solve(Common),
    /// Compare analytic gradients against central finite differences.
    GradCheck(Common),
    /// Run the message-passing and estimator consistency checks.
    OracleCheck(Common),
    /// Sweep the entropy-regularized baseline and compare with the solver.
    BaselineSweep(Common),
    /// Dump the configured model as an MDP document (and grid picture).
    BuildGrid(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Sampled,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the entropy mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Record wall-clock time in the elapsed_ms column.
    #[arg(long)]
    timing: bool,
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

impl From<Common> for RunOptions {
    fn from(c: Common) -> Self {
        RunOptions {
            config: c.config,
            seed: c.seed,
            out: c.out,
            mode: c.mode.map(|m| match m {
                ModeArg::Exact => Mode::Exact,
                ModeArg::Sampled => Mode::Sampled,
            }),
            timing: c.timing,
            corrupt_gradient: c.corrupt_gradient,
        }
    }
}

fn report<R: Serialize>(outcome: commands::Outcome<R>) -> i32 {
    println!("{}", serde_json::to_string_pretty(&outcome.report).expect("plain data serializes"));
    outcome.exit_code
}

fn run(command: Command) -> CliResult<i32> {
    Ok(match command {
        Command::Solve(c) => report(commands::run_solve(&c.into())?),
        Command::GradCheck(c) => report(commands::run_grad_check(&c.into())?),
        Command::OracleCheck(c) => report(commands::run_oracle_check(&c.into())?),
        Command::BaselineSweep(c) => report(commands::run_baseline_sweep(&c.into())?),
        Command::BuildGrid(c) => {
            let outcome = commands::run_build_grid(&c.into())?;
            if let Some(layout) = &outcome.report.layout {
                print!("{layout}");
            }
            println!("wrote {}", outcome.report.mdp_document.display());
            outcome.exit_code
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::FEASIBLE };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = run(cli.command).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
