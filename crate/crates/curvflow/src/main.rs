use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use curvflow::commands::{cmd_flow, cmd_oracle, cmd_solve, FlowFaults};
use curvflow::validate::{format_table, run_suites, worker_count, Fault, Level};
use curvflow::CliError;

#[derive(Parser)]
#[command(name = "curvflow", version, about = "Anisotropic expanding curvature flows and Minkowski-type problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Stencil,
}

#[derive(Subcommand)]
enum Command {
    /// Run a flow from a JSON config; writes history.csv, snapshots and summary.json.
    Flow {
        config: PathBuf,
        /// Poison the right-hand side from this step on (failure-path testing).
        #[arg(long, hide = true)]
        inject_nan_step: Option<usize>,
    },
    /// Solve a stationary problem from a JSON config; writes solve_report.json and shape.csv.
    Solve { config: PathBuf },
    /// Closed-form sphere radius Theta(r, t) and blow-up time.
    #[command(allow_negative_numbers = true)]
    Oracle {
        r: f64,
        t: f64,
        alpha: f64,
        delta: f64,
        beta: f64,
        eta: f64,
    },
    /// Run the invariant suites and print a pass/fail table.
    Validate {
        level: LevelArg,
        #[arg(long, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Flow {
            config,
            inject_nan_step,
        } => match cmd_flow(&config, FlowFaults { nan_at_step: inject_nan_step }) {
            Ok(s) => {
                println!("verdict: {}", serde_json::to_string(&s.verdict).unwrap_or_default());
                println!("steps: {}  t: {:.6e}  final osc: {:.3e}", s.steps, s.t, s.final_osc);
                if let Some(ts) = s.t_star_fit {
                    println!("fitted T*: {ts:.6e}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Solve { config } => match cmd_solve(&config) {
            Ok(s) => {
                let r = &s.report;
                println!("regime: {} ({})", serde_json::to_string(&r.regime).unwrap_or_default(), r.regime_description);
                println!("residual: {:.3e}  c0: {:.6e}  iterations: {}", r.residual, r.c0, r.iterations);
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Oracle {
            r,
            t,
            alpha,
            delta,
            beta,
            eta,
        } => match cmd_oracle(r, t, alpha, delta, beta, eta) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Validate { level, inject_fault } => {
            let level = match level {
                LevelArg::Quick => Level::Quick,
                LevelArg::Full => Level::Full,
            };
            let fault = inject_fault.map(|f| match f {
                FaultArg::Stencil => Fault::Stencil,
            });
            let results = run_suites(level, worker_count(), fault);
            print!("{}", format_table(&results));
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
            if failed.is_empty() {
                println!("all {} suites passed", results.len());
                ExitCode::SUCCESS
            } else {
                println!("failed: {}", failed.join(", "));
                ExitCode::from(4)
            }
        }
    }
}
