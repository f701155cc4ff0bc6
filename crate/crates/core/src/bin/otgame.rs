#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use otgame::experiment::{load_config, run_scenarios, run_studies, Overrides, RunError};

const EXIT_CONFIG: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;

/// Adversarial classification games with optimal-transport attack costs.
#[derive(Debug, Parser)]
#[command(name = "otgame", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve every (scenario, eps) pair of a config file.
    Solve(RunArgs),
    /// Convergence study along each scenario's (decreasing) eps list.
    Study(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file (TOML).
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated eps values replacing every scenario's list.
    #[arg(long, value_delimiter = ',')]
    eps_override: Option<Vec<f64>>,
    /// Gradient sup-norm tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Seed for random measure generators.
    #[arg(long)]
    seed: Option<u64>,
    /// Parse and check the config, then exit without solving.
    #[arg(long)]
    validate: bool,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out_dir: self.out.clone(),
            eps: self.eps_override.clone(),
            tol_grad: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
        }
    }
}

fn report(err: &RunError) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        RunError::Config(_) => ExitCode::from(EXIT_CONFIG),
        RunError::Incomplete { .. } => ExitCode::from(EXIT_CONVERGENCE),
        RunError::Solver {
            source: otgame::Error::Convergence { .. },
            ..
        } => ExitCode::from(EXIT_CONVERGENCE),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Solve(args) | Command::Study(args)) = &cli.command;
    let cfg = match load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(eps) = &args.eps_override {
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            eprintln!("error: --eps-override values must be strictly positive");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    if args.tol.is_some_and(|t| !(t > 0.0)) {
        eprintln!("error: --tol must be positive");
        return ExitCode::from(EXIT_CONFIG);
    }
    if args.validate {
        println!("{}: {} scenario(s) ok", args.config.display(), cfg.scenario.len());
        return ExitCode::SUCCESS;
    }
    let overrides = args.overrides();
    match &cli.command {
        Command::Solve(_) => match run_scenarios(&cfg, &overrides) {
            Ok(records) => {
                for r in &records {
                    eprintln!(
                        "{} eps={}: value {:.10} dual {:.10} T0 {:.10} iters {} ({:.2?})",
                        r.scenario,
                        r.eps,
                        r.report.value_eps,
                        r.report.dual_eps,
                        r.report.upper_t0,
                        r.report.iterations,
                        r.wall_time
                    );
                }
                ExitCode::SUCCESS
            }
            Err(e) => report(&e),
        },
        Command::Study(_) => match run_studies(&cfg, &overrides) {
            Ok(studies) => {
                for (id, rows) in &studies {
                    for r in rows {
                        eprintln!(
                            "{id} eps={}: value {:.10} width {:.3e} ratio {:.4}",
                            r.eps, r.value_eps, r.bracket_width, r.ratio
                        );
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => report(&e),
        },
    }
}
