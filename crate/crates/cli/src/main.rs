use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

use commands::{CommandError, Outcome};

/// Term-by-term verification of Ito-Wentzell-Lions chain rules.
#[derive(Debug, Parser)]
#[command(name = "itolions", version)]
struct Cli {
    /// Worker threads for replications (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a config's ladder and check its tolerances.
    Verify(RunArgs),
    /// As `verify`, and also write convergence.csv with fitted rates.
    Converge(RunArgs),
    /// Run a built-in suite: projection, classic, full, conditional or ablation.
    Oracle {
        suite: String,
        #[command(flatten)]
        fault: FaultArg,
    },
    /// Finite-difference Lions derivatives of a functional on a sampled cloud.
    ProjectDeriv {
        #[arg(long)]
        config: PathBuf,
        /// Particle index `j`.
        #[arg(long, default_value_t = 0)]
        particle: usize,
        /// Second particle `k` for the second derivative (default: `j`).
        #[arg(long)]
        other: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Parent directory; each run creates a timestamped subdirectory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    fault: FaultArg,
}

#[derive(Debug, Args)]
struct FaultArg {
    /// Test hook: scale one term after evaluation, as TERM=FACTOR.
    #[arg(long = "inject-fault", hide = true)]
    inject_fault: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match cli.command {
        Command::Verify(a) => commands::run(commands::Mode::Verify, &a.config, &a.out, a.seed, a.fault.inject_fault.as_deref()),
        Command::Converge(a) => {
            commands::run(commands::Mode::Converge, &a.config, &a.out, a.seed, a.fault.inject_fault.as_deref())
        }
        Command::Oracle { suite, fault } => commands::oracle(&suite, fault.inject_fault.as_deref()),
        Command::ProjectDeriv { config, particle, other } => commands::project_deriv(&config, particle, other),
    };
    match result {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(CommandError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CommandError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
