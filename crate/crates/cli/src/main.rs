use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ksfem::cache::ReferenceCache;
use ksfem::run::{execute, load_config, EXIT_ERROR};
use ksfem::{init_threads, Command};

#[derive(Parser)]
#[command(
    name = "ksfem",
    version,
    about = "Finite-element Kohn-Sham solver and convergence harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ground state at one level: ground_state.json
    Solve(WithConfig),
    /// Convergence study against a reference: rates.csv, rates.gp, study.json
    Study(WithConfig),
    /// Inf-sup audit of the second-order operator: infsup.json
    Infsup(WithConfig),
    /// Physics oracles with known answers: oracles.json
    OracleCheck(OptionalConfig),
}

#[derive(Args)]
struct WithConfig {
    config: PathBuf,
    /// Override a config value, e.g. `--set scf.density_tol=1e-8`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct OptionalConfig {
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, path, overrides) = match cli.command {
        Cmd::Solve(a) => (Command::Solve, Some(a.config), a.overrides),
        Cmd::Study(a) => (Command::Study, Some(a.config), a.overrides),
        Cmd::Infsup(a) => (Command::Infsup, Some(a.config), a.overrides),
        Cmd::OracleCheck(a) => (Command::OracleCheck, a.config, a.overrides),
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_ERROR as u8);
    }
    let cfg = match load_config(command, path.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    let code = execute(command, cfg, &ReferenceCache::from_env());
    ExitCode::from(code as u8)
}
