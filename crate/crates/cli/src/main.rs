mod args;
mod commands;
mod error;
mod io;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{Error, Result};

/// Sizes the worker pool from `TDEP_THREADS` when set.
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("TDEP_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Usage(format!("TDEP_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Usage(format!("cannot size the thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Compute { data, cost, solver, merge_marginals } => {
            commands::compute(data, cost, *solver, *merge_marginals, &mut out)
        }
        Command::Corr { data, coeff } => commands::corr(data, coeff, &mut out),
        Command::Test { data, coeff, perm } => commands::test(data, coeff, *perm, &mut out),
        Command::Power { geometry, n, runs, epsilon_grid, coeff, perm, seed, out: path } => {
            commands::power(geometry, *n, *runs, epsilon_grid, coeff, *perm, *seed, path.as_deref(), &mut out)
        }
        Command::Gauss { rho_grid, sigma1, sigma2, out: path } => {
            commands::gauss(rho_grid, *sigma1, *sigma2, path.as_deref(), &mut out)
        }
        Command::Synth { generator, out: path } => commands::synth(generator, path.as_deref(), &mut out),
    }?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tdep: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
