//! `movpi`: solve, reconstruct, verify, refine and sweep runs described by
//! a TOML manifest.

mod commands;
mod error;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;
use crate::manifest::RunManifest;

#[derive(Parser)]
#[command(name = "movpi", version, about = "Point interactions moving along prescribed curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory, overriding `outputs.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the charges; writes CSV and a JSON report.
    Solve(Common),
    /// Solve and rebuild the wavefunction at grid times.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Comma-separated grid times; defaults to both ends.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
    },
    /// Run the invariant suite against the manifest configuration.
    Verify(Common),
    /// Refinement study over several step counts.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Comma-separated step counts; defaults to N, 2N, 4N.
        #[arg(long = "n-list", value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
    },
    /// Solve every point of the manifest's `[sweep]` axis.
    Sweep(Common),
}

fn setup(common: &Common) -> Result<(RunManifest, PathBuf), CliError> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Manifest(format!("--threads: {e}")))?;
    }
    let manifest = RunManifest::load(&common.manifest)?;
    let out = common.out.clone().unwrap_or_else(|| manifest.outputs.directory.clone());
    Ok((manifest, out))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(c) => {
            let (m, out) = setup(&c)?;
            commands::solve(&m, &out).map(|_| ())
        }
        Command::Reconstruct { common, times } => {
            let (m, out) = setup(&common)?;
            commands::reconstruct(&m, times.as_deref(), &out)
        }
        Command::Verify(c) => {
            let (m, out) = setup(&c)?;
            commands::verify(&m, &out)
        }
        Command::Converge { common, n_list } => {
            let (m, out) = setup(&common)?;
            commands::converge(&m, n_list.as_deref(), &out)
        }
        Command::Sweep(c) => {
            let (m, out) = setup(&c)?;
            commands::sweep(&m, &out)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
