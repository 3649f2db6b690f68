use clap::{Parser, Subcommand};
use ddonet_cli::commands;
use ddonet_cli::{CliError, CliResult, Run, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ddonet",
    version,
    about = "Domain decomposition with classical and operator-network subdomain solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate subdomain datasets.
    GenData,
    /// Train one net per dataset.
    Train,
    /// Run the configured coupling scheme.
    Solve,
    /// Compare the monolithic solve with the configured variants.
    Bench,
    /// Write the fields of the last solve as VTK files.
    ExportVtk,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::config("--config PATH is required"))?;
    let run = Run::new(RunConfig::load(&path)?, cli.seed, cli.out);
    match cli.command {
        Command::GenData => commands::gen_data(&run).map(drop),
        Command::Train => commands::train_cmd(&run).map(drop),
        Command::Solve => commands::solve(&run).map(drop),
        Command::Bench => commands::bench(&run).map(drop),
        Command::ExportVtk => commands::export_vtk(&run).map(drop),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.line());
            ExitCode::FAILURE
        }
    }
}
