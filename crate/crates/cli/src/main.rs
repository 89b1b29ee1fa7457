use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod summary;

use commands::Failure;

/// Simulator and verification suites for the regularized
/// chemotaxis-Navier-Stokes system on the unit square.
///
/// Exit status: 0 when every verdict passes, 1 on a failed verdict,
/// 2 on a configuration error, 3 on a runtime or solver error.
#[derive(Parser, Debug)]
#[command(name = "chns", version)]
struct Cli {
    /// Output directory; overrides `out_dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the solver and check the a priori bounds.
    /// Writes diagnostics.csv, report.txt, the snapshots and the manifest.
    Simulate { config: PathBuf },
    /// Calibrate the Trudinger-Moser constant. Writes mt-calibration.txt.
    MtCheck { config: PathBuf },
    /// Weak-form residuals on a stored trajectory plus the heat
    /// refinement study. Writes weakform.csv.
    WeakCheck { config: PathBuf, trajectory: PathBuf },
    /// Run the eps family. Writes eps-study.csv and eps-study-members.txt.
    EpsStudy { config: PathBuf },
    /// Summarize every result file found in a directory.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.as_deref();
    let outcome = match &cli.command {
        Command::Simulate { config } => commands::simulate(config, out),
        Command::MtCheck { config } => commands::mt_check(config, out),
        Command::WeakCheck { config, trajectory } => commands::weak_check(config, trajectory, out),
        Command::EpsStudy { config } => commands::eps_study(config, out),
        Command::Report { dir } => summary::report(dir),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("chns: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("chns: {msg}");
            ExitCode::from(3)
        }
    }
}
