use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xtalk_cli::{exit_code, run, Command, Overrides, RunConfig};

/// Thermal crosstalk analysis for RRAM crossbar arrays.
#[derive(Parser)]
#[command(name = "xtalk", version)]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Halve the mesh resolution.
    #[arg(long, global = true)]
    quick: bool,
    /// Linear solver relative tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve potential and temperature for one excitation.
    SolveField,
    /// Extract thermal resistances and the coupling matrix.
    Extract,
    /// Coupling versus line spacing.
    SweepSpacing,
    /// Write the coupled thermal network as a subcircuit.
    EmitNetlist {
        /// Coupling matrix file.
        #[arg(long)]
        coupling: Option<PathBuf>,
    },
    /// Repeated VMM reads with thermally accelerated drift.
    Infer {
        /// Coupling matrix file (default: bundled 3×3 network).
        #[arg(long)]
        coupling: Option<PathBuf>,
    },
    /// Print the effective configuration.
    ShowConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut overrides = Overrides { out: cli.out, jobs: cli.jobs, quick: cli.quick, tol: cli.tol, coupling: None };
    let cmd = match cli.command {
        Cmd::SolveField => Command::SolveField,
        Cmd::Extract => Command::Extract,
        Cmd::SweepSpacing => Command::SweepSpacing,
        Cmd::EmitNetlist { coupling } => {
            overrides.coupling = coupling;
            Command::EmitNetlist
        }
        Cmd::Infer { coupling } => {
            overrides.coupling = coupling;
            Command::Infer
        }
        Cmd::ShowConfig => Command::ShowConfig,
    };
    let result = cli
        .config
        .as_deref()
        .map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
        .and_then(|cfg| run(cmd, cfg, &overrides, &mut std::io::stdout()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xtalk: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
