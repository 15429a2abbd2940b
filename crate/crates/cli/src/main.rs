use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fluxleak_cli::commands::{rerun, run_branch, run_calibrate, run_simulate_shots, run_stats, run_sweep, RunOutcome};
use fluxleak_cli::config::Config;
use fluxleak_cli::{CliError, EXIT_PARTIAL};

#[derive(Parser)]
#[command(name = "fluxleak", version, about = "Readout-induced leakage simulations for fluxonium qubits")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for independent sweep points (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// QND transition-probability curves for every [[scenario]].
    Sweep { config: PathBuf },
    /// Static branch analysis for every [[branch]] job.
    Branch { config: PathBuf },
    /// Fit, correct and bootstrap a shot table with the [stats] settings.
    Stats {
        #[arg(long)]
        shots: PathBuf,
        config: PathBuf,
    },
    /// Fit the attenuation scale to an ac-Stark dataset with the [calibrate] settings.
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        config: PathBuf,
    },
    /// Write a synthetic shot table from the [synthetic] settings.
    SimulateShots { config: PathBuf },
    /// Repeat a run from its manifest.
    Rerun { manifest: PathBuf },
}

fn run(cli: Cli) -> Result<RunOutcome, CliError> {
    let threads = if cli.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cli.threads
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Io(e.to_string()))?;
    fluxleak::linalg::use_sequential_kernels();
    let out = &cli.out;
    match cli.command {
        Command::Sweep { config } => run_sweep(&Config::load(&config)?, out, threads),
        Command::Branch { config } => run_branch(&Config::load(&config)?, out, threads),
        Command::Stats { shots, config } => run_stats(&shots, &Config::load(&config)?, out, threads),
        Command::Calibrate { data, config } => run_calibrate(&data, &Config::load(&config)?, out, threads),
        Command::SimulateShots { config } => run_simulate_shots(&Config::load(&config)?, out, threads),
        Command::Rerun { manifest } => rerun(&manifest, out, threads),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            println!("{}", outcome.manifest.display());
            if outcome.partial {
                eprintln!("some sweep points failed; see the manifest");
                ExitCode::from(EXIT_PARTIAL as u8)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("fluxleak: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
