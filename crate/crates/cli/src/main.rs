use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kernel_ert_cli::{exit_code, run, ExperimentConfig, Mode, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "kernel-ert",
    version,
    about = "Near-kernel shape reconstruction on a simulated conducting disk"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Noise seed (overrides `noise.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Do not print the summary.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// One forward solve with a Fourier or file-supplied boundary current.
    Forward,
    /// Assemble the background and anomaly NtD matrices.
    Ntd,
    /// Spectrum of the (noisy) difference operator.
    Spectrum,
    /// Full reconstruction pipeline.
    Reconstruct,
    /// Closed-form tables for centred disk or annulus phantoms.
    Analytic,
    /// Perturbed spectra over noise levels and seeds.
    NoiseSweep,
}

impl From<Command> for Mode {
    fn from(c: Command) -> Mode {
        match c {
            Command::Forward => Mode::Forward,
            Command::Ntd => Mode::Ntd,
            Command::Spectrum => Mode::Spectrum,
            Command::Reconstruct => Mode::Reconstruct,
            Command::Analytic => Mode::Analytic,
            Command::NoiseSweep => Mode::NoiseSweep,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config.as_deref() else {
        eprintln!("error: --config is required");
        return ExitCode::from(EXIT_CONFIG as u8);
    };
    let mut cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.noise.seed = seed;
    }
    let Some(out) = cli.out.clone().or_else(|| cfg.output_dir.clone()) else {
        eprintln!("error: no output directory; pass --out or set output_dir");
        return ExitCode::from(EXIT_CONFIG as u8);
    };
    match run(cli.command.into(), &cfg, &out) {
        Ok(report) => {
            if !cli.quiet {
                print!("{}", report.summary.render());
                println!("wrote {} files to {}", report.files.len(), out.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
