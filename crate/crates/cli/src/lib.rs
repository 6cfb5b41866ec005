//! Experiment driver for the `kernel-ert` command-line tool.

// `!(x >= 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod export;
pub mod units;

use std::path::Path;

use kernel_ert::{Error, Result};

pub use commands::{
    cmd_analytic, cmd_forward, cmd_noise_sweep, cmd_ntd, cmd_reconstruct, cmd_spectrum, CommandOutput, Summary,
};
pub use config::{ExperimentConfig, Mode};
use export::ArtifactWriter;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NO_EIGENPAIR: i32 = 4;

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::UnknownStrategy { .. }
        | Error::Phantom(_)
        | Error::MeshParameter(_)
        | Error::Parse(_) => EXIT_CONFIG,
        Error::AllAtNoiseFloor { .. } | Error::EigenpairUnusable { .. } => EXIT_NO_EIGENPAIR,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: Summary,
    /// Relative paths of every file written, manifest last.
    pub files: Vec<String>,
}

/// Validates the configuration, runs one subcommand into `out` and writes the manifest.
pub fn run(mode: Mode, cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let mut writer = ArtifactWriter::new(out)?;
    let output = match mode {
        Mode::Forward => cmd_forward(cfg, &mut writer),
        Mode::Ntd => cmd_ntd(cfg, &mut writer),
        Mode::Spectrum => cmd_spectrum(cfg, &mut writer),
        Mode::Reconstruct => cmd_reconstruct(cfg, &mut writer),
        Mode::Analytic => cmd_analytic(cfg, &mut writer),
        Mode::NoiseSweep => cmd_noise_sweep(cfg, &mut writer),
    }?;
    let mut recorded = cfg.clone();
    recorded.mode = Some(mode);
    let files = writer.finish(mode.name(), &recorded, output.inputs)?;
    Ok(RunReport {
        summary: output.summary,
        files,
    })
}
