mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Graph Laplacian probes for singularities in point clouds.
///
/// Every command writes its outputs plus a manifest.json into --out-dir.
/// Exit codes: 0 success (for `test`: H0 kept), 1 `test` rejected H0,
/// 2 error with a JSON object on stderr.
#[derive(Debug, Parser)]
#[command(name = "singlap", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Common {
    /// Base seed; per-trial seeds are derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Format of the main tabular output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Build a scene and sample it uniformly.
    Gen(commands::GenArgs),
    /// Evaluate L_{n,t}f for a linear f at a set of points.
    Laplacian(commands::LaplacianArgs),
    /// Level-alpha test for a singularity near x0.
    Test(commands::TestArgs),
    /// Rejection-rate table over sample sizes and intersection angles.
    PowerSweep(commands::PowerSweepArgs),
    /// Crossing point and angle from a response profile.
    Estimate(commands::EstimateArgs),
    /// Monte-Carlo check of the noisy-sample identity.
    NoiseCheck(commands::NoiseCheckArgs),
    /// Pave the parameter set of a spherical network and emit centroids.
    Zeroset(commands::ZerosetArgs),
    /// Principal-component projection of a cloud.
    Pca(commands::PcaArgs),
    /// Re-run the command recorded in a manifest.
    Rerun(commands::RerunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli.common, &cli.command) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::from(2)
        }
    }
}
