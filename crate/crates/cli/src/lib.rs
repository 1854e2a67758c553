//! Command-line front end: `estimate`, `test` and `simulate`, each driven by
//! one TOML config file.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod records;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "cdeconv",
    version,
    about = "Deconvolution distribution estimates and a concavity test"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to $CDECONV_OUT_DIR, then ".".
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the density, the distribution function and its concave majorant.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Observations, one per line.
        #[arg(long)]
        data: PathBuf,
    },
    /// Test whether the distribution function is concave on [0, inf).
    Test {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Overrides the config's test seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a simulation study.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(RunConfig::parse(&text)?)
}

fn setup(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let cfg = load_config(&common.config)?;
    Ok((cfg, commands::resolve_out_dir(common.out.clone())))
}

/// Runs a command and returns the text to print on success.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Estimate { common, data } => {
            let (cfg, out) = setup(&common)?;
            let obs = data::read_observations(&data)?;
            let est = commands::cmd_estimate(&cfg, &obs, &out)?;
            Ok(format!(
                "n = {}\nh = {}\nlimit_value = {}\n",
                est.n, est.bandwidth, est.limit_value
            ))
        }
        Command::Test { common, data, seed } => {
            let (cfg, out) = setup(&common)?;
            let obs = data::read_observations(&data)?;
            let report = commands::cmd_test(&cfg, &obs, seed, &out)?;
            Ok(report.to_record())
        }
        Command::Simulate { common, seed } => {
            let (cfg, out) = setup(&common)?;
            let (sim, result) = commands::cmd_simulate(&cfg, seed, &out)?;
            Ok(format!(
                "wrote {} and {}\n{}",
                out.join(format!("{}.csv", sim.name)).display(),
                out.join(format!("{}.manifest.txt", sim.name)).display(),
                result.to_csv_string()
            ))
        }
    }
}
