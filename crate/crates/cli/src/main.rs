//! `scoreplot`: simulate spiked data, verify the score limit, run noise
//! sweeps and diagnose real spectra.
//!
//! Exit codes: 0 success, 1 a configured check failed, 2 usage or config error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scoreplot_core::io::Orientation;

#[derive(Parser, Debug)]
#[command(
    name = "scoreplot",
    version,
    about = "Score plots of high-dimensional PCA under spiked covariance models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Matrix layout of CSV input and output.
    #[arg(long, global = true, default_value = "vars-rows", value_parser = parse_orientation)]
    pub orientation: Orientation,
    /// Center variables before PCA (divisor n-1); `false` uses raw data with divisor n.
    #[arg(long, global = true, default_value_t = true, action = clap::ArgAction::Set)]
    pub centered: bool,
}

fn parse_orientation(s: &str) -> Result<Orientation, String> {
    s.parse().map_err(|e: scoreplot_core::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset with its population scores.
    Simulate,
    /// Check convergence, law-of-large-numbers and chi-square studies against tolerances.
    Verify,
    /// Monte Carlo noise standard deviations for each configured figure.
    Noise,
    /// Scree, signal strengths, noise SDs, required sample sizes and transform class.
    Diagnose(commands::DiagnoseArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.global.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Simulate => commands::simulate(&cli.global),
        Command::Verify => commands::verify(&cli.global),
        Command::Noise => commands::noise(&cli.global),
        Command::Diagnose(a) => commands::diagnose(&cli.global, a),
    };
    match result {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in failures {
                eprintln!("check failed: {f}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(feature = "parallel")]
fn init_threads(threads: usize) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()?;
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn init_threads(_threads: usize) -> anyhow::Result<()> {
    Ok(())
}
