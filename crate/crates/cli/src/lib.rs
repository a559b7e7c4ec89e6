//! `feesim`: a deterministic fee market simulator and dataset analyzer.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use commands::{cmd_analyze, cmd_compare, cmd_simulate, AnalyzeArgs, CompareArgs, SimulateArgs};
use error::CliResult;

#[derive(Parser)]
#[command(
    name = "feesim",
    version,
    about = "Simulate and analyze EIP-1559-style transaction fee markets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute gas price, adoption and block size statistics from a
    /// dataset export
    Analyze {
        /// Blocks file (height,base_fee_wei,gas_used,gas_limit)
        #[arg(long)]
        blocks: PathBuf,
        /// Transactions file (tx_id,block_height,tx_type,max_fee_wei,
        /// max_priority_fee_wei,gas_limit)
        #[arg(long)]
        txs: PathBuf,
        /// First block height to include
        #[arg(long)]
        from_height: Option<u64>,
        /// Last block height to include
        #[arg(long)]
        to_height: Option<u64>,
        /// Output directory for series and report files
        #[arg(long)]
        out_dir: PathBuf,
        /// Suppress the stdout summary
        #[arg(long)]
        quiet: bool,
    },
    /// Run a scenario experiment from a config file
    Simulate {
        /// Scenario config (TOML)
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides io.out_dir)
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Base seed (overrides run.base_seed; run i uses seed + i)
        #[arg(long)]
        seed: Option<u64>,
        /// Number of runs (overrides run.runs)
        #[arg(long)]
        runs: Option<usize>,
        /// Suppress the stdout summary
        #[arg(long)]
        quiet: bool,
    },
    /// Run several mechanism configs on the same demand trace and tabulate
    /// their metrics side by side
    Compare {
        /// Two or more scenario configs sharing demand, io and run sections
        #[arg(required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        /// Output directory for the comparison table
        #[arg(long, default_value = "out/compare")]
        out_dir: PathBuf,
        /// Base seed applied to every config
        #[arg(long)]
        seed: Option<u64>,
        /// Number of runs applied to every config
        #[arg(long)]
        runs: Option<usize>,
        /// Suppress the stdout table
        #[arg(long)]
        quiet: bool,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Analyze { blocks, txs, from_height, to_height, out_dir, quiet } => {
            cmd_analyze(&AnalyzeArgs { blocks, txs, from_height, to_height, out_dir, quiet })
        }
        Command::Simulate { config, out_dir, seed, runs, quiet } => {
            cmd_simulate(&SimulateArgs { config, out_dir, seed, runs, quiet })
        }
        Command::Compare { configs, out_dir, seed, runs, quiet } => {
            cmd_compare(&CompareArgs { configs, out_dir, seed, runs, quiet })
        }
    }
}

pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("feesim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
