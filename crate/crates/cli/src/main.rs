//! `rdars-sim`: runs configured experiments and dumps codebooks.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rdars_core::harness::{dump_mode_codebooks, emit_csv, parse_scenario, run_experiment};

#[derive(Parser)]
#[command(name = "rdars-sim", version, about = "RDARS-aided mmWave downlink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file and write CSV rows.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Skip beam training and optimize on the true channels.
        #[arg(long)]
        perfect_csi: bool,
    },
    /// Write the connected and passive codebooks of the configured mode.
    DumpCodebook {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            out,
            trials,
            perfect_csi,
        } => {
            let mut spec = parse_scenario(&config).with_context(|| format!("reading {}", config.display()))?;
            spec.seed = seed;
            if let Some(t) = trials {
                anyhow::ensure!(t >= 1, "--trials must be at least 1");
                spec.trials = t;
            }
            spec.perfect_csi |= perfect_csi;
            let rows = run_experiment(&spec).context("running experiment")?;
            emit_csv(&rows, &out).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::DumpCodebook { config, out } => {
            let spec = parse_scenario(&config).with_context(|| format!("reading {}", config.display()))?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            dump_mode_codebooks(&spec, BufWriter::new(file)).context("writing codebooks")?;
        }
    }
    Ok(())
}
