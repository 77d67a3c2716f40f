//! Runs one simulation horizon and writes the result artifacts.
//!
//! Exit codes: 0 on success, 1 on config or runtime errors, 2 on bad
//! flags (clap usage errors).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};

use favorsim::config::{FileConfig, Overrides, RunConfig};
use favorsim::output::{schemes_in, summarize, write_run_outputs, Scheme};
use favorsim::radio::PlacementMode;
use favorsim::sim::{run_baseline, run_horizon, HorizonResult};
use favorsim::SharingScenario;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    /// Limited spectrum pool favors (exclusive use of pool carriers).
    Pool,
    /// Mutual renting favors (shared or exclusive use of owned carriers).
    Renting,
}

impl From<ScenarioArg> for SharingScenario {
    fn from(value: ScenarioArg) -> Self {
        match value {
            ScenarioArg::Pool => SharingScenario::LimitedPool,
            ScenarioArg::Renting => SharingScenario::MutualRenting,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlacementArg {
    Separated,
    Interleaved,
}

impl From<PlacementArg> for PlacementMode {
    fn from(value: PlacementArg) -> Self {
        match value {
            PlacementArg::Separated => PlacementMode::Separated,
            PlacementArg::Interleaved => PlacementMode::Interleaved,
        }
    }
}

/// Favor-based inter-operator spectrum sharing simulator.
///
/// Runs the coordination protocol and a static orthogonal baseline over
/// the same deployment snapshots and writes results.csv, cdf.csv,
/// transcript.log and summary.txt.
#[derive(Debug, Parser)]
#[command(name = "favorsim", version)]
struct Cli {
    /// TOML config file; omitted means built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the horizon length.
    #[arg(long)]
    snapshots: Option<u64>,

    /// Override the sharing scenario.
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,

    /// Override the base station placement.
    #[arg(long, value_enum)]
    placement: Option<PlacementArg>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Evaluate only the orthogonal baseline (empty transcript).
    #[arg(long)]
    baseline_only: bool,

    /// Write only summary.txt.
    #[arg(long)]
    summary_only: bool,
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            FileConfig::from_toml(&text)?
        }
        None => FileConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        snapshots: cli.snapshots,
        scenario: cli.scenario.map(Into::into),
        placement: cli.placement.map(Into::into),
    };
    file.with_overrides(&overrides).validate().map_err(Into::into)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let config = load_config(cli)?;
    let result: HorizonResult = if cli.baseline_only {
        run_baseline(&config)?
    } else {
        run_horizon(&config)?
    };
    let files = write_run_outputs(
        &cli.out,
        &result.rows,
        &result.transcript,
        &config,
        cli.summary_only,
    )?;

    let records = summarize(&result.rows, &result.transcript, &config);
    for scheme in schemes_in(&result.rows) {
        for record in records.iter().filter(|r| r.scheme == scheme) {
            print!(
                "{}/{}: mean {:.3} Mbit/s, edge {:.3} Mbit/s, utility {:.3} Mbit/s",
                record.scheme,
                record.operator,
                record.mean_rate_bps / 1e6,
                record.edge_rate_bps / 1e6,
                record.mean_utility / 1e6
            );
            if scheme == Scheme::Protocol {
                print!(
                    ", favors asked {} granted {} received {}",
                    record.favors_asked, record.favors_granted, record.favors_received
                );
            }
            println!();
        }
    }
    println!("wrote {}", files.summary_txt.parent().unwrap_or(&cli.out).display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
