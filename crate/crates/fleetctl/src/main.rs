use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use fleetctl::commands;
use fleetctl::config::{CampaignConfig, CliOverrides};
use fleetctl::CliError;

#[derive(Parser)]
#[command(
    name = "fleetctl",
    version,
    about = "Probe worker nodes, run the microbenchmark suite, and aggregate fleet-wide results",
    arg_required_else_help = true
)]
struct Cli {
    /// Campaign config file (default: $FLEETBENCH_CONFIG, else built-ins).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory override.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Site tag stamped on probe/bench records.
    #[arg(long, global = true, value_name = "NAME")]
    site: Option<String>,
    /// Abort on the first malformed row instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,
    /// Seed for the suite's randomized structures.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print this node's inventory as CSV records.
    Probe,
    /// Run the full microbenchmark suite and write one result CSV.
    Bench,
    /// Emit the probe+bench job plan as a portable shell script.
    Plan,
    /// Ingest the inbox of result CSVs into one merged, sorted CSV.
    Collect,
    /// Compute per-site statistics and fleet distributions from the merge.
    Aggregate,
    /// Render ranking tables, pie charts and histograms.
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = CliOverrides {
        out: cli.out.clone(),
        site: cli.site.clone(),
        strict: cli.strict,
        seed: cli.seed,
    };
    let (config, warnings) = CampaignConfig::load(cli.config.as_deref(), &overrides)?;
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }

    match cli.command {
        Command::Probe => {
            print!("{}", commands::run_probe(&config)?);
        }
        Command::Bench => {
            let (path, count) = commands::run_bench(&config)?;
            eprintln!("wrote {} ({count} records)", path.display());
        }
        Command::Plan => {
            print!("{}", commands::run_plan(&config));
        }
        Command::Collect => {
            let (path, report) = commands::run_collect(&config)?;
            print!("{report}");
            eprintln!("wrote {}", path.display());
        }
        Command::Aggregate => {
            let warnings = commands::run_aggregate(&config)?;
            for warning in warnings {
                eprintln!("warning: {warning}");
            }
            eprintln!("wrote aggregates under {}", config.output.display());
        }
        Command::Report => {
            let artifacts = commands::run_report(&config)?;
            for name in &artifacts {
                println!("{name}");
            }
            eprintln!(
                "wrote {} artifact(s) under {}",
                artifacts.len(),
                config.output.join(commands::REPORT_DIR).display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
