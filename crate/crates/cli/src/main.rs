use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use epibench::data::Country;
use epibench::error::Result;
use epibench::eval::Averaging;
use epibench_cli::config::RunConfig;
use epibench_cli::ingest::{ingest, IngestFormat};
use epibench_cli::report::report;
use epibench_cli::runner::run;

#[derive(Parser)]
#[command(
    name = "epibench",
    version,
    about = "Regional case-forecasting benchmark: ingest data, run model grids, report MAPE tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert raw case data into the canonical long CSV.
    Ingest {
        /// Source file.
        raw: PathBuf,
        /// Layout of the source file.
        #[arg(long, value_enum)]
        format: Format,
        /// Where to write the canonical CSV.
        #[arg(long)]
        out: PathBuf,
        /// Country for wide files without a country column (e.g. "US").
        #[arg(long)]
        country: Option<String>,
    },
    /// Execute the experiment grid described by a config file.
    Run {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (overrides the config).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a finished run: MAPE tables and plot-data files.
    Report {
        /// A run output directory (or one of its seed-* subdirectories).
        dir: PathBuf,
        /// Average plainly over (region, fold) pairs instead of folds first.
        #[arg(long)]
        pooled: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    JhuWide,
    CanonicalLong,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { raw, format, out, country } => {
            let format = match format {
                Format::JhuWide => IngestFormat::JhuWide,
                Format::CanonicalLong => IngestFormat::CanonicalLong,
            };
            let country = country.as_deref().map(Country::parse).transpose()?;
            let stats = ingest(&raw, format, country, &out)?;
            println!("{stats}");
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Run { config, seed, workers, out } => {
            let mut config = RunConfig::load(&config)?;
            config.apply_overrides(seed, workers, out)?;
            let summary = run(&config)?;
            println!(
                "{} seed(s): {} cells scored, {} skipped",
                summary.seeds_run, summary.cells_scored, summary.cells_skipped
            );
            if summary.networks_trained + summary.networks_resumed > 0 {
                println!(
                    "networks: {} trained, {} resumed from checkpoints",
                    summary.networks_trained, summary.networks_resumed
                );
            }
            println!("outputs under {}", config.out_dir.display());
            Ok(())
        }
        Command::Report { dir, pooled } => {
            let averaging = if pooled {
                Averaging::Pooled
            } else {
                Averaging::FoldThenRegion
            };
            let reports = report(&dir, averaging)?;
            for r in &reports {
                println!("{} ({} plot files)", r.summary_path.display(), r.plot_files);
            }
            Ok(())
        }
    }
}
