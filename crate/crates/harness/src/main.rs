use std::fs::File;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use nbguard_harness::bench::{self, BenchConfig};
use nbguard_harness::scenarios::{self, run_scenario};

#[derive(Parser)]
#[command(name = "nbguard-harness", about = "Evaluation scenarios and latency benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (1-6), or all of them, and print JSON reports.
    Scenario { which: Option<u8> },
    /// Drive repeated GETs through the mock controller.
    Bench {
        #[arg(long, default_value_t = 1000)]
        requests: usize,
        #[arg(long, default_value_t = 1)]
        apps: usize,
        /// Latency added to each verification, in milliseconds.
        #[arg(long, default_value_t = 0)]
        delay_ms: u64,
        #[arg(long, default_value_t = 1)]
        concurrency: usize,
        #[arg(long, default_value_t = 3)]
        peers: usize,
        #[arg(long)]
        no_cache: bool,
        /// Run with and without the cache and report the speedup.
        #[arg(long, conflicts_with = "no_cache")]
        compare: bool,
        /// Per-request CSV output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Scenario { which } => {
            let reports = match which {
                Some(n) => vec![run_scenario(n)?],
                None => scenarios::run_all(),
            };
            serde_json::to_writer_pretty(io::stdout(), &reports)?;
            println!();
            Ok(reports.iter().all(|r| r.passed))
        }
        Command::Bench {
            requests,
            apps,
            delay_ms,
            concurrency,
            peers,
            no_cache,
            compare,
            csv,
        } => {
            let config = BenchConfig {
                requests,
                apps,
                ledger_delay: Duration::from_millis(delay_ms),
                caching: !no_cache,
                concurrency,
                peers,
            };
            let report = if compare {
                let cmp = bench::compare_caching(&config);
                serde_json::to_writer_pretty(io::stdout(), &cmp)?;
                cmp.with_cache
            } else {
                let report = bench::benchmark(&config);
                serde_json::to_writer_pretty(io::stdout(), &report)?;
                report
            };
            println!();
            if let Some(path) = csv {
                report.write_csv(File::create(path)?)?;
            }
            Ok(true)
        }
    }
}
