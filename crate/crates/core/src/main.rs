use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spansim::cli::{cmd_compare, cmd_run, cmd_validate, RunManifest};

#[derive(Parser)]
#[command(
    name = "spansim",
    version,
    about = "Deterministic simulator for stretched, multi-tenant compute clusters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a scenario file and report diagnostics.
    Validate {
        /// Scenario JSON path.
        scenario: PathBuf,
    },
    /// Run a scenario and write report files.
    Run {
        scenario: PathBuf,
        /// Override the workload generator seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for report files.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Policy overrides, e.g. --policy backfill=on --policy ordering=fair-share.
        #[arg(long = "policy", value_name = "KEY=VAL")]
        policy: Vec<String>,
    },
    /// Run policy variants on the identical trace and print a comparison.
    Compare {
        scenario: PathBuf,
        /// Comma-separated variants, e.g. fifo,fifo+backfill+reservations.
        #[arg(long, value_delimiter = ',', required = true)]
        variants: Vec<String>,
        /// Override the workload generator seed for every variant.
        #[arg(long)]
        seed: Option<u64>,
        /// Optional directory for per-variant reports and comparison.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { scenario } => match cmd_validate(&scenario) {
            Ok(diags) if diags.is_empty() => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Ok(diags) => {
                for d in &diags {
                    let line = d.line.map(|l| l.to_string()).unwrap_or_else(|| "-".into());
                    eprintln!(
                        "error[{}] {}:{}: {} (at {})",
                        d.code,
                        scenario.display(),
                        line,
                        d.message,
                        d.path
                    );
                }
                eprintln!("{} problem(s) found", diags.len());
                ExitCode::from(1)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code())
            }
        },
        Command::Run { scenario, seed, out, policy } => {
            let manifest = RunManifest {
                scenario_path: scenario,
                out_dir: out,
                seed_override: seed,
                policy_overrides: policy,
            };
            match cmd_run(&manifest) {
                Ok(artifacts) => {
                    print!("{}", artifacts.report.summary_text());
                    for file in &artifacts.files {
                        eprintln!("wrote {}", file.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
        Command::Compare { scenario, variants, seed, out } => {
            match cmd_compare(&scenario, &variants, seed, out.as_deref()) {
                Ok(table) => {
                    print!("{}", table.to_csv());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
    }
}
