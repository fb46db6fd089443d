use std::path::PathBuf;
use std::process::ExitCode;

use analog_cli::config::{load_config, parse_overrides};
use analog_cli::output::{write_summary, SUMMARY_FILE};
use analog_cli::presets::preset_source;
use analog_cli::{run_experiment, summarize, verify, CliError, ExperimentKind};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "simulate",
    version,
    about = "Analog in-memory training simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted-path overrides, e.g. `--optim.alpha 0.05 --seeds "[0, 1]"`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Recompute the cross-seed summary from the trace CSVs in a directory.
    Summarize {
        dir: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        tail_fraction: f64,
        /// Write the summary here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance checks and print pass/fail per property.
    Verify {
        /// Only run criteria with these numbers.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
    /// Print the built-in preset config for an experiment.
    Preset { experiment: String },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            overrides,
        } => {
            let overrides = parse_overrides(&overrides)?;
            let config = load_config(&config, &overrides)?;
            let dir = out.or_else(|| config.output_dir.clone()).ok_or_else(|| {
                CliError::config(
                    "output_dir",
                    "no output directory (set output_dir or pass --out)",
                )
            })?;
            let summary = run_experiment(&config, &dir)?;
            println!(
                "{}: {} summary rows written to {}",
                config.experiment.name(),
                summary.len(),
                dir.join(SUMMARY_FILE).display()
            );
        }
        Command::Summarize {
            dir,
            tail_fraction,
            out,
        } => {
            let rows = summarize(&dir, tail_fraction)?;
            match out {
                Some(path) => write_summary(&path, &rows)?,
                None => {
                    println!("variant,metric,mean,std,n_seeds");
                    for r in rows {
                        println!(
                            "{},{},{},{},{}",
                            r.variant, r.metric, r.mean, r.std, r.n_seeds
                        );
                    }
                }
            }
        }
        Command::Verify { only } => {
            let checks = verify::run_selected(&only);
            for c in &checks {
                println!("{c}");
            }
            let companions = verify::companion_checks();
            if only.is_empty() {
                for c in &companions {
                    println!("{c}");
                }
            }
            let failed: Vec<String> = checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.id.clone())
                .collect();
            if !failed.is_empty() {
                return Err(CliError::Verification(format!(
                    "failing: {}",
                    failed.join(", ")
                )));
            }
        }
        Command::Preset { experiment } => {
            let kind = ExperimentKind::from_name(&experiment).ok_or_else(|| {
                CliError::config("experiment", format!("unknown experiment {experiment:?}"))
            })?;
            print!("{}", preset_source(kind));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
