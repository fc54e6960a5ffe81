//! Command-line driver: validates experiment configurations, runs the
//! simulation matrix, derives figure tables, and dumps sampled eyes.
//!
//! Exit codes: 0 success, 2 configuration error (parse, validation, missing
//! asset), 3 runtime error (simulation or file emission failure).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use eyefield::config::{eyes_to_csv, ExperimentConfig};
use eyefield::experiment::run_experiment;
use eyefield::report::{render_figures, write_reports};

#[derive(Parser)]
#[command(
    name = "eyefield",
    version,
    about = "Retinal image formation simulator for integral-imaging light-field displays",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration file (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override the eye-sampling seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (0 = one per logical CPU).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override the output directory from the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment matrix and write all report files.
    Run {
        /// Validate the config and print the condition count without
        /// computing anything.
        #[arg(long)]
        dry_run: bool,
    },
    /// Parse and validate the configuration, reporting every problem found.
    Validate,
    /// Derive plot-ready figure CSVs from a finished results directory.
    RenderFigures {
        /// Results directory; defaults to --out, then the config's
        /// output_dir.
        results_dir: Option<PathBuf>,
    },
    /// Sample the configured eye population and emit the coefficient CSV
    /// (stdout, or <out>/eyes.csv with --out).
    SampleEyes,
}

/// An error tagged with the exit code it maps to.
enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure::Config(e.to_string())
    }
    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config <FILE> is required".to_string()))?;
    let mut config = ExperimentConfig::from_path(path).map_err(Failure::config)?;
    if let Some(seed) = cli.seed {
        match config.seed_mut() {
            Some(slot) => *slot = seed,
            None => {
                return Err(Failure::Config(
                    "--seed only applies to a population eye source".to_string(),
                ))
            }
        }
    }
    if let Some(jobs) = cli.jobs {
        config.jobs = jobs;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Validate => {
            let config = load_config(cli)?;
            let conditions = config.condition_count().map_err(Failure::config)?;
            println!(
                "configuration valid: {} conditions ({} densities x {} depths x {} metrics per eye)",
                conditions,
                config.display.densities.len(),
                config.display.rendered_depths_rel_d.len(),
                config.metrics.len()
            );
            Ok(())
        }
        Command::Run { dry_run } => {
            let config = load_config(cli)?;
            let conditions = config.condition_count().map_err(Failure::config)?;
            if *dry_run {
                println!("dry run: {conditions} conditions; nothing computed");
                return Ok(());
            }
            let output = run_experiment(&config).map_err(Failure::runtime)?;
            let written = write_reports(&config, &output).map_err(Failure::runtime)?;
            println!(
                "completed {} conditions over {} eyes",
                output.condition_count,
                output.eyes.len()
            );
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::RenderFigures { results_dir } => {
            let dir = results_dir
                .clone()
                .or_else(|| cli.out.clone())
                .or_else(|| {
                    cli.config
                        .as_ref()
                        .and_then(|path| ExperimentConfig::from_path(path).ok())
                        .map(|config| config.output_dir)
                })
                .ok_or_else(|| {
                    Failure::Config(
                        "give a results directory (positional, --out, or --config)".to_string(),
                    )
                })?;
            let written = render_figures(&dir).map_err(Failure::runtime)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::SampleEyes => {
            let config = load_config(cli)?;
            let eyes = config.build_eyes().map_err(Failure::config)?;
            let csv = eyes_to_csv(&eyes);
            match &cli.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)
                        .map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
                    let path = dir.join("eyes.csv");
                    std::fs::write(&path, &csv)
                        .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
                    println!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}
