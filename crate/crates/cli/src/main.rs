//! `edgemarket` command-line harness.
//!
//! Exit codes: 0 success, 1 verification failure or I/O error, 2 invalid
//! configuration or usage, 3 numeric failure (the offending seed is printed).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edgemarket::experiment::{format_summary, run_experiment, seed_from_env, ExperimentConfig};
use edgemarket::verify::{run_all, VerifyOptions};
use edgemarket::Error;

#[derive(Debug, Parser)]
#[command(name = "edgemarket", version, about = "Edge-service market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the sweep described by a TOML config and write CSV results.
    Run {
        /// Experiment config file.
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Also write whitespace-separated `.dat` series per metric.
        #[arg(long)]
        gnuplot_data: bool,
    },
    /// Run the full acceptance suite; exits 1 if any check fails.
    Verify {
        /// Seeds per Monte-Carlo check.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Print only the PASS/FAIL lines.
        #[arg(long)]
        quiet: bool,
    },
}

fn exit_code(err: &Error) -> ExitCode {
    match err {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::EmptyGrid { .. } => {
            ExitCode::from(2)
        }
        Error::Numeric { .. } => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

fn run(config: PathBuf, out: Option<PathBuf>, jobs: usize, gnuplot: bool) -> Result<(), Error> {
    let cfg = ExperimentConfig::from_path(&config)?;
    let experiment = cfg.resolve(seed_from_env()?)?;
    let artifacts = run_experiment(&experiment, out.as_deref(), jobs, gnuplot)?;
    println!(
        "{} ({} values x {} seeds)",
        experiment.id.as_str(),
        experiment.values.len(),
        experiment.seeds.len()
    );
    print!(
        "{}",
        format_summary(
            experiment.variable,
            experiment.study.metric_names(),
            &artifacts.summary
        )
    );
    println!("wrote {}", artifacts.csv.display());
    println!("wrote {}", artifacts.summary_csv.display());
    for p in &artifacts.gnuplot {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            gnuplot_data,
        } => run(config, out, jobs, gnuplot_data).map(|()| true),
        Command::Verify { seeds, jobs, quiet } => {
            if seeds == 0 {
                eprintln!("error: --seeds must be positive");
                return ExitCode::from(2);
            }
            run_all(&VerifyOptions { seeds, jobs }, |r| {
                println!("{}", r.status_line());
                if !quiet {
                    for d in &r.details {
                        println!("    {d}");
                    }
                }
            })
            .map(|reports| {
                let failed = reports.iter().filter(|r| !r.passed).count();
                println!(
                    "{} of {} criteria passed",
                    reports.len() - failed,
                    reports.len()
                );
                failed == 0
            })
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
