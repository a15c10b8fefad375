use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thermal_bec::cli::{self, RunOptions};

#[derive(Parser)]
#[command(name = "thermal-bec", version, about = "Thermal Bogoliubov states and phase-space BEC dynamics")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Solve, sample, evolve and write observables.
    Run(Common),
    /// Check the config and audit stability without running.
    Validate(Common),
    /// Solve and print the mode set only.
    Modes(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Overrides `thermal.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `output.directory`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Directory for cached mode sets.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            workers: self.workers,
            out_dir: self.out_dir.clone(),
            cache_dir: self.cache_dir.clone(),
        }
    }
}

fn fail(err: thermal_bec::Error) -> ExitCode {
    eprintln!("thermal-bec: {err}");
    ExitCode::from(cli::exit_code(&err) as u8)
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match args.verb {
        Verb::Run(c) => match cli::run(&c.config, &c.options()) {
            Ok(summary) => {
                println!("wrote {} files to {}", summary.files.len(), summary.out_dir.display());
                if summary.escaped > 0 {
                    println!("{} positive-P trajectories escaped", summary.escaped);
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Verb::Validate(c) => {
            let report = cli::validate(&c.config, &c.options());
            print!("{report}");
            if report.is_ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Verb::Modes(c) => match cli::modes(&c.config, &c.options()) {
            Ok(summary) => {
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
