use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mctdh_conv::config::{parse_config, RunMode};
use mctdh_conv::run::{run, RunOptions};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Relax,
    Propagate,
    Validate,
}

/// Atom-molecule conversion dynamics on a 1-D grid.
#[derive(Debug, Parser)]
#[command(name = "solver", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mode = match cli.command {
        Command::Relax => RunMode::Relax,
        Command::Propagate => RunMode::Propagate,
        Command::Validate => RunMode::Validate,
    };
    let reference_mode = std::env::var("SOLVER_REFERENCE_MODE").is_ok_and(|v| v == "1");
    let opts = RunOptions {
        mode,
        out_dir: cli.out.unwrap_or_else(|| cfg.output.clone()),
        threads: if reference_mode { 1 } else { cli.threads.max(1) },
        reference_mode,
    };
    match run(&cfg, &opts) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            if report.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("diagnostic written to {}", opts.out_dir.join("diagnostic.txt").display());
            ExitCode::FAILURE
        }
    }
}
