use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use specbayes_cli::{run, Format, RunOptions, JOBS_ENV};

#[derive(Parser)]
#[command(name = "specbayes", version, about = "Bayesian ARMA spectral density experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every job of a TOML experiment config.
    Run {
        config: PathBuf,
        /// Worker threads (default: one per core).
        #[arg(long, env = JOBS_ENV, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
        jobs: Option<usize>,
        /// Output directory (default: `output_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "csv,json,svg")]
        formats: Vec<Format>,
        /// Master seed (default: `seed` from the config).
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Command::Run { config, jobs, out, formats, seed } = cli.command;
    let opts = RunOptions { config, workers: jobs, out, formats, seed };
    let outcome = run(&opts, |job, secs| {
        for v in &job.verdicts {
            println!("{} {}/{}: {}", if v.passed { "PASS" } else { "FAIL" }, job.name, v.name, v.detail);
        }
        eprintln!("finished {} in {secs:.1}s", job.name);
    });
    match outcome {
        Ok(o) => {
            println!("wrote {} files to {}", o.files.len(), o.out_dir.display());
            ExitCode::from(o.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
