//! Batch driver for specbayes experiments.
//!
//! A TOML [`ExperimentConfig`] lists jobs; [`run`] executes them in a bounded
//! worker pool and writes a [`ReportBundle`] (CSV tables, a JSON summary with
//! verdicts, SVG plots) plus a separate `metadata.json` holding timestamps.

pub mod config;
pub mod error;
pub mod jobs;
pub mod report;
pub mod svg;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use report::{Format, ReportBundle};

/// Environment variable for the worker count when `--jobs` is absent.
pub const JOBS_ENV: &str = "SPECBAYES_JOBS";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    /// Worker threads; `None` uses one per core.
    pub workers: Option<usize>,
    /// Overrides `output_dir`.
    pub out: Option<PathBuf>,
    pub formats: Vec<Format>,
    /// Overrides `seed`.
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub bundle: ReportBundle,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    /// 0 when every verdict passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.bundle.passed() {
            0
        } else {
            2
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ExperimentConfig::from_toml(&text)
}

/// Runs every job of `cfg` in order; `on_job` sees each finished report.
pub fn execute(
    cfg: &ExperimentConfig,
    workers: Option<usize>,
    mut on_job: impl FnMut(&report::JobReport, f64),
) -> Result<ReportBundle> {
    let built = cfg.validate()?;
    let hash = cfg.hash()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::config("jobs", "worker count must be positive"));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::io("thread pool", std::io::Error::other(e)))?;
    let ctx = jobs::Context { cfg, built: &built, hash: &hash };
    let mut reports = Vec::with_capacity(cfg.jobs.len());
    for index in 0..cfg.jobs.len() {
        let start = Instant::now();
        let report = pool.install(|| jobs::run_job(&ctx, index))?;
        on_job(&report, start.elapsed().as_secs_f64());
        reports.push(report);
    }
    Ok(ReportBundle { config_hash: hash, seed: cfg.seed, jobs: reports })
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Loads, runs and emits. Errors map to exit code 1.
pub fn run(opts: &RunOptions, mut on_job: impl FnMut(&report::JobReport, f64)) -> Result<RunOutcome> {
    let mut cfg = load_config(&opts.config)?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let out_dir = match &opts.out {
        Some(o) => o.clone(),
        None if cfg.output_dir.is_absolute() => cfg.output_dir.clone(),
        None => opts.config.parent().unwrap_or(Path::new(".")).join(&cfg.output_dir),
    };
    let started = unix_now();
    let clock = Instant::now();
    let mut timings = Vec::new();
    let bundle = execute(&cfg, opts.workers, |r, secs| {
        timings.push(json!({ "name": r.name, "elapsed_seconds": secs }));
        on_job(r, secs);
    })?;
    let mut files = bundle.emit(&out_dir, &opts.formats)?;
    let metadata = json!({
        "config_hash": bundle.config_hash,
        "config_path": opts.config,
        "started_unix": started,
        "finished_unix": unix_now(),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "workers": opts.workers.unwrap_or_else(rayon::current_num_threads),
        "jobs": timings,
    });
    let meta_path = out_dir.join("metadata.json");
    report::write_atomic(&meta_path, &report::pretty(&metadata)?)?;
    files.push(meta_path);
    Ok(RunOutcome { bundle, out_dir, files })
}
