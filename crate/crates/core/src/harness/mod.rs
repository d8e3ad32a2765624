//! Experiment runner: parses a JSON config, executes the requested suites in
//! dependency order and writes `summary.json` plus per-suite data files.

mod config;
mod suites;

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

pub use config::{ExperimentConfig, GridSpec, ProblemSpec, Suite, MIN_INTERVALS};
pub use suites::{base_velocity, eps_label, Artifacts, Context, SuiteResult, DIRECT_FLOW_MIN_EPS};

use crate::criticals::find_critical_points;
use crate::error::{Error, Result};
use crate::problem::{BuiltinInfo, ProblemSetup, BUILTINS};

pub const SUMMARY_VERSION: u32 = 1;
/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "ADIAFLOW_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_SUITE_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Clone, Debug, Serialize)]
pub struct TimedSuite {
    #[serde(flatten)]
    pub result: SuiteResult,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub problem: String,
    pub passed: bool,
    pub config: ExperimentConfig,
    pub suites: Vec<TimedSuite>,
}

impl Summary {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else {
            EXIT_SUITE_FAILURE
        }
    }
}

/// Runs the suites and returns the summary together with the files they
/// produced, without touching the file system.
pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<(Summary, Artifacts)> {
    cfg.validate()?;
    with_thread_cap(|| {
        let mut ctx = Context::new(cfg)?;
        let mut files = Artifacts::new();
        let mut suites = Vec::new();
        for s in cfg.ordered_suites() {
            let start = Instant::now();
            log::info!("running suite {}", s.name());
            let result = suites::run_suite(&mut ctx, s, &mut files);
            for f in &result.failures {
                log::warn!("{}: {f}", s.name());
            }
            suites.push(TimedSuite {
                result,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        let summary = Summary {
            schema_version: SUMMARY_VERSION,
            problem: ctx.setup.name.clone(),
            passed: suites.iter().all(|s| s.result.passed),
            config: cfg.clone(),
            suites,
        };
        Ok((summary, files))
    })
}

/// Runs the experiment and writes `summary.json` and the suite files below
/// `cfg.output_dir`. Suite failures are reported in the summary, not as
/// errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    let (summary, files) = run_in_memory(cfg)?;
    write_outputs(&cfg.output_dir, &summary, &files)?;
    Ok(summary)
}

pub fn write_outputs(dir: &Path, summary: &Summary, files: &Artifacts) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, content) in files {
        let p = dir.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(p, content)?;
    }
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
    Ok(())
}

fn with_thread_cap<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| Error::Config(format!("{THREADS_ENV} = {v:?} is not a positive integer")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            pool.install(f)
        }
        Err(_) => f(),
    }
}

/// A built-in problem with its critical point count as found by the solver.
#[derive(Clone, Debug, Serialize)]
pub struct ProblemListing {
    #[serde(flatten)]
    pub info: BuiltinInfo,
    pub critical_points_found: usize,
}

pub fn list_problems() -> Result<Vec<ProblemListing>> {
    BUILTINS
        .iter()
        .map(|info| {
            let setup = ProblemSetup::builtin(info.name)?;
            Ok(ProblemListing {
                info: info.clone(),
                critical_points_found: find_critical_points(&setup, &[])?.len(),
            })
        })
        .collect()
}

/// Maps an error to the process exit code.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_SUITE_FAILURE,
    }
}
