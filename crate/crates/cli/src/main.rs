use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adiaflow::harness::{self, ExperimentConfig, EXIT_CONFIG, EXIT_OK};
use clap::{Parser, Subcommand};

/// Constrained gradient flows, their ε-deformations and the Newton map
/// between them.
#[derive(Parser)]
#[command(name = "adiaflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites of an experiment config and write its reports.
    Run { config: PathBuf },
    /// Describe the built-in problems.
    ListProblems {
        #[arg(long)]
        json: bool,
    },
    /// Validate a config without running it.
    Check { config: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG as u8)
    })
}

fn run(path: &Path) -> ExitCode {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match harness::run_experiment(&cfg) {
        Ok(summary) => {
            for s in &summary.suites {
                let tag = if s.result.passed { "PASS" } else { "FAIL" };
                println!("{tag} {:<11} {:8.2}s", s.result.suite, s.seconds);
                for f in &s.result.failures {
                    println!("     {f}");
                }
            }
            println!("reports written to {}", cfg.output_dir.display());
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code_for(&e) as u8)
        }
    }
}

fn list(json: bool) -> ExitCode {
    let problems = match harness::list_problems() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(harness::exit_code_for(&e) as u8);
        }
    };
    if json {
        match serde_json::to_string_pretty(&problems) {
            Ok(s) => println!("{s}"),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        }
    } else {
        for p in &problems {
            let i = &p.info;
            println!(
                "{:<8} dim {}  {}, {}  ({} critical points; {})",
                i.name, i.dim, i.constraint, i.objective, p.critical_points_found, i.note
            );
        }
    }
    ExitCode::from(EXIT_OK as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config } => run(&config),
        Command::ListProblems { json } => list(json),
        Command::Check { config } => match load(&config) {
            Ok(cfg) => {
                let names: Vec<&str> = cfg.ordered_suites().iter().map(|s| s.name()).collect();
                println!("ok: {} suites ({})", names.len(), names.join(", "));
                ExitCode::from(EXIT_OK as u8)
            }
            Err(code) => code,
        },
    }
}
