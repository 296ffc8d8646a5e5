use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use metaoc::harness::output::{write_experiment, write_suites, SUITES_DIR};
use metaoc::harness::{generate_suite_artifact, parse_config, replay, run_experiment, ExperimentConfig, ExperimentReport};
use metaoc::Error;

#[derive(Parser)]
#[command(name = "metaoc", version, about = "Meta-learning online control benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a config file.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Generate and store the task suites of a config.
    Suite {
        config: PathBuf,
        /// Defaults to `<output_dir>/suites`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a config on stored suites.
    Replay {
        config: PathBuf,
        suites: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run the acceptance battery and print one line per criterion.
    Check,
}

enum Failure {
    Config(String),
    Runtime(String),
    Check,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfiguration(_) => Failure::Config(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn finish(report: &ExperimentReport, dir: &Path) -> Result<(), Failure> {
    let summary = write_experiment(dir, report)?;
    for m in &summary.methods {
        println!(
            "{:<15} T={:<4} meta-regret {:.6} ± {:.6} over {} seeds",
            m.method.as_str(),
            m.horizon,
            m.meta_regret.mean,
            m.meta_regret.se,
            m.seeds
        );
    }
    for s in &summary.sweeps {
        if let Some(slope) = s.loglog_slope {
            println!("{:<15} log-log slope over T: {slope:.4}", s.method.as_str());
        }
    }
    println!("results written to {}", dir.display());
    if summary.partial {
        for f in &summary.failures {
            eprintln!("failed: {} seed {} T={}: {}", f.method, f.seed, f.horizon, f.error);
        }
        return Err(Failure::Runtime("partial results: some runs failed".into()));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, output_dir } => {
            let cfg = load_config(&config)?;
            let dir = output_dir.unwrap_or_else(|| cfg.output_dir.clone());
            let report = run_experiment(&cfg)?;
            finish(&report, &dir)
        }
        Command::Suite { config, out } => {
            let cfg = load_config(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.join(SUITES_DIR));
            let mut suites = Vec::new();
            for t in cfg.horizon_list() {
                for &seed in &cfg.seeds {
                    suites.push(generate_suite_artifact(&cfg, seed, t)?);
                }
            }
            for path in write_suites(&dir, &suites)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Replay { config, suites, output_dir } => {
            let cfg = load_config(&config)?;
            let dir = output_dir.unwrap_or_else(|| cfg.output_dir.clone());
            let report = replay(&cfg, &suites)?;
            finish(&report, &dir)
        }
        Command::Check => {
            let results = metaoc::check::run_all();
            for c in &results {
                println!("{c}");
            }
            if results.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err(Failure::Check)
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("invalid configuration: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check) => ExitCode::from(3),
    }
}
