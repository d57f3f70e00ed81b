use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use srcscreen::harness::{emit_plotdata, emit_results, read_results, run_experiment, GroupKey};
use srcscreen::{Error, ExperimentConfig, OutputFormat};

mod selftest;

#[derive(Parser)]
#[command(
    name = "srcscreen",
    version,
    about = "Source screening experiments for shared subspace learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write one record per (seed, method, estimator).
    Run {
        /// JSON experiment config; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
        format: String,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        workers: Option<usize>,
        /// Added to every seed in the config.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Summarise a results file into per-group means and standard errors.
    Plotdata {
        /// Results file written by `run` (CSV, or JSON by extension).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "method,estimator")]
        group_by: Vec<String>,
        #[arg(long, default_value = "plotdata.csv")]
        out: PathBuf,
    },
    /// Check the numerical invariants on small random instances.
    Selftest,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(msg) => Failure::Config(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            out,
            format,
            workers,
            seed_offset,
        } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::from_json_file(&path)?,
                None => ExperimentConfig::default(),
            };
            for s in &mut cfg.seeds {
                *s = s
                    .checked_add(seed_offset)
                    .ok_or_else(|| Failure::Config("seed offset overflows u64".into()))?;
            }
            let format: OutputFormat = format.parse()?;
            let records = match workers {
                Some(0) => return Err(Failure::Config("--workers must be positive".into())),
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Failure::Runtime(e.to_string()))?
                    .install(|| run_experiment(&cfg))?,
                None => run_experiment(&cfg)?,
            };
            emit_results(&records, &out, format)?;
            log::info!("wrote {} records to {}", records.len(), out.display());
            Ok(())
        }
        Command::Plotdata { input, group_by, out } => {
            let keys = group_by
                .iter()
                .map(|g| g.parse::<GroupKey>())
                .collect::<Result<Vec<_>, _>>()?;
            let format = if input.extension().is_some_and(|e| e == "json") {
                OutputFormat::Json
            } else {
                OutputFormat::Csv
            };
            let records = read_results(&input, format)?;
            emit_plotdata(&records, &keys, &out)?;
            Ok(())
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            let mut failed = 0;
            for c in &checks {
                println!("{} {:<32} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                Err(Failure::Runtime(format!("{failed} of {} checks failed", checks.len())))
            } else {
                Ok(())
            }
        }
    }
}
