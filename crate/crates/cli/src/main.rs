use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rsd_cli::{bench_csv, figure1_csv, run_bench, run_verify, Config, Figure1Config};

/// Thread count for parallel trials; defaults to all cores.
const THREADS_ENV: &str = "RSD_THREADS";

#[derive(Parser)]
#[command(name = "rsd", version, about = "Speculative decoding verification and benchmarks on tabular models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Run exactness and recovery checks; exits nonzero if any fails.
    Verify(Common),
    /// Decoder sweep producing block efficiency, MBSU and acceptance rows.
    Bench(Common),
    /// Acceptance rates on a grid of Bernoulli draft/target pairs.
    Figure1(Common),
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var(THREADS_ENV) {
        let n: usize = n.parse().with_context(|| format!("{THREADS_ENV} must be a positive integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Verify(c) => {
            let cfg = load_config(&c)?;
            let report = run_verify(&cfg)?;
            for check in &report.checks {
                let cmp = if check.higher_is_better { ">=" } else { "<=" };
                eprintln!(
                    "{} {}: {:.6e} {cmp} {:.6e}",
                    if check.pass { "PASS" } else { "FAIL" },
                    check.name,
                    check.statistic,
                    check.threshold
                );
            }
            emit(c.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
            Ok(report.all_pass)
        }
        Command::Bench(c) => {
            let cfg = load_config(&c)?;
            let rows = run_bench(&cfg)?;
            let text = match c.format.unwrap_or(Format::Csv) {
                Format::Csv => bench_csv(&rows),
                Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
            };
            emit(c.out.as_deref(), &text)?;
            Ok(true)
        }
        Command::Figure1(c) => {
            let mut cfg = match &c.config {
                Some(p) => Figure1Config::load(p)?,
                None => Figure1Config::default(),
            };
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            let rows = cfg.run()?;
            let text = match c.format.unwrap_or(Format::Csv) {
                Format::Csv => figure1_csv(&rows),
                Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
            };
            emit(c.out.as_deref(), &text)?;
            Ok(true)
        }
    }
}

fn load_config(c: &Common) -> Result<Config> {
    let path = c.config.as_deref().context("--config is required")?;
    let mut cfg = Config::load(path)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
