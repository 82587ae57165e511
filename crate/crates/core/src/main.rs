use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use slod::experiment::{run_experiment, write_outputs, Diagnostics, ExperimentConfig};

#[derive(Parser)]
#[command(name = "slod", version, about = "Localized multiscale solvers for heterogeneous linear elasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence sweep described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for the patch computations.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory, overriding `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write bases.csv and companions.csv.
        #[arg(long)]
        dump_bases: bool,
        /// Comma-separated subset of `gram,kappa`.
        #[arg(long)]
        diagnostics: Option<String>,
    },
}

fn run() -> slod::Result<()> {
    let Command::Run { config, threads, out, dump_bases, diagnostics } = Cli::parse().command;
    let mut cfg = ExperimentConfig::from_file(&config)?;
    if threads.is_some() {
        cfg.threads = threads;
    }
    if let Some(out) = out {
        cfg.output = out;
    }
    cfg.dump_bases |= dump_bases;
    if let Some(list) = diagnostics {
        cfg.diagnostics = Diagnostics::parse(&list)?;
    }
    cfg.validate()?;

    faer::set_global_parallelism(faer::Par::Seq);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| slod::Error::InvalidInput(format!("thread pool: {e}")))?;
    let report = pool.install(|| run_experiment(&cfg))?;
    write_outputs(&cfg, &report, &cfg.output)?;
    for row in &report.rows {
        eprintln!(
            "{:<5} H=1/{:<3} m={:<2} L2={:.3e} H1={:.3e}",
            row.method.name(),
            row.n_coarse,
            row.m.map(|m| m.to_string()).unwrap_or_else(|| "-".into()),
            row.errors.l2,
            row.errors.h1_semi
        );
    }
    eprintln!("wrote {}", cfg.output.join("results.csv").display());
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
