use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use structevo::Genome;
use structevo_cli::{compute_stats, genome_to_dot, read_rows, run_experiment, ExperimentConfig, Metric, THREADS_ENV};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

/// Multiobjective neuroevolution on the retina task with structural objectives.
#[derive(Parser)]
#[command(name = "structevo", version, after_help = "Set STRUCTEVO_THREADS to limit the worker-thread count.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every treatment and replicate of an experiment configuration.
    Run { config: PathBuf },
    /// Summarize CSV logs: medians, bootstrap intervals, pairwise Mann-Whitney tests.
    Stats {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// best_fitness, median_q, median_delta_to_mrec, median_mod_diversity or generations_to_optimum
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        generation: usize,
    },
    /// Print a genome dump as a GraphViz digraph colored by module.
    DumpNet { genome: PathBuf },
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    configure_threads()?;
    match command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = run_experiment(&cfg)?;
            println!("wrote {} ({} rows from {} cells)", out.results_csv.display(), out.data_rows(), out.cells.len());
        }
        Command::Stats { csv, metric, generation } => {
            let rows = read_rows(&csv)?;
            print!("{}", compute_stats(&rows, metric, generation)?);
        }
        Command::DumpNet { genome } => {
            let text =
                std::fs::read_to_string(&genome).with_context(|| format!("cannot read {}", genome.display()))?;
            let g = Genome::from_dump(&text).with_context(|| format!("malformed genome dump {}", genome.display()))?;
            print!("{}", genome_to_dot(&g));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
