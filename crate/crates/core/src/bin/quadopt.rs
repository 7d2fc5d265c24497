use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use quadopt::runner::{compare, compare_table, execute, load_job, sweep_design, RunSummary};

/// Continuous quadtree structure optimization.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write a density snapshot every N iterations (the final design is always written).
    #[arg(long, global = true, value_name = "N")]
    snapshot_every: Option<NonZeroUsize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the continuous optimizer described by a job file.
    Optimize { config: PathBuf },
    /// Run the greedy refine/coarsen baseline on a job's problem and volume fractions.
    Greedy { config: PathBuf },
    /// Probe a design snapshot with a small load moved along the top edge.
    Sweep {
        config: PathBuf,
        /// PGM snapshot of the design to probe.
        #[arg(long)]
        design: PathBuf,
        /// Number of load positions.
        #[arg(long, default_value_t = 101)]
        count: usize,
        /// CSV output; defaults to `sweep.csv` next to the snapshot.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run two jobs and print their compliances side by side.
    Compare { first: PathBuf, second: PathBuf },
}

fn print_summaries(rows: &[RunSummary]) {
    for r in rows {
        println!(
            "volume {:.4} (achieved {:.4})  compliance {:.6}  iterations {}  {}  -> {}",
            r.volume_fraction,
            r.achieved_volume,
            r.compliance,
            r.iterations,
            if r.converged { "converged" } else { "not converged" },
            r.dir.display()
        );
    }
}

fn main_inner(cli: Cli) -> quadopt::Result<()> {
    let every = cli.snapshot_every.map(NonZeroUsize::get);
    match cli.command {
        Command::Optimize { config } => {
            let job = load_job(&config)?;
            print_summaries(&execute(&job, every)?);
        }
        Command::Greedy { config } => {
            let mut job = load_job(&config)?;
            job.driver = quadopt::runner::Driver::Greedy;
            print_summaries(&execute(&job, every)?);
        }
        Command::Sweep {
            config,
            design,
            count,
            out,
        } => {
            let job = load_job(&config)?;
            let problem = job.build_problem()?;
            let out = out.unwrap_or_else(|| design.with_file_name("sweep.csv"));
            let r = sweep_design(&problem, &design, count, Some(&out))?;
            println!(
                "{} positions  range {:.6}  std dev {:.6}  -> {}",
                r.positions.len(),
                r.range,
                r.std_dev,
                out.display()
            );
        }
        Command::Compare { first, second } => {
            let a = load_job(&first)?;
            let b = load_job(&second)?;
            let rows = compare(&a, &b, every)?;
            println!("a = {}\nb = {}", first.display(), second.display());
            print!("{}", compare_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("quadopt: {e}");
            ExitCode::FAILURE
        }
    }
}
