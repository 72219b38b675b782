//! Command-line driver for the multiscale transport experiments.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gmsfem::experiment::{run_experiment, sweep_epsilon, ExperimentConfig};
use gmsfem::offline::SnapshotMethod;

#[derive(Parser)]
#[command(
    name = "gmsfem",
    about = "Multiscale solver experiments for steady discrete-ordinates transport",
    version
)]
struct Cli {
    /// Worker threads for block-local offline work. Affects speed only;
    /// results are identical for every setting.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file and write its CSV table.
    Run {
        /// Path to the flat key = value config document.
        config: PathBuf,
        /// Force deterministic delta-inflow snapshots.
        #[arg(long, conflicts_with = "ran")]
        det: bool,
        /// Force randomized oversampled snapshots.
        #[arg(long)]
        ran: bool,
        /// Override the snapshot seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write fine and multiscale solution dumps with this path stem.
        #[arg(long)]
        dump_solution: Option<PathBuf>,
    },
    /// Run the experiment across several epsilon values, plus the
    /// eigenvalue study on the center block, into a combined CSV.
    Sweep {
        config: PathBuf,
        /// Comma-separated epsilon list.
        #[arg(long, value_delimiter = ',', required = true)]
        epsilon: Vec<f64>,
        #[arg(long, conflicts_with = "ran")]
        det: bool,
        #[arg(long)]
        ran: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    det: bool,
    ran: bool,
    seed: Option<u64>,
) -> Result<()> {
    if det {
        cfg.method = SnapshotMethod::Det;
    } else if ran {
        let (k, s) = match cfg.method {
            SnapshotMethod::Ran { k, seed } => (k, seed),
            SnapshotMethod::Det => (21, 0),
        };
        cfg.method = SnapshotMethod::Ran { k, seed: s };
    }
    if let Some(s) = seed {
        match &mut cfg.method {
            SnapshotMethod::Ran { seed, .. } => *seed = s,
            SnapshotMethod::Det => bail!("--seed requires randomized snapshots"),
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool setup failed")?;
    }

    match cli.command {
        Command::Run { config, det, ran, seed, dump_solution } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_overrides(&mut cfg, det, ran, seed)?;
            if dump_solution.is_some() {
                cfg.dump_solution = dump_solution;
            }
            let rows = run_experiment(&cfg).context("experiment failed")?;
            eprintln!("wrote {} rows to {}", rows.len(), cfg.resolved_output().display());
            for row in &rows {
                eprintln!(
                    "L = {:>5}  ratio = {:.4}  e1 = {:.4e}  e2 = {:.4e}  lambda* = {:.4e}",
                    row.label, row.snapshot_ratio, row.e1, row.e2, row.lambda_star
                );
            }
        }
        Command::Sweep { config, epsilon, det, ran, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_overrides(&mut cfg, det, ran, seed)?;
            let result = sweep_epsilon(&cfg, &epsilon).context("sweep failed")?;
            eprintln!(
                "wrote {} rows to {}",
                result.rows.len(),
                cfg.resolved_output().display()
            );
            if let Some(study) = &result.study {
                eprintln!(
                    "eigenvalue study on block {} across {} epsilon values",
                    study.block,
                    study.epsilons.len()
                );
            }
        }
    }
    Ok(())
}
