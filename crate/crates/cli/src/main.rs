use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dkf_core::harness::{self, report, ExperimentConfig, GraphSpec};
use dkf_core::Error;

#[derive(Parser)]
#[command(name = "dkf-net", version, about = "Distributed Kalman filtering over lossy networks")]
struct Cli {
    /// Edge-list file replacing the configured topology.
    #[arg(long, global = true)]
    graph: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// MSE versus consensus steps for every configured link-retention probability.
    Mse {
        #[command(flatten)]
        common: Common,
        /// Seed replacing the configured one.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Spectral stability bounds and minimal consensus step counts.
    Bounds {
        #[command(flatten)]
        common: Common,
    },
    /// Minimal link-retention probability keeping the MSE near the centralized filter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Allowed relative MSE excess over the centralized filter.
        #[arg(long, default_value_t = 0.10)]
        tol: f64,
    },
    /// Gain agreement phase alone, with gain-estimate errors.
    Pushsum {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the configured one).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(common: &Common, graph: &Option<PathBuf>) -> Result<ExperimentConfig, Error> {
    let mut cfg = harness::parse_config(&common.config)?;
    if let Some(g) = graph {
        cfg.graph = GraphSpec::File(g.clone());
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn warn_delta(cfg: &ExperimentConfig) -> Result<(), Error> {
    let graph = cfg.build_graph()?;
    if let (_, Some(w)) = cfg.params(&graph, 1)? {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Mse { common, seed } => {
            let mut cfg = load(&common, &cli.graph)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            warn_delta(&cfg)?;
            let table = harness::run_mse_experiment(&cfg)?;
            let csv = report::mse_csv(&table);
            let path = report::write_output(&cfg.out_dir, "mse.csv", &csv)?;
            print!("{csv}");
            eprintln!("wrote {}", path.display());
        }
        Command::Bounds { common } => {
            let cfg = load(&common, &cli.graph)?;
            warn_delta(&cfg)?;
            let rows = harness::run_bounds_report(&cfg)?;
            let text = report::bounds_text(&rows);
            report::write_output(&cfg.out_dir, "bounds.txt", &text)?;
            let path = report::write_output(&cfg.out_dir, "bounds.csv", &report::bounds_csv(&rows))?;
            print!("{text}");
            eprintln!("wrote {}", path.display());
        }
        Command::Sweep { common, tol } => {
            if !(tol >= 0.0) {
                return Err(Error::InvalidParameter(format!("tolerance must be non-negative, got {tol}")));
            }
            let cfg = load(&common, &cli.graph)?;
            warn_delta(&cfg)?;
            let rows = harness::run_min_pbeta_sweep(&cfg, tol)?;
            let csv = report::sweep_csv(&rows, tol);
            let path = report::write_output(&cfg.out_dir, "sweep.csv", &csv)?;
            print!("{csv}");
            eprintln!("wrote {}", path.display());
        }
        Command::Pushsum { common } => {
            let cfg = load(&common, &cli.graph)?;
            let rows = harness::run_pushsum_report(&cfg)?;
            let csv = report::pushsum_csv(&rows);
            let path = report::write_output(&cfg.out_dir, "pushsum.csv", &csv)?;
            print!("{csv}");
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
