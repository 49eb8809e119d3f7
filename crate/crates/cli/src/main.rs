//! `fairdrift`: run drift experiments and summarise their outputs.

use std::error::Error as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairdrift::harness::{self, SummaryRow};

#[derive(Parser, Debug)]
#[command(name = "fairdrift", version, about = "Federated learning under group-specific concept drift")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Recompute summary.csv and summary_pooled.csv of a run directory.
    Summarize {
        dir: PathBuf,
    },
}

/// Every flag maps onto the config key of the same name (dashes as underscores)
/// and overrides the value from `--config`.
#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// synthetic or idx.
    #[arg(long)]
    dataset: Option<String>,
    /// none, 4.1, 4.2, 4.3, 4.4 or 4.5.
    #[arg(long)]
    scenario: Option<String>,
    /// fedavg, feddrift, fairfeddrift or oracle.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Comma-separated thresholds; `inf` disables detection, `a/b` sets one per group.
    #[arg(long)]
    delta: Option<String>,
    /// Comma-separated window sizes or `full`.
    #[arg(long)]
    window: Option<String>,
    /// Seed count, or a comma-separated list of seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    idx_images: Option<String>,
    #[arg(long)]
    idx_labels: Option<String>,
    #[arg(long)]
    clients: Option<String>,
    #[arg(long)]
    timesteps: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    /// Examples per client per timestep.
    #[arg(long)]
    size: Option<String>,
    /// Class count of the synthetic dataset.
    #[arg(long)]
    classes: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let flags = [
            ("dataset", &self.dataset),
            ("scenario", &self.scenario),
            ("algorithm", &self.algorithm),
            ("alpha", &self.alpha),
            ("delta", &self.delta),
            ("window", &self.window),
            ("seeds", &self.seeds),
            ("out", &self.out),
            ("idx_images", &self.idx_images),
            ("idx_labels", &self.idx_labels),
            ("clients", &self.clients),
            ("timesteps", &self.timesteps),
            ("rounds", &self.rounds),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.learning_rate),
            ("hidden", &self.hidden),
            ("size", &self.size),
            ("classes", &self.classes),
        ];
        flags
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn print_table(rows: &[SummaryRow]) {
    println!("algorithm     delta    window  seeds  acc     aeq     oeq     opp     models  cum_disparity");
    for r in rows {
        println!(
            "{:<13} {:<8} {:<7} {:<6} {:<7} {:<7} {:<7} {:<7} {:<7.2} {}",
            r.algorithm,
            r.delta,
            r.window,
            r.seeds,
            fmt_opt(r.acc.mean),
            fmt_opt(r.aeq.mean),
            fmt_opt(r.oeq.mean),
            fmt_opt(r.opp.mean),
            r.final_models_mean,
            fmt_opt(r.cumulative_disparity.mean),
        );
    }
}

fn run(cli: Cli) -> fairdrift::Result<()> {
    match cli.command {
        Some(Command::Summarize { dir }) => {
            let (per_point, pooled) = harness::summarize_dir(&dir)?;
            harness::write_summary(&dir.join("summary.csv"), &per_point)?;
            harness::write_summary(&dir.join("summary_pooled.csv"), &pooled)?;
            print_table(&pooled);
        }
        None => {
            let cfg = harness::parse_config(cli.run.config.as_deref(), &cli.run.overrides())?;
            harness::run_experiment(&cfg)?;
            let (_, pooled) = harness::summarize_dir(&cfg.out)?;
            print_table(&pooled);
            println!("wrote {}", cfg.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprint!("error: {e}");
            let mut source = e.source();
            while let Some(s) = source {
                eprint!(": {s}");
                source = s.source();
            }
            eprintln!();
            ExitCode::FAILURE
        }
    }
}
