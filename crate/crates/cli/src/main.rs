mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "graspfit", version, about = "Fit a skinned hand to an object mesh")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Iteration count, overriding the config.
    #[arg(long)]
    iters: Option<usize>,
    /// vlm | mock:closest | mock:penetration | mock:fixture:<path>
    #[arg(long)]
    selector: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let o = Overrides { out: self.out.clone(), iters: self.iters, selector: self.selector.clone(), seed: self.seed };
        RunConfig::load(&self.config, &o)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the concise object mesh and the per-vertex Gaussians.
    Prepare(Common),
    /// Fit the hand and write result.json, trace.csv and before/after renders.
    Optimize(Common),
    /// Pick the best translation from the candidate grid.
    Refine(Common),
    /// Render the latest parameters to scene.png.
    Render(Common),
    /// Tabulate metrics from result or refine JSON files.
    Metrics {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Prepare(c) => commands::prepare(&c.load()?).map(|_| ()),
        Command::Optimize(c) => commands::optimize(&c.load()?),
        Command::Refine(c) => commands::refine(&c.load()?),
        Command::Render(c) => commands::render(&c.load()?),
        Command::Metrics { results, out } => {
            let table = commands::metrics_table(&results)?;
            print!("{table}");
            if let Some(p) = out {
                std::fs::write(&p, &table)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
