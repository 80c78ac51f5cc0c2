use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pvae_cli::config::Config;
use pvae_cli::error::CliError;
use pvae_cli::{run_stage, Stage};

#[derive(Parser)]
#[command(name = "pvae", version, about = "Sparse-view CT benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat JSON config; unspecified keys take the mode's defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory shared by all stages.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Worker threads; 1 gives the reference single-threaded run.
    #[arg(long, global = true, env = "PVAE_THREADS")]
    threads: Option<usize>,
    /// Override one config key, e.g. `--set epochs=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Phantoms, noiseless sinograms and noisy measurements.
    Generate,
    /// FBP, SIRT and TV reconstructions with metrics.
    Baselines,
    /// Train one autoencoder per schedule and trial.
    Train,
    /// Posterior estimates and metrics, or the toy oracle comparison.
    Evaluate,
    /// Summary tables and SVG charts.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> Result<(), CliError> {
        if let Some(n) = cli.threads {
            if n == 0 {
                return Err(CliError::Config("threads: must be ≥ 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(format!("threads: {e}")))?;
        }
        let cfg = Config::load(cli.config.as_deref(), &cli.set, cli.seed)?;
        let stage = match cli.command {
            Command::Generate => Stage::Generate,
            Command::Baselines => Stage::Baselines,
            Command::Train => Stage::Train,
            Command::Evaluate => Stage::Evaluate,
            Command::Report => Stage::Report,
        };
        let m = run_stage(stage, &cfg, &cli.out)?;
        println!(
            "{}: {} files, inventory {}",
            m.stage,
            m.inventory.len(),
            m.inventory_hash
        );
        Ok(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
