use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heatlab_cli::{run_experiment, ExperimentConfig, RunError};

#[derive(Parser)]
#[command(name = "heatlab", version, about = "Heat kernel and semilinear blow-up experiments on graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline named in the config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

/// `HEATLAB_THREADS` caps the worker pool.
fn init_threads() -> Result<(), RunError> {
    let Ok(value) = std::env::var("HEATLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| RunError::ConfigParse(format!("HEATLAB_THREADS = {value:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| RunError::ConfigParse(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Validate { config } => ExperimentConfig::from_path(&config).map(|cfg| {
            println!("config ok: pipeline {:?}", cfg.pipeline);
        }),
        Command::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            run_experiment(&cfg).map(|m| {
                println!("wrote {} files and manifest.json to {}", m.files.len(), cfg.output_dir.display());
            })
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
