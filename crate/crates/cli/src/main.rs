use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use optdesign_cli::{Pipeline, Result};

#[derive(Parser)]
#[command(name = "optdesign", version, about = "Optimal designs for treatment comparisons with covariates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Job configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Seed for the sparsification objectives; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the optimal product design.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Replace a design by a sparse one with the same information.
    Sparsify {
        #[command(flatten)]
        common: Common,
        /// Design to sparsify; defaults to the optimal product design.
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Round a design to an exact design and report its efficiency.
    Round {
        #[command(flatten)]
        common: Common,
        /// Design to round; defaults to the optimal product design.
        #[arg(long)]
        design: Option<PathBuf>,
        /// Number of trials; defaults to the config's list.
        #[arg(long)]
        n: Option<u64>,
    },
    /// Write the sweep data for the configured figures.
    Figures {
        #[command(flatten)]
        common: Common,
    },
    /// Check that a design is as informative as the optimal product design.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        design: PathBuf,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve { common }
            | Command::Sparsify { common, .. }
            | Command::Round { common, .. }
            | Command::Figures { common }
            | Command::Verify { common, .. } => common,
        }
    }
}

fn run(cli: Cli) -> Result<String> {
    let common = cli.command.common();
    let pipeline = Pipeline::load(&common.config, common.seed)?;
    let out = pipeline.out_dir(common.out.as_deref());
    let report = match &cli.command {
        Command::Solve { .. } => pipeline.run_solve(&out)?,
        Command::Sparsify { design, .. } => pipeline.run_sparsify(design.as_deref(), &out)?,
        Command::Round { design, n, .. } => pipeline.run_round(design.as_deref(), *n, &out)?,
        Command::Figures { .. } => pipeline.run_figures(&out)?,
        Command::Verify { design, .. } => pipeline.run_verify(design, &out)?,
    };
    Ok(report.render())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
