use augbound::{run, ExperimentConfig, ExperimentKind, HarnessError};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Augmentation-aware bound experiments.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pixel-level min/max distance terms over an augmentation sweep.
    PixelDistances(RunArgs),
    /// The same terms in the embedding space of an encoder.
    ReprDistances(RunArgs),
    /// Bound certificates per sweep point.
    BoundReport(RunArgs),
    /// Exhaustive decomposition and bound checks on a finite world.
    DecompCheck(RunArgs),
    /// Train one encoder per sweep point, then probe it.
    TrainSweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory in the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Check the config and exit without running.
    #[arg(long)]
    validate: bool,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::PixelDistances(a) => (ExperimentKind::PixelDistances, a),
            Command::ReprDistances(a) => (ExperimentKind::ReprDistances, a),
            Command::BoundReport(a) => (ExperimentKind::BoundReport, a),
            Command::DecompCheck(a) => (ExperimentKind::DecompCheck, a),
            Command::TrainSweep(a) => (ExperimentKind::TrainSweep, a),
        }
    }
}

fn execute(kind: ExperimentKind, args: RunArgs) -> Result<(), HarnessError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.kind != kind {
        return Err(HarnessError::config("kind", format!("config is for {}, not {kind}", cfg.kind)));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    if args.validate {
        println!("{}: ok", args.config.display());
        return Ok(());
    }
    for file in run(&cfg)?.files {
        println!("{}", file.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (kind, args) = Cli::parse().command.split();
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
