use std::path::PathBuf;
use std::process::ExitCode;

use bigmodel_core::expansion_sim::Scenario;
use bigmodel_core::fixture;
use bigmodel_core::pipeline::{Overrides, Pipeline, Stage};
use clap::{Args, Parser, Subcommand};

/// Parcel delineation, urban identification, expansion simulation and
/// PM2.5 exposure estimation.
#[derive(Parser)]
#[command(name = "bigmodel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Delineate parcels from road networks.
    Parcels(RunArgs),
    /// Count POIs and standardize density.
    Density(RunArgs),
    /// Identify current urban parcels against area targets.
    Identify(RunArgs),
    /// Fit transition weights from two observed maps.
    Calibrate(RunArgs),
    /// Simulate scenario-driven expansion.
    Simulate(RunArgs),
    /// Estimate population exposure to PM2.5.
    Exposure(RunArgs),
    /// Run every stage in order.
    All(RunArgs),
    /// Write the synthetic toy-nation inputs.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = fixture::BUNDLED_SEED)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    /// Artifact directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: bigmodel_core::Error| e.to_string())
}

fn run(stages: Option<Stage>, args: &RunArgs) -> bigmodel_core::Result<()> {
    let overrides = Overrides {
        seed: args.seed,
        scenario: args.scenario,
        out_dir: args.out.clone(),
    };
    let pipeline = Pipeline::from_file(&args.config, &overrides)?;
    match stages {
        Some(s) => {
            pipeline.run(s)?;
        }
        None => {
            pipeline.run_all()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (stage, args) = match &cli.command {
        Command::Parcels(a) => (Some(Stage::Parcels), a),
        Command::Density(a) => (Some(Stage::Density), a),
        Command::Identify(a) => (Some(Stage::Identify), a),
        Command::Calibrate(a) => (Some(Stage::Calibrate), a),
        Command::Simulate(a) => (Some(Stage::Simulate), a),
        Command::Exposure(a) => (Some(Stage::Exposure), a),
        Command::All(a) => (None, a),
        Command::Fixture { out, seed } => {
            return match fixture::write_toy_nation(out, *seed) {
                Ok(t) => {
                    log::info!("wrote toy nation ({} parcels) to {}", t.parcels, t.dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    log::error!("{e}");
                    ExitCode::from(e.exit_code())
                }
            };
        }
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            log::error!("--jobs must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(j);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            log::error!("cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(stage, args)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
