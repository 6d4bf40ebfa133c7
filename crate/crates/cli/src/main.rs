//! Staged pipeline: `solve -> fees -> audit -> simulate -> verify`, each stage
//! reading its inputs from and writing its artifacts to one output directory.

mod error;
mod manifest;
mod stages;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use costly_auction::MechanismConfig;
use log::LevelFilter;

use crate::error::{CliError, CliResult};
use crate::manifest::{config_hash, RunManifest};
use crate::stages::Context;

#[derive(Parser)]
#[command(name = "costly-auction", version, about = "Two-stage auctions with costly learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the symmetric experiment equilibrium.
    Solve(Common),
    /// Chain-closure fees from the solved profile.
    Fees(Common),
    /// Minimal audit probabilities and the no-audit benchmark.
    Audit(Common),
    /// Monte Carlo run of the solved mechanism.
    Simulate(Common),
    /// Feasibility, transform and competitor checks.
    Verify(Common),
    /// All stages in order.
    RunAll(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory.
    #[arg(long, env = "COSTLY_AUCTION_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the worker thread count.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the number of simulated auctions.
    #[arg(long)]
    runs: Option<usize>,
    /// Keeps every simulated auction in records.csv.
    #[arg(long)]
    trace: bool,
    #[arg(short, long)]
    verbose: bool,
}

fn load_config(path: &PathBuf) -> CliResult<MechanismConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    MechanismConfig::from_json_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn context(c: &Common) -> CliResult<Context> {
    let cfg = load_config(&c.config)?;
    let hash = config_hash(&cfg);
    if let Some(w) = c.workers {
        if w == 0 {
            return Err(CliError::Input("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    fs::create_dir_all(&c.out_dir)?;
    let seed = c.seed.unwrap_or(cfg.seed);
    let manifest = RunManifest::open(&c.out_dir, &hash, &c.config.display().to_string(), seed)?;
    Ok(Context {
        runs: c.runs.unwrap_or(cfg.runs),
        cfg,
        out_dir: c.out_dir.clone(),
        seed,
        trace: c.trace,
        manifest,
    })
}

fn run_all(ctx: &mut Context) -> CliResult<()> {
    let solved = stages::solve(ctx);
    if let Err(CliError::Input(_)) = solved {
        return solved;
    }
    stages::fees(ctx)?;
    stages::audit(ctx)?;
    stages::simulate(ctx)?;
    stages::verify(ctx)?;
    solved
}

fn run(cli: Cli) -> CliResult<()> {
    let (common, stage): (&Common, fn(&mut Context) -> CliResult<()>) = match &cli.command {
        Command::Solve(c) => (c, stages::solve),
        Command::Fees(c) => (c, stages::fees),
        Command::Audit(c) => (c, stages::audit),
        Command::Simulate(c) => (c, stages::simulate),
        Command::Verify(c) => (c, stages::verify),
        Command::RunAll(c) => (c, run_all),
    };
    env_logger::Builder::new()
        .filter_level(if common.verbose { LevelFilter::Info } else { LevelFilter::Warn })
        .init();
    let mut ctx = context(common)?;
    stage(&mut ctx)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
