use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mmw_pgp::harness::{self, ScenarioConfig};

#[derive(Parser)]
#[command(name = "mmw-pgp", about = "Multi-user mmWave precoding link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Scenario {
    /// Scenario file, or a preset name (`scenario1`, `scenario2`).
    #[arg(long)]
    config: String,
    /// Master seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials; overrides the file.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write records, figure data and summaries.
    Run(Scenario),
    /// Required average SNR with and without per-group power allocation.
    SweepOpgpa {
        #[command(flatten)]
        scenario: Scenario,
        /// Comma-separated QoS targets in bits.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        is_grid: Vec<f64>,
    },
    /// Summarize an existing output directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Cell area for SEUA; defaults to the scenario-1 ring.
        #[arg(long)]
        config: Option<String>,
    },
}

fn load(name: &str) -> Result<ScenarioConfig> {
    let path = PathBuf::from(name);
    if path.exists() {
        return ScenarioConfig::load(&path).with_context(|| format!("loading {}", path.display()));
    }
    ScenarioConfig::preset(name).with_context(|| format!("no config file or preset named {name:?}"))
}

fn configure(s: &Scenario) -> Result<ScenarioConfig> {
    let mut cfg = load(&s.config)?;
    if let Some(seed) = s.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = s.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SIM_THREADS") {
        let n: usize = v.parse().with_context(|| format!("SIM_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    init_threads()?;
    match cli.command {
        Command::Run(s) => {
            let cfg = configure(&s)?;
            let out = harness::run_scenario(&cfg)?;
            let summary = harness::emit(&cfg, &out, &s.out)?;
            print!("{}", harness::render_summary(&summary));
            for f in &out.failures {
                eprintln!("trial seed {} failed: {}", f.seed, f.error);
            }
            if out.trials.is_empty() {
                bail!("every trial failed");
            }
        }
        Command::SweepOpgpa { scenario, is_grid } => {
            let cfg = configure(&scenario)?;
            let (rows, failures) = harness::opgpa_sweep(&cfg, &is_grid)?;
            harness::emit_opgpa(&rows, &failures, &scenario.out)?;
            println!("{} group rows written to {}", rows.len(), scenario.out.display());
        }
        Command::Report { input, config } => {
            let cfg = match config {
                Some(c) => load(&c)?,
                None => ScenarioConfig::preset("scenario1").expect("preset"),
            };
            let records = harness::read_records(&input.join("records.csv"))?;
            if records.is_empty() {
                bail!("{} holds no records", input.display());
            }
            let summary = harness::aggregate(&records, cfg.geometry.area());
            print!("{}", harness::render_summary(&summary));
        }
    }
    Ok(())
}
