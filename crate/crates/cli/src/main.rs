//! Command-line front end: scenario loading, simulation, multi-start solves,
//! eta sweeps and topology checks. Emits CSV/JSON for external plotting.
//!
//! Exit codes: 0 success; 1 input or configuration error; 2 dynamics did not
//! reach stationarity within the horizon; 3 (check-graph) topology outside
//! the class with guaranteed convergence.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use wardrop_logit::scenario::{InitSpec, Scenario};

#[derive(Debug, Parser)]
#[command(
    name = "wardrop-logit",
    version,
    about = "Logit route-choice dynamics in heterogeneous routing games",
    long_about = "Simulates multi-population logit route-choice dynamics on directed \
multigraphs, solves for fixed points, sweeps the noise parameter against a \
brute-force equilibrium oracle, and classifies graph topology.\n\n\
Set WARDROP_LOGIT_LOG=debug (or info, trace) for diagnostics on stderr.\n\n\
Exit codes: 0 success; 1 input error; 2 not stationary within the horizon; \
3 (check-graph) convergence not guaranteed by the topology."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the dynamics and write the trajectory as CSV
    Simulate(SimulateArgs),
    /// Solve for fixed points from several seeded starts and report uniqueness
    Solve(SolveArgs),
    /// Solve along an increasing eta schedule and report distances to the
    /// oracle's equilibrium set as CSV
    SweepEta(SweepArgs),
    /// Classify the topology and print the contraction certificate
    CheckGraph(CheckArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Scenario file path, or builtin:<name> (example1, example2, example3)
    #[arg(long)]
    scenario: String,

    /// Override the scenario's inverse noise level
    #[arg(long)]
    eta: Option<f64>,

    /// Override the scenario's integrator step
    #[arg(long)]
    step: Option<f64>,

    /// Override the scenario's end time
    #[arg(long)]
    horizon: Option<f64>,

    /// Initial condition: uniform | seeded-random:SEED | file:PATH
    /// (PATH holds a JSON matrix of per-population route flows)
    #[arg(long)]
    init: Option<InitArg>,

    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads for multi-start and sweep jobs; output order is
    /// deterministic regardless
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Number of seeded initial states
    #[arg(long, default_value_t = 5)]
    starts: usize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Comma-separated, strictly increasing eta values
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,

    /// Oracle grid spacing (default: throughput/20 per population)
    #[arg(long)]
    grid_step: Option<f64>,

    /// Cap on oracle grid states
    #[arg(long)]
    oracle_cap: Option<u64>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// States sampled for the contraction certificate
    #[arg(long, default_value_t = 200)]
    certificate_samples: usize,
}

/// Parsed form of `--init`.
#[derive(Debug, Clone)]
enum InitArg {
    Uniform,
    SeededRandom(u64),
    File(PathBuf),
}

impl FromStr for InitArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "uniform" {
            return Ok(InitArg::Uniform);
        }
        if let Some(seed) = s.strip_prefix("seeded-random:") {
            return seed
                .parse()
                .map(InitArg::SeededRandom)
                .map_err(|e| format!("bad seed in `{s}`: {e}"));
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(InitArg::File(PathBuf::from(path)));
        }
        Err(format!(
            "expected uniform, seeded-random:SEED or file:PATH, got `{s}`"
        ))
    }
}

impl InitArg {
    fn to_spec(&self) -> Result<InitSpec, wardrop_logit::Error> {
        Ok(match self {
            InitArg::Uniform => InitSpec::Uniform,
            InitArg::SeededRandom(seed) => InitSpec::SeededRandom { seed: *seed },
            InitArg::File(path) => {
                let text = std::fs::read_to_string(path)?;
                let z: Vec<Vec<f64>> = serde_json::from_str(&text)?;
                InitSpec::Explicit { z }
            }
        })
    }
}

impl CommonArgs {
    /// Scenario with the CLI overrides applied.
    fn load(&self) -> Result<Scenario, wardrop_logit::Error> {
        let mut scenario = wardrop_logit::scenario::load_scenario(&self.scenario)?;
        if let Some(eta) = self.eta {
            scenario.dynamics.eta = eta;
        }
        if let Some(step) = self.step {
            scenario.dynamics.step = step;
        }
        if let Some(horizon) = self.horizon {
            scenario.dynamics.horizon = horizon;
        }
        if let Some(init) = &self.init {
            scenario.init = init.to_spec()?;
        }
        scenario.validate()?;
        Ok(scenario)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("WARDROP_LOGIT_LOG", "warn"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Solve(args) => commands::solve(args),
        Command::SweepEta(args) => commands::sweep_eta(args),
        Command::CheckGraph(args) => commands::check_graph(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
