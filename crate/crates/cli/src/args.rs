use std::ops::RangeInclusive;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use obsplace_core::network::MachineModel;
use obsplace_core::placement::Solver;
use obsplace_core::robustness::Mode;
use serde::Serialize;

/// Observability-driven PMU placement for multimachine power systems.
#[derive(Debug, Parser)]
#[command(name = "obsplace", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Case file (JSON).
    #[arg(long, global = true)]
    pub case: Option<PathBuf>,
    /// m1 (classical) or m2 (two-axis transient).
    #[arg(long, global = true, default_value = "m1")]
    pub model: MachineModel,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file, or directory for `estimate`. Stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "OBSPLACE_THREADS")]
    pub threads: Option<usize>,
    /// No progress messages on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Write 0 for every wall-clock field so reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Newton-Raphson power flow.
    Pf(PfArgs),
    /// Integrate the reduced model, optionally through a line fault.
    Simulate(SimulateArgs),
    /// Empirical observability Gramian of one PMU set.
    Gramian(GramianArgs),
    /// Best placement for a fixed PMU count.
    Place(PlaceArgs),
    /// Monte-Carlo state estimation for one placement.
    Estimate(EstimateArgs),
    /// Placement stability under load fluctuations or line outages.
    Robustness(RobustnessArgs),
    /// Best placement for each PMU count in a range.
    Sweep(SweepArgs),
    /// Optimal against random placement, estimated over many runs.
    Compare(CompareArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Pf(_) => "pf",
            Command::Simulate(_) => "simulate",
            Command::Gramian(_) => "gramian",
            Command::Place(_) => "place",
            Command::Estimate(_) => "estimate",
            Command::Robustness(_) => "robustness",
            Command::Sweep(_) => "sweep",
            Command::Compare(_) => "compare",
        }
    }
}

/// `from:to` bus ids.
pub fn parse_branch(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected FROM:TO, got '{s}'"))?;
    let p = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad bus id '{t}': {e}"))
    };
    Ok((p(a)?, p(b)?))
}

/// `lo:hi`, or a single count.
pub fn parse_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let p = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad count '{t}': {e}"))
    };
    match s.split_once(':') {
        Some((a, b)) => Ok(p(a)?..=p(b)?),
        None => {
            let k = p(s)?;
            Ok(k..=k)
        }
    }
}

/// `gen:radians`.
pub fn parse_offset(s: &str) -> Result<(usize, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected GEN:RADIANS, got '{s}'"))?;
    let g = a
        .trim()
        .parse::<usize>()
        .map_err(|e| format!("bad generator id '{a}': {e}"))?;
    let v = b
        .trim()
        .parse::<f64>()
        .map_err(|e| format!("bad offset '{b}': {e}"))?;
    Ok((g, v))
}

#[derive(Debug, Args, Serialize)]
pub struct PfArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 30)]
    pub max_iter: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Fault at the FROM end of branch FROM:TO, cleared at 0.05 s and 0.1 s.
    #[arg(long, value_parser = parse_branch)]
    pub fault: Option<(usize, usize)>,
    /// Initial rotor-angle offsets GEN:RADIANS, repeatable.
    #[arg(long = "offset", value_parser = parse_offset)]
    pub offsets: Vec<(usize, f64)>,
    #[arg(long, default_value_t = 1.0 / 120.0)]
    pub dt: f64,
    #[arg(long, default_value_t = 5.0)]
    pub horizon: f64,
    /// Also write PMU outputs of every generator to this CSV.
    #[arg(long)]
    #[serde(skip)]
    pub outputs: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Clone, Copy)]
pub struct GridArgs {
    /// Gramian horizon, seconds.
    #[arg(long, default_value_t = 5.0)]
    pub tf: f64,
    /// Gramian grid spacing, seconds.
    #[arg(long, default_value_t = 1.0 / 30.0)]
    pub dt: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct GramianArgs {
    /// Instrumented generator ids, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub pmu_at: Vec<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value = "mads")]
    pub solver: Solver,
    /// MADS evaluation budget beyond the warm start.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct PlaceArgs {
    #[arg(long)]
    pub pmus: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioArg {
    /// Random initial rotor-angle offsets.
    Method1,
    /// Three-phase line fault.
    Method2,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct ScenarioArgs {
    #[arg(long, value_enum, default_value = "method1")]
    pub scenario: ScenarioArg,
    /// Faulted branch FROM:TO for method2.
    #[arg(long, value_parser = parse_branch)]
    pub fault: Option<(usize, usize)>,
    /// Rotor angles offset per method1 run.
    #[arg(long, default_value_t = 1)]
    pub perturbed: usize,
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
    /// Length of each run, seconds.
    #[arg(long, default_value_t = 5.0)]
    pub horizon: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    /// Instrumented generator ids, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub placement: Vec<usize>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Skip the per-run trajectory CSVs.
    #[arg(long)]
    pub summary_only: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct RobustnessArgs {
    #[arg(long, default_value = "fluctuation")]
    pub mode: Mode,
    /// Fluctuation cases, or top-ranked branches for contingencies.
    #[arg(long, default_value_t = 6)]
    pub cases: usize,
    /// Load factors are drawn from [1, gamma].
    #[arg(long, default_value_t = 1.05)]
    pub gamma: f64,
    /// Explicit contingency branches FROM:TO, comma-separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_branch)]
    pub branches: Vec<(usize, usize)>,
    #[arg(long, value_parser = parse_range, default_value = "1:2")]
    pub pmus_range: RangeInclusive<usize>,
    #[arg(long, default_value = "exhaustive")]
    pub solver: Solver,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// PMU counts LO:HI; every generator count when omitted.
    #[arg(long, value_parser = parse_range)]
    pub pmus_range: Option<RangeInclusive<usize>>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long, value_parser = parse_range)]
    pub pmus_range: Option<RangeInclusive<usize>>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}
