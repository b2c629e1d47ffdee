//! Placement sweeps over the PMU budget and optimal-vs-random estimation
//! comparisons.

mod synthetic;

pub use synthetic::{synthetic_case, SYNTHETIC20_SEED};

use std::ops::RangeInclusive;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    run_estimation, run_seeds, EstimationRun, EstimatorConfig, PlacementSummary, ScenarioSpec,
};
use crate::gramian::{min_max_eigenvalue, GramianBank};
use crate::network::{PowerFlowSolution, PowerSystemCase, ReducedModel};
use crate::placement::{solve, MadsOptions, Placement, Solver};

/// One budget of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub g_bar: usize,
    /// Generator ids, 1-based.
    pub placement: Vec<usize>,
    pub logdet: f64,
    pub sigma_min: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub time_s: f64,
}

fn check_range(range: &RangeInclusive<usize>, g: usize) -> Result<()> {
    if range.is_empty() || *range.start() == 0 || *range.end() > g {
        return Err(Error::InvalidArgument(format!(
            "PMU range {}..={} must be non-empty and lie within 1..={g}",
            range.start(),
            range.end()
        )));
    }
    Ok(())
}

/// Best placement for every budget in `range`.
pub fn run_sweep(
    bank: &GramianBank,
    range: RangeInclusive<usize>,
    solver: Solver,
    mads: &MadsOptions,
) -> Result<Vec<SweepRow>> {
    check_range(&range, bank.n_sites())?;
    range
        .map(|k| {
            let start = Instant::now();
            let p = solve(bank, k, solver, mads)?;
            let time_s = start.elapsed().as_secs_f64();
            let (sigma_min, _) = min_max_eigenvalue(&bank.sum(&p.sites()))?;
            Ok(SweepRow {
                g_bar: k,
                placement: p.ids(),
                logdet: p.objective,
                sigma_min,
                evaluations: p.evaluations,
                converged: p.converged,
                time_s,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOptions {
    pub runs: usize,
    pub seed: u64,
    pub scenario: ScenarioSpec,
    /// Length of each estimation run, seconds.
    pub horizon: f64,
    pub solver: Solver,
    pub mads: MadsOptions,
}

/// Optimal against random placement at one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub g_bar: usize,
    /// Generator ids, 1-based.
    pub optimal_placement: Vec<usize>,
    pub optimal: PlacementSummary,
    /// Pooled over the runs; each run draws its own random placement.
    pub random: PlacementSummary,
}

/// The random placement of every run at budget `k`. Drawn from their own
/// stream so that changing the budget range leaves other budgets alone.
pub fn random_placements(seed: u64, g: usize, k: usize, runs: usize) -> Vec<Vec<usize>> {
    let (stream_seed, _) = run_seeds(seed, (1u64 << 32) + k as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    (0..runs)
        .map(|_| {
            let mut s = sample(&mut rng, g, k).into_vec();
            s.sort_unstable();
            s
        })
        .collect()
}

/// For each budget, estimate with the optimal placement and with a random
/// one. Run `r` shares its scenario and noise across both, and across
/// budgets.
pub fn run_comparison(
    case: &PowerSystemCase,
    pf: &PowerFlowSolution,
    model: &ReducedModel,
    bank: &GramianBank,
    range: RangeInclusive<usize>,
    opts: &ComparisonOptions,
    cfg: &EstimatorConfig,
) -> Result<Vec<ComparisonRow>> {
    let g = model.n_gen();
    check_range(&range, g)?;
    if bank.n_sites() != g {
        return Err(Error::Dimension {
            expected: g,
            got: bank.n_sites(),
        });
    }
    if opts.runs == 0 {
        return Err(Error::InvalidArgument(
            "comparison needs at least one run".into(),
        ));
    }
    let budgets: Vec<usize> = range.collect();
    let optimal: Vec<Placement> = budgets
        .iter()
        .map(|&k| solve(bank, k, opts.solver, &opts.mads))
        .collect::<Result<_>>()?;
    let random: Vec<Vec<Vec<usize>>> = budgets
        .iter()
        .map(|&k| random_placements(opts.seed, g, k, opts.runs))
        .collect();

    let dt = cfg.substep;
    let per_run: Vec<Result<Vec<(EstimationRun, EstimationRun)>>> = (0..opts.runs)
        .into_par_iter()
        .map(|r| {
            let (scenario_seed, noise_seed) = run_seeds(opts.seed, r as u64);
            let scenario = opts
                .scenario
                .build(case, pf, model, scenario_seed, opts.horizon, dt)?;
            budgets
                .iter()
                .enumerate()
                .map(|(j, _)| {
                    let best = run_estimation(&scenario, &optimal[j].sites(), cfg, noise_seed)?;
                    let rand = run_estimation(&scenario, &random[j][r], cfg, noise_seed)?;
                    Ok((best, rand))
                })
                .collect()
        })
        .collect();
    let per_run: Vec<Vec<(EstimationRun, EstimationRun)>> =
        per_run.into_iter().collect::<Result<_>>()?;

    Ok(budgets
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let best = optimal[j].sites();
            ComparisonRow {
                g_bar: k,
                optimal_placement: optimal[j].ids(),
                optimal: PlacementSummary::from_runs(&best, per_run.iter().map(|r| &r[j].0)),
                random: PlacementSummary::from_runs(&[], per_run.iter().map(|r| &r[j].1)),
            }
        })
        .collect())
}
