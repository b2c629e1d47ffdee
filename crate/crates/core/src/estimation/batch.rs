use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EstimatorConfig;
use super::scenario::{
    method1_scenario, method2_scenario, run_estimation, run_seeds, EstimationRun, Scenario,
};
use crate::error::Result;
use crate::network::{PowerFlowSolution, PowerSystemCase, ReducedModel};

/// Which validation scenario a batch draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSpec {
    Method1 { n_perturbed: usize },
    Method2 { branch: (usize, usize) },
}

impl ScenarioSpec {
    /// Build the scenario for one run. `model` must come from `case` and `pf`.
    pub fn build(
        &self,
        case: &PowerSystemCase,
        pf: &PowerFlowSolution,
        model: &ReducedModel,
        seed: u64,
        horizon: f64,
        dt: f64,
    ) -> Result<Scenario> {
        match *self {
            ScenarioSpec::Method1 { n_perturbed } => {
                method1_scenario(model, seed, n_perturbed, horizon, dt)
            }
            ScenarioSpec::Method2 { branch } => {
                method2_scenario(case, pf, branch, model.kind, horizon, dt)
            }
        }
    }
}

/// Averages over the runs of one placement.
///
/// Error means skip diverged runs; convergent-count means include them as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementSummary {
    /// Generator positions (0-based).
    pub placement: Vec<usize>,
    pub runs: usize,
    pub e_delta_mean: f64,
    pub e_omega_mean: f64,
    pub n_delta_mean: f64,
    pub diverged_count: usize,
}

impl PlacementSummary {
    pub fn from_runs<'a>(
        placement: &[usize],
        runs: impl IntoIterator<Item = &'a EstimationRun>,
    ) -> Self {
        let (mut ed, mut ew, mut nd, mut total, mut ok) = (0.0, 0.0, 0.0, 0usize, 0usize);
        for r in runs {
            total += 1;
            nd += r.metrics.n_delta as f64;
            if !r.diverged {
                ok += 1;
                ed += r.metrics.e_delta;
                ew += r.metrics.e_omega;
            }
        }
        let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
        Self {
            placement: placement.to_vec(),
            runs: total,
            e_delta_mean: mean(ed, ok),
            e_omega_mean: mean(ew, ok),
            n_delta_mean: mean(nd, total),
            diverged_count: total - ok,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchReport {
    pub seed: u64,
    pub summaries: Vec<PlacementSummary>,
    /// `runs[r][p]` is run `r` under placement `p`; empty unless requested.
    #[serde(skip)]
    pub runs: Vec<Vec<EstimationRun>>,
}

/// Monte-Carlo runs over `placements`. Run `r` builds one scenario from its
/// scenario seed and reuses it, and its noise seed, for every placement.
pub fn run_batch<F>(
    make_scenario: F,
    placements: &[Vec<usize>],
    runs: usize,
    seed: u64,
    cfg: &EstimatorConfig,
    keep_runs: bool,
) -> Result<BatchReport>
where
    F: Fn(u64) -> Result<Scenario> + Sync,
{
    let per_run: Vec<Result<Vec<EstimationRun>>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let (scenario_seed, noise_seed) = run_seeds(seed, r as u64);
            let scenario = make_scenario(scenario_seed)?;
            placements
                .iter()
                .map(|p| run_estimation(&scenario, p, cfg, noise_seed))
                .collect()
        })
        .collect();
    let per_run: Vec<Vec<EstimationRun>> = per_run.into_iter().collect::<Result<_>>()?;
    let summaries = placements
        .iter()
        .enumerate()
        .map(|(j, p)| PlacementSummary::from_runs(p, per_run.iter().map(|r| &r[j])))
        .collect();
    Ok(BatchReport {
        seed,
        summaries,
        runs: if keep_runs { per_run } else { Vec::new() },
    })
}
