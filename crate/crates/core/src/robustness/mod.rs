//! Placement stability under load fluctuations and line contingencies.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{build_fault_schedule, FaultTiming};
use crate::error::{Error, Result};
use crate::estimation::run_seeds;
use crate::gramian::{per_generator_bank, GramianBank, GramianConfig};
use crate::network::{
    apply_load_scaling, branch_active_flows, init_steady_state, sample_load_factors,
    solve_power_flow, MachineModel, PowerFlowSolution, PowerSystemCase, ReducedModel,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::placement::{evaluate, solve, MadsOptions, Placement, Solver};

/// Integration step used to reach the contingency reference state; it puts
/// the default breaker times on grid points.
pub const CONTINGENCY_DT: f64 = 1.0 / 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fluctuation,
    Contingency,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fluctuation" => Ok(Self::Fluctuation),
            "contingency" => Ok(Self::Contingency),
            other => Err(Error::InvalidArgument(format!(
                "unknown robustness mode '{other}'"
            ))),
        }
    }
}

/// Load-scaled operating point. `model` is `None` when the scaled power flow
/// did not converge.
#[derive(Debug, Clone)]
pub struct FluctuationCase {
    pub alpha: Vec<f64>,
    pub case: PowerSystemCase,
    pub model: Option<ReducedModel>,
    pub max_mismatch: f64,
}

/// Scale every load by its own `alpha_i ~ U(2 - gamma, gamma)` and re-solve.
pub fn fluctuation_case(
    case: &PowerSystemCase,
    kind: MachineModel,
    gamma: f64,
    seed: u64,
) -> Result<FluctuationCase> {
    let alpha = sample_load_factors(case.load_buses().len(), gamma, seed)?;
    let scaled = apply_load_scaling(case, &alpha)?;
    let pf = solve_power_flow(&scaled, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let model = if pf.converged {
        Some(init_steady_state(&scaled, &pf, kind)?)
    } else {
        None
    };
    Ok(FluctuationCase {
        alpha,
        case: scaled,
        model,
        max_mismatch: pf.max_mismatch,
    })
}

/// Post-clearing model of a fault on `branch`, with its reference state set
/// to the simulated state at the remote clearing instant.
pub fn contingency_case(
    case: &PowerSystemCase,
    pf: &PowerFlowSolution,
    kind: MachineModel,
    branch: (usize, usize),
) -> Result<ReducedModel> {
    let timing = FaultTiming::default();
    let schedule = build_fault_schedule(case, pf, kind, branch, timing)?;
    let x0 = schedule.post_fault().x0.clone();
    let x_cont: DVector<f64> = if timing.t_clear_remote > 0.0 {
        schedule
            .simulate(&x0, timing.t_clear_remote, CONTINGENCY_DT)?
            .last()
            .clone()
    } else {
        x0
    };
    Ok(schedule.post_fault().with_reference(x_cont))
}

/// The `count` most heavily loaded in-service branches that pass the
/// generator-terminal rule, as (from, to) bus ids.
pub fn ranked_contingencies(
    case: &PowerSystemCase,
    pf: &PowerFlowSolution,
    count: usize,
) -> Result<Vec<(usize, usize)>> {
    let flows = branch_active_flows(case, pf)?;
    let gens = case.generator_buses();
    let mut order: Vec<usize> = (0..case.branches.len())
        .filter(|&k| {
            let b = &case.branches[k];
            b.status && !gens.contains(&b.from) && !gens.contains(&b.to)
        })
        .collect();
    order.sort_by(|&a, &b| flows[b].total_cmp(&flows[a]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(count)
        .map(|k| (case.branches[k].from, case.branches[k].to))
        .collect())
}

/// `|A ∩ B| / k` for two placements of the same cardinality `k`.
pub fn overlap_ratio(a: &Placement, b: &Placement) -> Result<f64> {
    if a.cardinality != b.cardinality || a.z.len() != b.z.len() {
        return Err(Error::CardinalityMismatch(a.cardinality, b.cardinality));
    }
    if a.cardinality == 0 {
        return Err(Error::InfeasibleCardinality { k: 0, g: a.z.len() });
    }
    let shared = a.z.iter().zip(&b.z).filter(|(x, y)| **x && **y).count();
    Ok(shared as f64 / a.cardinality as f64)
}

/// Objective of `base` under a disturbed bank; `-inf` when singular.
pub fn cross_evaluate(base: &Placement, disturbed: &GramianBank) -> Result<f64> {
    evaluate(&base.z, disturbed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessOptions {
    pub mode: Mode,
    pub kind: MachineModel,
    /// PMU counts to study.
    pub pmus: Vec<usize>,
    pub solver: Solver,
    pub mads: MadsOptions,
    pub gramian: GramianConfig,
    /// Fluctuation: number of seeded cases. Contingency: number of ranked
    /// branches, unless `branches` is given.
    pub cases: usize,
    pub gamma: f64,
    pub seed: u64,
    pub branches: Option<Vec<(usize, usize)>>,
}

impl Default for RobustnessOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Fluctuation,
            kind: MachineModel::Classical,
            pmus: vec![1, 2],
            solver: Solver::Exhaustive,
            mads: MadsOptions::default(),
            gramian: GramianConfig::default(),
            cases: 6,
            gamma: 1.05,
            seed: 0,
            branches: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseDescriptor {
    Fluctuation { seed: u64, alpha: Vec<f64> },
    Contingency { branch: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub pmus: usize,
    /// Generator ids, 1-based.
    pub placement: Vec<usize>,
    pub logdet: f64,
}

impl PlacementRecord {
    fn of(p: &Placement) -> Self {
        Self {
            pmus: p.cardinality,
            placement: p.ids(),
            logdet: p.objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub optimal: PlacementRecord,
    /// Base placement evaluated under this case's Gramians.
    pub base_logdet: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub descriptor: CaseDescriptor,
    /// Why the case was skipped, if it was.
    pub skipped: Option<String>,
    pub results: Vec<CaseResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRatio {
    pub pmus: usize,
    pub mean: f64,
    pub cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub mode: Mode,
    pub seed: u64,
    pub base: Vec<PlacementRecord>,
    pub cases: Vec<CaseRecord>,
    pub mean_ratios: Vec<MeanRatio>,
}

fn compare(
    base: &[Placement],
    bank: &GramianBank,
    opts: &RobustnessOptions,
) -> Result<Vec<CaseResult>> {
    base.iter()
        .map(|b| {
            let opt = solve(bank, b.cardinality, opts.solver, &opts.mads)?;
            Ok(CaseResult {
                optimal: PlacementRecord::of(&opt),
                base_logdet: cross_evaluate(b, bank)?,
                ratio: overlap_ratio(b, &opt)?,
            })
        })
        .collect()
}

/// Optimal placements of the base case and of every disturbed case, with
/// overlap ratios per PMU count.
pub fn robustness_study(
    case: &PowerSystemCase,
    pf: &PowerFlowSolution,
    opts: &RobustnessOptions,
) -> Result<RobustnessReport> {
    if opts.pmus.is_empty() {
        return Err(Error::InvalidArgument("no PMU counts to study".into()));
    }
    let base_model = init_steady_state(case, pf, opts.kind)?;
    let base_bank = per_generator_bank(&base_model, &opts.gramian)?;
    let base: Vec<Placement> = opts
        .pmus
        .iter()
        .map(|&k| solve(&base_bank, k, opts.solver, &opts.mads))
        .collect::<Result<_>>()?;

    let descriptors: Vec<CaseDescriptor> = match opts.mode {
        Mode::Fluctuation => (0..opts.cases)
            .map(|i| CaseDescriptor::Fluctuation {
                seed: run_seeds(opts.seed, i as u64).0,
                alpha: Vec::new(),
            })
            .collect(),
        Mode::Contingency => {
            let branches = match &opts.branches {
                Some(b) => b.clone(),
                None => ranked_contingencies(case, pf, opts.cases)?,
            };
            branches
                .into_iter()
                .map(|branch| CaseDescriptor::Contingency { branch })
                .collect()
        }
    };

    let records: Vec<Result<CaseRecord>> = descriptors
        .into_par_iter()
        .map(|d| match d {
            CaseDescriptor::Fluctuation { seed, .. } => {
                let fc = fluctuation_case(case, opts.kind, opts.gamma, seed)?;
                let descriptor = CaseDescriptor::Fluctuation {
                    seed,
                    alpha: fc.alpha,
                };
                match fc.model {
                    None => Ok(CaseRecord {
                        descriptor,
                        skipped: Some(format!(
                            "power flow did not converge (max mismatch {:.3e})",
                            fc.max_mismatch
                        )),
                        results: Vec::new(),
                    }),
                    Some(model) => Ok(CaseRecord {
                        descriptor,
                        skipped: None,
                        results: compare(&base, &per_generator_bank(&model, &opts.gramian)?, opts)?,
                    }),
                }
            }
            CaseDescriptor::Contingency { branch } => {
                let model = contingency_case(case, pf, opts.kind, branch)?;
                Ok(CaseRecord {
                    descriptor: d,
                    skipped: None,
                    results: compare(&base, &per_generator_bank(&model, &opts.gramian)?, opts)?,
                })
            }
        })
        .collect();
    let cases: Vec<CaseRecord> = records.into_iter().collect::<Result<_>>()?;

    let mean_ratios = base
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let used: Vec<f64> = cases
                .iter()
                .filter(|c| c.skipped.is_none())
                .map(|c| c.results[j].ratio)
                .collect();
            MeanRatio {
                pmus: b.cardinality,
                mean: if used.is_empty() {
                    f64::NAN
                } else {
                    used.iter().sum::<f64>() / used.len() as f64
                },
                cases: used.len(),
            }
        })
        .collect();

    Ok(RobustnessReport {
        mode: opts.mode,
        seed: opts.seed,
        base: base.iter().map(PlacementRecord::of).collect(),
        cases,
        mean_ratios,
    })
}
