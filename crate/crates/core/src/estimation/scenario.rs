use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::config::EstimatorConfig;
use super::metrics::{compute_metrics, RunMetrics};
use super::srukf::{srukf_step, FilterModel, FilterState, SrUkf};
use crate::dynamics::{
    build_fault_schedule, measure, modified_euler_step, simulate, FaultSchedule, FaultTiming,
    Trajectory,
};
use crate::error::{Error, ErrorKind, Result};
use crate::network::{MachineModel, PowerFlowSolution, PowerSystemCase, ReducedModel, StateLayout};

/// Seeds of run `index` under a global seed: (scenario, measurement noise).
///
/// Each index owns its own ChaCha stream, so adding runs never changes
/// earlier ones.
pub fn run_seeds(global: u64, index: u64) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(global);
    rng.set_stream(index);
    (rng.next_u64(), rng.next_u64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Initial angles moved by `offsets` at generator positions `perturbed`.
    Method1 {
        perturbed: Vec<usize>,
        offsets: Vec<f64>,
    },
    /// Cleared three-phase fault on `branch` (bus ids).
    Method2 { branch: (usize, usize) },
}

#[derive(Debug, Clone)]
enum TruthDynamics {
    Single(ReducedModel),
    Staged(FaultSchedule),
}

/// A truth trajectory plus what the filter is told about it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// On the integration grid.
    pub truth: Trajectory,
    /// Model the filter propagates with.
    pub filter_model: ReducedModel,
    pub initial_mean: DVector<f64>,
    dynamics: TruthDynamics,
}

impl Scenario {
    /// Model that produced the truth over step `k` of the integration grid.
    pub fn truth_model_at(&self, k: usize) -> &ReducedModel {
        match &self.dynamics {
            TruthDynamics::Single(m) => m,
            TruthDynamics::Staged(s) => s.stage_at_step(k, self.truth.dt),
        }
    }

    pub fn horizon(&self) -> f64 {
        (self.truth.len() - 1) as f64 * self.truth.dt
    }
}

/// Method 1 with explicit offsets: `delta_i += e_i`, filter starts at `x0`.
pub fn method1_with(
    model: &ReducedModel,
    perturbed: &[usize],
    offsets: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<Scenario> {
    if perturbed.len() != offsets.len() {
        return Err(Error::Dimension {
            expected: perturbed.len(),
            got: offsets.len(),
        });
    }
    let mut x = model.x0.clone();
    for (&i, &e) in perturbed.iter().zip(offsets) {
        if i >= model.n_gen() {
            return Err(Error::InvalidArgument(format!(
                "generator position {i} out of range"
            )));
        }
        x[model.layout.delta(i)] += e;
    }
    Ok(Scenario {
        kind: ScenarioKind::Method1 {
            perturbed: perturbed.to_vec(),
            offsets: offsets.to_vec(),
        },
        truth: simulate(model, &x, horizon, dt)?,
        filter_model: model.clone(),
        initial_mean: model.x0.clone(),
        dynamics: TruthDynamics::Single(model.clone()),
    })
}

/// Draw `n_perturbed` distinct generators and `e ~ U(-|delta0|, |delta0|)` for each.
pub fn method1_draw(
    model: &ReducedModel,
    seed: u64,
    n_perturbed: usize,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let g = model.n_gen();
    if n_perturbed > g {
        return Err(Error::InvalidArgument(format!(
            "cannot perturb {n_perturbed} of {g} generators"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perturbed = rand::seq::index::sample(&mut rng, g, n_perturbed).into_vec();
    let offsets = perturbed
        .iter()
        .map(|&i| {
            let a = model.x0[model.layout.delta(i)].abs();
            if a == 0.0 {
                0.0
            } else {
                rng.sample(Uniform::new_inclusive(-a, a).expect("finite bounds"))
            }
        })
        .collect();
    Ok((perturbed, offsets))
}

pub fn method1_scenario(
    model: &ReducedModel,
    seed: u64,
    n_perturbed: usize,
    horizon: f64,
    dt: f64,
) -> Result<Scenario> {
    let (perturbed, offsets) = method1_draw(model, seed, n_perturbed)?;
    method1_with(model, &perturbed, &offsets, horizon, dt)
}

/// Method 2: truth follows the fault schedule from the pre-fault equilibrium;
/// the filter runs the post-clearing model from that same equilibrium.
pub fn method2_scenario(
    case: &PowerSystemCase,
    pf: &PowerFlowSolution,
    branch: (usize, usize),
    kind: MachineModel,
    horizon: f64,
    dt: f64,
) -> Result<Scenario> {
    let schedule = build_fault_schedule(case, pf, kind, branch, FaultTiming::default())?;
    let x0 = schedule.post_fault().x0.clone();
    let truth = schedule.simulate(&x0, horizon, dt)?;
    Ok(Scenario {
        kind: ScenarioKind::Method2 { branch },
        truth,
        filter_model: schedule.post_fault().clone(),
        initial_mean: x0,
        dynamics: TruthDynamics::Staged(schedule),
    })
}

/// Filter view of a reduced model: `substeps` Heun steps per frame, PMU
/// outputs at `sites`.
pub struct FrameMap<'a> {
    pub model: &'a ReducedModel,
    pub sites: &'a [usize],
    pub dt: f64,
    pub substeps: usize,
}

impl FilterModel for FrameMap<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn transition(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut x = x.clone();
        for _ in 0..self.substeps {
            x = modified_euler_step(self.model, &x, self.dt)?;
        }
        Ok(x)
    }

    fn observation(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        measure(self.model, x, self.sites)
    }
}

/// One filter run on the PMU frame grid `t_k = k / sample_rate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationRun {
    /// Generator positions (0-based).
    pub placement: Vec<usize>,
    pub seed: u64,
    pub frame_period: f64,
    pub layout: StateLayout,
    pub truth: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
    /// Frame 0 is the initial mean; NaN after a divergence.
    pub estimate: Vec<DVector<f64>>,
    pub diverged: bool,
    pub refactorizations: usize,
    pub metrics: RunMetrics,
}

impl EstimationRun {
    pub fn times(&self) -> Vec<f64> {
        (0..self.truth.len())
            .map(|k| k as f64 * self.frame_period)
            .collect()
    }
}

/// Noisy PMU frames of the truth at `placement`.
///
/// Noise is drawn for every generator's outputs and then selected, so runs
/// that share a seed see the same noise at shared sites.
pub fn measurement_stream(
    scenario: &Scenario,
    placement: &[usize],
    cfg: &EstimatorConfig,
    noise_seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let sub = cfg.substeps()?;
    check_grid(scenario, cfg)?;
    let frames = (scenario.truth.len() - 1) / sub;
    let kind = scenario.filter_model.kind;
    let std = cfg.output_std(kind);
    let g = scenario.filter_model.n_gen();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    (0..=frames)
        .map(|k| {
            let step = k * sub;
            let clean = measure(
                scenario.truth_model_at(step),
                &scenario.truth.states[step],
                placement,
            )?;
            let z: Vec<f64> = (0..std.len() * g)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let m = placement.len();
            Ok(DVector::from_fn(clean.len(), |r, _| {
                let (t, j) = (r / m, r % m);
                clean[r] + std[t] * z[t * g + placement[j]]
            }))
        })
        .collect()
}

fn check_grid(scenario: &Scenario, cfg: &EstimatorConfig) -> Result<()> {
    if (scenario.truth.dt - cfg.substep).abs() > 1e-12 * cfg.substep {
        return Err(Error::InvalidArgument(format!(
            "scenario step {} differs from the filter substep {}",
            scenario.truth.dt, cfg.substep
        )));
    }
    Ok(())
}

/// Run the SR-UKF over a scenario. A numerical failure inside the filter
/// marks the run diverged instead of returning an error.
pub fn run_estimation(
    scenario: &Scenario,
    placement: &[usize],
    cfg: &EstimatorConfig,
    noise_seed: u64,
) -> Result<EstimationRun> {
    cfg.validate()?;
    let measurements = measurement_stream(scenario, placement, cfg, noise_seed)?;
    let sub = cfg.substeps()?;
    let model = &scenario.filter_model;
    let n = model.dim();
    let ukf = SrUkf::new(
        cfg.unscented,
        &cfg.q(n),
        &cfg.r(model.kind, placement.len()),
    )?;
    let map = FrameMap {
        model,
        sites: placement,
        dt: cfg.substep,
        substeps: sub,
    };
    let mut state = FilterState::new(scenario.initial_mean.clone(), &cfg.p0(&model.layout))?;
    let mut estimate = Vec::with_capacity(measurements.len());
    estimate.push(state.mean.clone());
    let mut diverged = false;
    let mut refactorizations = 0;
    for y in &measurements[1..] {
        match srukf_step(&state, y, &map, &ukf) {
            Ok(out) => {
                refactorizations += out.refactorizations;
                state = out.state;
                estimate.push(state.mean.clone());
            }
            Err(e) if e.kind() == ErrorKind::Numerical => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    estimate.resize(measurements.len(), DVector::from_element(n, f64::NAN));
    let truth: Vec<DVector<f64>> = (0..measurements.len())
        .map(|k| scenario.truth.states[k * sub].clone())
        .collect();
    let mut run = EstimationRun {
        placement: placement.to_vec(),
        seed: noise_seed,
        frame_period: cfg.frame_period(),
        layout: model.layout.clone(),
        truth,
        measurements,
        estimate,
        diverged,
        refactorizations,
        metrics: RunMetrics::default(),
    };
    run.metrics = compute_metrics(&run);
    Ok(run)
}
