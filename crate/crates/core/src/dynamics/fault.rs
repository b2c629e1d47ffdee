use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::integrate::{rollout, step_count, Trajectory};
use crate::error::{Error, Result};
use crate::network::{
    init_steady_state, reduced_admittance, MachineModel, NetworkEdit, PowerFlowSolution,
    PowerSystemCase, ReducedModel,
};

/// Breaker timing of a three-phase line fault, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultTiming {
    pub t_fault: f64,
    pub t_clear_near: f64,
    pub t_clear_remote: f64,
}

impl Default for FaultTiming {
    fn default() -> Self {
        Self {
            t_fault: 0.0,
            t_clear_near: 0.05,
            t_clear_remote: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub start: f64,
    /// `f64::INFINITY` for the final stage.
    pub end: f64,
    pub model: ReducedModel,
}

/// Piecewise-constant network sequence of a cleared line fault.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultSchedule {
    pub branch: (usize, usize),
    pub timing: FaultTiming,
    pub stages: Vec<Stage>,
}

impl FaultSchedule {
    /// The network left after both breakers have opened.
    pub fn post_fault(&self) -> &ReducedModel {
        &self.stages.last().expect("schedule has stages").model
    }

    /// Stage driving the step `[k dt, (k+1) dt)`; boundaries snap to the grid.
    pub fn stage_at_step(&self, k: usize, dt: f64) -> &ReducedModel {
        let snap = |t: f64| {
            if t.is_finite() {
                (t / dt).round() as usize
            } else {
                usize::MAX
            }
        };
        self.stages
            .iter()
            .find(|s| snap(s.start) <= k && k < snap(s.end))
            .map(|s| &s.model)
            .unwrap_or_else(|| self.post_fault())
    }

    pub fn simulate(&self, x_init: &DVector<f64>, horizon: f64, dt: f64) -> Result<Trajectory> {
        let steps = step_count(horizon, dt)?;
        let dim = self.post_fault().dim();
        rollout(x_init, steps, dt, dim, |k| self.stage_at_step(k, dt))
    }
}

/// Check the fault-location rule and return the branch position.
pub fn fault_branch(case: &PowerSystemCase, from: usize, to: usize) -> Result<usize> {
    let pos = case
        .branches
        .iter()
        .position(|b| b.from == from && b.to == to)
        .or_else(|| case.find_branch(from, to))
        .ok_or_else(|| Error::InvalidArgument(format!("no branch {from}-{to} in case")))?;
    let gens = case.generator_buses();
    if gens.contains(&from) || gens.contains(&to) {
        return Err(Error::GeneratorTerminalFault { from, to });
    }
    Ok(pos)
}

/// Stage models for a fault at the `from` end of branch `from-to`.
///
/// During `[t_fault, t_clear_near)` the `from` bus is grounded; during
/// `[t_clear_near, t_clear_remote)` the line is open at `from` but the fault
/// is still fed through it from `to`; afterwards the line is out of service.
pub fn build_fault_schedule(
    case: &PowerSystemCase,
    pf: &PowerFlowSolution,
    kind: MachineModel,
    branch: (usize, usize),
    timing: FaultTiming,
) -> Result<FaultSchedule> {
    let (from, to) = branch;
    let pos = fault_branch(case, from, to)?;
    if !(timing.t_fault <= timing.t_clear_near && timing.t_clear_near <= timing.t_clear_remote) {
        return Err(Error::InvalidArgument(format!(
            "fault times out of order: {timing:?}"
        )));
    }
    let base = init_steady_state(case, pf, kind)?;
    let from_pos = case.bus_index()[&case.branches[pos].from];
    let edits = if case.branches[pos].status {
        [
            NetworkEdit {
                faulted_buses: vec![from_pos],
                ..Default::default()
            },
            NetworkEdit {
                dangling_fault: Some(pos),
                ..Default::default()
            },
            NetworkEdit {
                open_branches: vec![pos],
                ..Default::default()
            },
        ]
    } else {
        // A de-energised line carries no fault.
        Default::default()
    };
    let bounds = [
        (0.0, timing.t_fault),
        (timing.t_fault, timing.t_clear_near),
        (timing.t_clear_near, timing.t_clear_remote),
        (timing.t_clear_remote, f64::INFINITY),
    ];
    let post = base.with_admittance(reduced_admittance(case, pf, &edits[2])?);
    let mut stages = Vec::with_capacity(4);
    if timing.t_fault > 0.0 {
        stages.push(Stage {
            start: bounds[0].0,
            end: bounds[0].1,
            model: base.clone(),
        });
    }
    for (edit, &(start, end)) in edits[..2].iter().zip(&bounds[1..3]) {
        stages.push(Stage {
            start,
            end,
            model: base.with_admittance(reduced_admittance(case, pf, edit)?),
        });
    }
    stages.push(Stage {
        start: bounds[3].0,
        end: bounds[3].1,
        model: post,
    });
    Ok(FaultSchedule {
        branch,
        timing,
        stages,
    })
}
