//! Generator dynamics, PMU measurement functions and fixed-step integration.

mod fault;
mod integrate;
mod model;

pub use fault::{build_fault_schedule, fault_branch, FaultSchedule, FaultTiming, Stage};
pub use integrate::{modified_euler_step, simulate, step_count, Trajectory};
pub use model::{
    classical_torque, derivative, derivative_m1, derivative_m2, measure, observe, ObservedSystem,
    TransientAlgebra,
};
