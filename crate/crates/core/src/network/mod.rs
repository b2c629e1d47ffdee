//! Case ingestion, power flow and network reduction to generator internal nodes.

mod case;
mod kron;
mod powerflow;
mod reduced;
mod ybus;

pub use case::{
    apply_load_scaling, load_case, sample_load_factors, Branch, Bus, BusKind, Generator,
    ModelOrder, PowerSystemCase,
};
pub use kron::kron_reduce;
pub use powerflow::{
    branch_active_flows, solve_power_flow, PowerFlowSolution, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
pub use reduced::{
    augmented_admittance, init_steady_state, init_steady_state_with, load_admittances,
    reduced_admittance, Machine, MachineModel, NetworkEdit, ReducedModel, StateLayout,
    FAULT_ADMITTANCE, OMEGA0_60HZ,
};
pub use ybus::{build_ybus, build_ybus_without, CMatrix};
