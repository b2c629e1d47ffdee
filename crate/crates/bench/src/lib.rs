//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use obsplace_core::network::{
    init_steady_state, load_case, solve_power_flow, MachineModel, PowerFlowSolution,
    PowerSystemCase, ReducedModel,
};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

/// A bundled case with its power flow and reduced model.
pub fn fixture(
    name: &str,
    kind: MachineModel,
) -> (PowerSystemCase, PowerFlowSolution, ReducedModel) {
    let case = load_case(data_path(name)).expect("bundled case loads");
    let pf = solve_power_flow(&case, 1e-8, 30).expect("power flow");
    let model = init_steady_state(&case, &pf, kind).expect("steady state");
    (case, pf, model)
}
