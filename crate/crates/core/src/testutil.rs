use std::path::PathBuf;

use crate::network::CMatrix;

use crate::gramian::{per_generator_bank, GramianBank, GramianConfig};
use crate::network::{
    init_steady_state, load_case, solve_power_flow, MachineModel, PowerFlowSolution,
    PowerSystemCase, ReducedModel,
};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

pub fn wscc9() -> (PowerSystemCase, PowerFlowSolution) {
    let case = load_case(data_path("wscc9.json")).unwrap();
    let pf = solve_power_flow(&case, 1e-8, 30).unwrap();
    (case, pf)
}

pub fn wscc9_model(kind: MachineModel) -> ReducedModel {
    let (case, pf) = wscc9();
    init_steady_state(&case, &pf, kind).unwrap()
}

pub fn wscc9_bank(kind: MachineModel) -> GramianBank {
    per_generator_bank(&wscc9_model(kind), &GramianConfig::default()).unwrap()
}

pub fn two_bus(r: f64, x: f64, status: bool) -> PowerSystemCase {
    let text = format!(
        r#"{{"base_mva": 100, "buses": [{{"id": 1, "kind": "slack"}}, {{"id": 2, "kind": "pq"}}],
        "branches": [{{"from": 1, "to": 2, "r": {r}, "x": {x}, "b_charging": 0, "status": {status}}}],
        "generators": [{{"id": 1, "bus": 1, "model_order": "second", "H": 3, "K_D": 0, "x_d": 0.2,
        "x_q": 0.2, "x_d_prime": 0.2, "x_q_prime": 0.2, "T_d0_prime": 0, "T_q0_prime": 0}}]}}"#
    );
    PowerSystemCase::from_json_str(&text, "two-bus").unwrap()
}

/// One generator on the slack bus feeding a load over a single line.
pub fn single_machine(model_order: &str) -> PowerSystemCase {
    let text = format!(
        r#"{{"base_mva": 100, "buses": [{{"id": 1, "kind": "slack", "v_setpoint": 1.02}},
        {{"id": 2, "kind": "pq", "p_load": 0.8, "q_load": 0.3}}],
        "branches": [{{"from": 1, "to": 2, "r": 0.02, "x": 0.2, "b_charging": 0.05}}],
        "generators": [{{"id": 1, "bus": 1, "model_order": "{model_order}", "H": 4.0, "K_D": 1.0,
        "x_d": 1.1, "x_q": 0.9, "x_d_prime": 0.25, "x_q_prime": 0.4, "T_d0_prime": 6.0, "T_q0_prime": 0.5}}]}}"#
    );
    PowerSystemCase::from_json_str(&text, "single-machine").unwrap()
}

/// Eliminate one node at a time by pivoting on its diagonal entry.
pub fn eliminate_one_by_one(y: &CMatrix, keep: &[usize]) -> CMatrix {
    let mut y = y.clone();
    let mut alive: Vec<usize> = (0..y.nrows()).collect();
    for k in (0..y.nrows()).rev().filter(|k| !keep.contains(k)) {
        let pivot = y[(k, k)];
        for &i in &alive {
            for &j in &alive {
                if i != k && j != k {
                    let d = y[(i, k)] * y[(k, j)] / pivot;
                    y[(i, j)] -= d;
                }
            }
        }
        alive.retain(|&a| a != k);
    }
    y.select_rows(keep).select_columns(keep)
}
