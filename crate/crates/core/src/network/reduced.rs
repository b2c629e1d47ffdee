use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::case::{Branch, ModelOrder, PowerSystemCase};
use super::kron::kron_reduce;
use super::powerflow::PowerFlowSolution;
use super::ybus::{build_ybus_without, stamp_branch, CMatrix};
use crate::error::{Error, Result};

/// Rated angular frequency of a 60 Hz system, rad/s.
pub const OMEGA0_60HZ: f64 = 2.0 * PI * 60.0;

/// Shunt admittance (per-unit) standing in for a bolted three-phase fault.
pub const FAULT_ADMITTANCE: f64 = 1e6;

/// Which generator/measurement model a [`ReducedModel`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MachineModel {
    /// Classical swing model; PMUs read rotor angle and speed.
    #[serde(rename = "m1")]
    Classical,
    /// Two-axis transient model (fourth-order where the case asks for it);
    /// PMUs read terminal voltage and current phasors.
    #[serde(rename = "m2")]
    Transient,
}

impl std::str::FromStr for MachineModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" | "classical" => Ok(Self::Classical),
            "m2" | "transient" => Ok(Self::Transient),
            other => Err(Error::InvalidArgument(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    /// Effective order in this model; always `Second` under [`MachineModel::Classical`].
    pub order: ModelOrder,
    pub h: f64,
    pub k_d: f64,
    pub x_d: f64,
    pub x_q: f64,
    pub x_d_prime: f64,
    pub x_q_prime: f64,
    pub t_d0_prime: f64,
    pub t_q0_prime: f64,
}

/// Position of each state inside the flat state vector `[delta; omega; e'_q; e'_d]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub n_gen: usize,
    /// Generator positions with their own transient-voltage states, ascending.
    pub transient: Vec<usize>,
}

impl StateLayout {
    pub fn dim(&self) -> usize {
        2 * self.n_gen + 2 * self.transient.len()
    }
    pub fn delta(&self, gen: usize) -> usize {
        gen
    }
    pub fn omega(&self, gen: usize) -> usize {
        self.n_gen + gen
    }
    pub fn eq_prime(&self, gen: usize) -> Option<usize> {
        self.transient
            .iter()
            .position(|&k| k == gen)
            .map(|p| 2 * self.n_gen + p)
    }
    pub fn ed_prime(&self, gen: usize) -> Option<usize> {
        self.eq_prime(gen).map(|p| p + self.transient.len())
    }
    /// Column names used in trajectory exports.
    pub fn state_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        names.extend((1..=self.n_gen).map(|i| format!("delta_{i}")));
        names.extend((1..=self.n_gen).map(|i| format!("omega_{i}")));
        names.extend(self.transient.iter().map(|k| format!("eq_prime_{}", k + 1)));
        names.extend(self.transient.iter().map(|k| format!("ed_prime_{}", k + 1)));
        names
    }
}

/// Network reduced to generator internal nodes together with the operating
/// point and the constant inputs held during simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub kind: MachineModel,
    pub y_reduced: CMatrix,
    pub machines: Vec<Machine>,
    /// Internal voltage magnitude behind x'_d (classical model input).
    pub e_mag: Vec<f64>,
    pub t_m: Vec<f64>,
    /// Field voltage (transient model input; zero for second-order members).
    pub e_fd: Vec<f64>,
    /// Transient voltages held by second-order members of a transient fleet.
    pub eq_held: Vec<f64>,
    pub ed_held: Vec<f64>,
    pub x0: DVector<f64>,
    pub omega0: f64,
    pub layout: StateLayout,
}

impl ReducedModel {
    pub fn n_gen(&self) -> usize {
        self.layout.n_gen
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Same machines, inputs and operating point on a different reduced network.
    pub fn with_admittance(&self, y_reduced: CMatrix) -> Self {
        Self {
            y_reduced,
            ..self.clone()
        }
    }

    pub fn with_reference(&self, x0: DVector<f64>) -> Self {
        Self { x0, ..self.clone() }
    }
}

/// Topology changes applied before reduction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkEdit {
    /// Branch positions taken out of service.
    pub open_branches: Vec<usize>,
    /// Bus positions short-circuited to ground through [`FAULT_ADMITTANCE`].
    pub faulted_buses: Vec<usize>,
    /// Branch position whose `from` terminal is open while a fault remains at
    /// that end of the line, fed from the `to` bus.
    pub dangling_fault: Option<usize>,
}

/// Constant-admittance equivalent of each bus load at the solved voltage.
pub fn load_admittances(case: &PowerSystemCase, pf: &PowerFlowSolution) -> Vec<Complex64> {
    case.buses
        .iter()
        .enumerate()
        .map(|(k, b)| Complex64::new(b.p_load, -b.q_load) / (pf.v_mag[k] * pf.v_mag[k]))
        .collect()
}

/// The network augmented with one internal node per generator, joined to its
/// terminal bus through `j x'_d`, and loads folded in as admittances.
///
/// Returns the matrix and the positions of the internal nodes (in generator
/// order). Buses occupy the first rows, then any fault node, then internal nodes.
pub fn augmented_admittance(
    case: &PowerSystemCase,
    pf: &PowerFlowSolution,
    edit: &NetworkEdit,
) -> Result<(CMatrix, Vec<usize>)> {
    let nb = case.buses.len();
    let g = case.n_gen();
    let idx = case.bus_index();
    let mut skip = edit.open_branches.clone();
    if let Some(b) = edit.dangling_fault {
        skip.push(b);
    }
    let ybus = build_ybus_without(case, &skip)?;
    let extra = usize::from(edit.dangling_fault.is_some());
    let m = nb + extra + g;
    let mut y = CMatrix::zeros(m, m);
    y.view_mut((0, 0), (nb, nb)).copy_from(&ybus);
    for (k, yl) in load_admittances(case, pf).into_iter().enumerate() {
        y[(k, k)] += yl;
    }
    for &k in &edit.faulted_buses {
        y[(k, k)] += Complex64::new(FAULT_ADMITTANCE, 0.0);
    }
    if let Some(bpos) = edit.dangling_fault {
        let br: &Branch = &case.branches[bpos];
        let f = nb;
        stamp_branch(&mut y, f, idx[&br.to], br)?;
        y[(f, f)] += Complex64::new(FAULT_ADMITTANCE, 0.0);
    }
    let internal: Vec<usize> = (0..g).map(|k| nb + extra + k).collect();
    for (k, gen) in case.generators.iter().enumerate() {
        let link = Complex64::new(0.0, -1.0 / gen.x_d_prime);
        let (a, b) = (internal[k], idx[&gen.bus]);
        y[(a, a)] += link;
        y[(b, b)] += link;
        y[(a, b)] -= link;
        y[(b, a)] -= link;
    }
    Ok((y, internal))
}

/// Kron-reduce the augmented network to the generator internal nodes.
pub fn reduced_admittance(
    case: &PowerSystemCase,
    pf: &PowerFlowSolution,
    edit: &NetworkEdit,
) -> Result<CMatrix> {
    let (y, keep) = augmented_admittance(case, pf, edit)?;
    kron_reduce(&y, &keep)
}

/// Generator terminal voltage and current phasors from the power flow.
fn terminal_phasors(case: &PowerSystemCase, pf: &PowerFlowSolution) -> Vec<(Complex64, Complex64)> {
    let idx = case.bus_index();
    case.generators
        .iter()
        .map(|gen| {
            let k = idx[&gen.bus];
            let bus = &case.buses[k];
            let v = pf.voltage(k);
            let s = Complex64::new(pf.p_inj[k] + bus.p_load, pf.q_inj[k] + bus.q_load);
            let i = if v.norm() > 0.0 {
                (s / v).conj()
            } else {
                Complex64::new(0.0, 0.0)
            };
            (v, i)
        })
        .collect()
}

pub fn init_steady_state(
    case: &PowerSystemCase,
    pf: &PowerFlowSolution,
    kind: MachineModel,
) -> Result<ReducedModel> {
    init_steady_state_with(case, pf, kind, OMEGA0_60HZ)
}

/// Build the reduced model and its equilibrium from a converged power flow.
///
/// Mechanical torque and field voltage are set from the model's own network
/// solution so that the returned `x0` is an equilibrium to rounding error.
pub fn init_steady_state_with(
    case: &PowerSystemCase,
    pf: &PowerFlowSolution,
    kind: MachineModel,
    omega0: f64,
) -> Result<ReducedModel> {
    if !pf.converged {
        return Err(Error::PowerFlowDiverged {
            max_mismatch: pf.max_mismatch,
        });
    }
    let g = case.n_gen();
    let y_reduced = reduced_admittance(case, pf, &NetworkEdit::default())?;
    let machines: Vec<Machine> = case
        .generators
        .iter()
        .map(|gen| Machine {
            order: match kind {
                MachineModel::Classical => ModelOrder::Second,
                MachineModel::Transient => gen.model_order,
            },
            h: gen.h,
            k_d: gen.k_d,
            x_d: gen.x_d,
            x_q: gen.x_q,
            x_d_prime: gen.x_d_prime,
            x_q_prime: gen.x_q_prime,
            t_d0_prime: gen.t_d0_prime,
            t_q0_prime: gen.t_q0_prime,
        })
        .collect();
    let transient: Vec<usize> = (0..g)
        .filter(|&k| machines[k].order == ModelOrder::Fourth)
        .collect();
    let layout = StateLayout {
        n_gen: g,
        transient,
    };
    let mut x0 = DVector::zeros(layout.dim());
    let mut e_mag = vec![0.0; g];
    let mut eq_held = vec![0.0; g];
    let mut ed_held = vec![0.0; g];
    let phasors = terminal_phasors(case, pf);
    for (k, (m, &(v, i))) in machines.iter().zip(&phasors).enumerate() {
        let behind_transient = v + Complex64::new(0.0, m.x_d_prime) * i;
        let delta = match m.order {
            ModelOrder::Second => behind_transient.arg(),
            // Rotor position that makes e'_d = (x_q - x'_q) i_q hold exactly
            // with the network fed through x'_d.
            ModelOrder::Fourth => {
                (v + Complex64::new(0.0, m.x_q - m.x_q_prime + m.x_d_prime) * i).arg()
            }
        };
        x0[layout.delta(k)] = delta;
        x0[layout.omega(k)] = omega0;
        e_mag[k] = behind_transient.norm();
        // (e'_q - j e'_d) = Psi e^{-j delta}
        let rotor = behind_transient * Complex64::from_polar(1.0, -delta);
        match layout.eq_prime(k) {
            Some(p) => {
                x0[p] = rotor.re;
                x0[layout.ed_prime(k).expect("paired")] = -rotor.im;
            }
            None => {
                eq_held[k] = rotor.re;
                ed_held[k] = -rotor.im;
            }
        }
    }

    let mut model = ReducedModel {
        kind,
        y_reduced,
        machines,
        e_mag,
        t_m: vec![0.0; g],
        e_fd: vec![0.0; g],
        eq_held,
        ed_held,
        x0,
        omega0,
        layout,
    };
    match kind {
        MachineModel::Classical => {
            model.t_m = crate::dynamics::classical_torque(&model, &model.x0);
        }
        MachineModel::Transient => {
            let alg = crate::dynamics::TransientAlgebra::evaluate(&model, &model.x0);
            model.t_m = alg.t_e.clone();
            for &k in &model.layout.transient {
                let m = &model.machines[k];
                let eq = model.x0[model.layout.eq_prime(k).expect("transient")];
                model.e_fd[k] = eq + (m.x_d - m.x_d_prime) * alg.i_d[k];
            }
        }
    }
    Ok(model)
}
