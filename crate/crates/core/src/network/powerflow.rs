use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::case::{BusKind, PowerSystemCase};
use super::ybus::build_ybus;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub v_mag: Vec<f64>,
    /// Radians.
    pub v_ang: Vec<f64>,
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn voltage(&self, k: usize) -> Complex64 {
        Complex64::from_polar(self.v_mag[k], self.v_ang[k])
    }
}

fn injections(y: &DMatrix<Complex64>, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let v: DVector<Complex64> = DVector::from_iterator(
        vm.len(),
        vm.iter()
            .zip(va)
            .map(|(&m, &a)| Complex64::from_polar(m, a)),
    );
    let i = y * &v;
    let s: Vec<Complex64> = v.iter().zip(i.iter()).map(|(v, i)| v * i.conj()).collect();
    (
        s.iter().map(|s| s.re).collect(),
        s.iter().map(|s| s.im).collect(),
    )
}

/// Full Newton-Raphson in polar coordinates from a flat start.
///
/// Non-convergence is reported through `converged = false`; only a singular
/// Jacobian is an error.
pub fn solve_power_flow(
    case: &PowerSystemCase,
    tol: f64,
    max_iter: usize,
) -> Result<PowerFlowSolution> {
    let y = build_ybus(case)?;
    let n = case.buses.len();
    let mut vm: Vec<f64> = case
        .buses
        .iter()
        .map(|b| {
            if b.kind == BusKind::Pq {
                1.0
            } else {
                b.v_setpoint
            }
        })
        .collect();
    let mut va = vec![0.0; n];
    let p_spec: Vec<f64> = case.buses.iter().map(|b| b.p_gen - b.p_load).collect();
    let q_spec: Vec<f64> = case.buses.iter().map(|b| -b.q_load).collect();

    // Unknown ordering: angles of non-slack buses, then magnitudes of PQ buses.
    let ang: Vec<usize> = (0..n)
        .filter(|&k| case.buses[k].kind != BusKind::Slack)
        .collect();
    let mag: Vec<usize> = (0..n)
        .filter(|&k| case.buses[k].kind == BusKind::Pq)
        .collect();
    let na = ang.len();
    let dim = na + mag.len();

    let mut iterations = 0;
    loop {
        let (p, q) = injections(&y, &vm, &va);
        let mut f = DVector::<f64>::zeros(dim);
        for (r, &k) in ang.iter().enumerate() {
            f[r] = p_spec[k] - p[k];
        }
        for (r, &k) in mag.iter().enumerate() {
            f[na + r] = q_spec[k] - q[k];
        }
        let max_mismatch = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let finite = max_mismatch.is_finite();
        if (finite && max_mismatch <= tol) || !finite || iterations >= max_iter {
            return Ok(PowerFlowSolution {
                v_mag: vm,
                v_ang: va,
                p_inj: p,
                q_inj: q,
                converged: finite && max_mismatch <= tol,
                iterations,
                max_mismatch: if finite { max_mismatch } else { f64::INFINITY },
            });
        }

        let jac = jacobian(&y, &vm, &va, &p, &q, &ang, &mag);
        let dx = jac
            .lu()
            .solve(&f)
            .filter(|dx| dx.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularJacobian {
                iteration: iterations,
            })?;
        for (r, &k) in ang.iter().enumerate() {
            va[k] += dx[r];
        }
        for (r, &k) in mag.iter().enumerate() {
            vm[k] += vm[k] * dx[na + r];
        }
        iterations += 1;
    }
}

/// Jacobian of (P, Q) with respect to (theta, |V| relative change).
fn jacobian(
    y: &DMatrix<Complex64>,
    vm: &[f64],
    va: &[f64],
    p: &[f64],
    q: &[f64],
    ang: &[usize],
    mag: &[usize],
) -> DMatrix<f64> {
    let na = ang.len();
    let dim = na + mag.len();
    let mut j = DMatrix::<f64>::zeros(dim, dim);
    // dP_i/dth_k, dQ_i/dth_k, V_k dP_i/dV_k, V_k dQ_i/dV_k
    let blocks = |i: usize, k: usize| -> (f64, f64, f64, f64) {
        let (g, b) = (y[(i, k)].re, y[(i, k)].im);
        if i == k {
            let v2 = vm[i] * vm[i];
            (-q[i] - b * v2, p[i] - g * v2, p[i] + g * v2, q[i] - b * v2)
        } else {
            let th = va[i] - va[k];
            let (s, c) = th.sin_cos();
            let vv = vm[i] * vm[k];
            (
                vv * (g * s - b * c),
                -vv * (g * c + b * s),
                vv * (g * c + b * s),
                vv * (g * s - b * c),
            )
        }
    };
    for (r, &i) in ang.iter().enumerate() {
        for (c, &k) in ang.iter().enumerate() {
            j[(r, c)] = blocks(i, k).0;
        }
        for (c, &k) in mag.iter().enumerate() {
            j[(r, na + c)] = blocks(i, k).2;
        }
    }
    for (r, &i) in mag.iter().enumerate() {
        for (c, &k) in ang.iter().enumerate() {
            j[(na + r, c)] = blocks(i, k).1;
        }
        for (c, &k) in mag.iter().enumerate() {
            j[(na + r, na + c)] = blocks(i, k).3;
        }
    }
    j
}

/// Active power flow through each branch, `max(|P_from|, |P_to|)` per-unit;
/// zero for out-of-service branches.
pub fn branch_active_flows(case: &PowerSystemCase, pf: &PowerFlowSolution) -> Result<Vec<f64>> {
    let idx = case.bus_index();
    case.branches
        .iter()
        .map(|br| {
            if !br.status {
                return Ok(0.0);
            }
            let ys = super::ybus::series_admittance(br)?;
            let ych = Complex64::new(0.0, br.b_charging / 2.0);
            let (vi, vj) = (pf.voltage(idx[&br.from]), pf.voltage(idx[&br.to]));
            let iij = (vi - vj) * ys + vi * ych;
            let iji = (vj - vi) * ys + vj * ych;
            let pij = (vi * iij.conj()).re;
            let pji = (vj * iji.conj()).re;
            Ok(pij.abs().max(pji.abs()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::apply_load_scaling;
    use crate::testutil::{two_bus, wscc9};

    /// Gauss-Seidel with PV voltage-magnitude resetting.
    fn gauss_seidel(case: &PowerSystemCase) -> Vec<Complex64> {
        let y = build_ybus(case).unwrap();
        let n = case.buses.len();
        let mut v: Vec<Complex64> = case
            .buses
            .iter()
            .map(|b| {
                Complex64::new(
                    if b.kind == BusKind::Pq {
                        1.0
                    } else {
                        b.v_setpoint
                    },
                    0.0,
                )
            })
            .collect();
        for _ in 0..20_000 {
            for i in 0..n {
                let b = &case.buses[i];
                if b.kind == BusKind::Slack {
                    continue;
                }
                let yv: Complex64 = (0..n).map(|k| y[(i, k)] * v[k]).sum();
                let q = if b.kind == BusKind::Pv {
                    -(v[i].conj() * yv).im
                } else {
                    -b.q_load
                };
                let s = Complex64::new(b.p_gen - b.p_load, q);
                let others = yv - y[(i, i)] * v[i];
                let mut vi = (s.conj() / v[i].conj() - others) / y[(i, i)];
                if b.kind == BusKind::Pv {
                    vi = Complex64::from_polar(b.v_setpoint, vi.arg());
                }
                v[i] = vi;
            }
        }
        v
    }

    #[test]
    fn zero_injection_two_bus_is_flat() {
        let pf =
            solve_power_flow(&two_bus(0.01, 0.1, true), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(pf.converged);
        assert_eq!(pf.v_mag, vec![1.0, 1.0]);
        assert_eq!(pf.v_ang, vec![0.0, 0.0]);
    }

    #[test]
    fn wscc_agrees_with_gauss_seidel() {
        let (case, pf) = wscc9();
        assert!(pf.converged && pf.iterations <= 10);
        assert!(pf.max_mismatch <= DEFAULT_TOL);
        assert_eq!(pf.v_ang[0], 0.0);
        let gs = gauss_seidel(&case);
        for (k, v) in gs.iter().enumerate() {
            assert!((pf.voltage(k) - v).norm() < 1e-7, "bus {}", k + 1);
        }
        // Published operating point, to the printed precision.
        let published = [
            (1.026, -2.2),
            (0.996, -4.0),
            (1.013, -3.7),
            (1.026, 3.7),
            (1.016, 0.7),
            (1.032, 2.0),
        ];
        for (k, (m, a)) in (3..9).zip(published) {
            assert!((pf.v_mag[k] - m).abs() < 6e-4, "bus {}", k + 1);
            assert!((pf.v_ang[k].to_degrees() - a).abs() < 0.06, "bus {}", k + 1);
        }
    }

    #[test]
    fn injections_balance_at_non_slack_buses() {
        let (case, pf) = wscc9();
        for (k, b) in case
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind != BusKind::Slack)
        {
            assert!((pf.p_inj[k] - (b.p_gen - b.p_load)).abs() <= DEFAULT_TOL);
            if b.kind == BusKind::Pq {
                assert!((pf.q_inj[k] + b.q_load).abs() <= DEFAULT_TOL);
            }
        }
    }

    #[test]
    fn heavy_loading_reports_non_convergence() {
        let (case, _) = wscc9();
        let heavy = apply_load_scaling(&case, &[100.0; 3]).unwrap();
        let pf = solve_power_flow(&heavy, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(!pf.converged);
    }

    #[test]
    fn unit_scaling_reproduces_solution_bitwise() {
        let (case, pf) = wscc9();
        let same = apply_load_scaling(&case, &[1.0; 3]).unwrap();
        assert_eq!(
            solve_power_flow(&same, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap(),
            pf
        );
    }

    #[test]
    fn isolated_bus_gives_singular_jacobian() {
        let mut case = two_bus(0.0, 0.1, true);
        case.branches[0].status = false;
        case.buses[1].p_load = 0.5;
        assert!(matches!(
            solve_power_flow(&case, DEFAULT_TOL, DEFAULT_MAX_ITER),
            Err(Error::SingularJacobian { iteration: 0 })
        ));
    }

    #[test]
    fn branch_ranking_by_flow() {
        let (case, pf) = wscc9();
        let flows = branch_active_flows(&case, &pf).unwrap();
        let mut order: Vec<usize> = (0..flows.len()).collect();
        order.sort_by(|&a, &b| flows[b].total_cmp(&flows[a]));
        let named: Vec<(usize, usize)> = order
            .iter()
            .map(|&k| (case.branches[k].from, case.branches[k].to))
            .collect();
        let non_terminal: Vec<_> = named
            .into_iter()
            .filter(|(f, t)| ![1, 2, 3].contains(f) && ![1, 2, 3].contains(t))
            .collect();
        assert_eq!(
            non_terminal,
            vec![(5, 7), (7, 8), (6, 9), (4, 5), (4, 6), (8, 9)]
        );
    }
}
