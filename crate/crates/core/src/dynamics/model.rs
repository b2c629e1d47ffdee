use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::network::{MachineModel, ReducedModel};

/// A continuous-time system whose outputs are grouped by sensor site.
///
/// A site is one place a sensor can be installed (a generator for the power
/// system models); each site contributes the same number of outputs.
pub trait ObservedSystem: Sync {
    fn dim(&self) -> usize;
    fn n_sites(&self) -> usize;
    fn outputs_per_site(&self) -> usize;
    /// Right-hand side `f(x, u)` with the inputs held constant.
    fn field(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Outputs of every site: one column per site, one row per output type.
    fn site_outputs(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Stack the outputs of `sites` by output type, then by site.
pub fn observe<S: ObservedSystem + ?Sized>(
    sys: &S,
    x: &DVector<f64>,
    sites: &[usize],
) -> Result<DVector<f64>> {
    if sites.is_empty() {
        return Err(Error::NoOutputs);
    }
    if let Some(&bad) = sites.iter().find(|&&s| s >= sys.n_sites()) {
        return Err(Error::InvalidArgument(format!(
            "sensor site {bad} outside 0..{}",
            sys.n_sites()
        )));
    }
    check_dim(sys.dim(), x)?;
    let all = sys.site_outputs(x);
    let per = sys.outputs_per_site();
    let mut y = DVector::zeros(per * sites.len());
    for t in 0..per {
        for (k, &s) in sites.iter().enumerate() {
            y[t * sites.len() + k] = all[(t, s)];
        }
    }
    Ok(y)
}

pub(crate) fn check_dim(expected: usize, x: &DVector<f64>) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Dimension {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

/// Air-gap torque of every machine under the classical model.
pub fn classical_torque(model: &ReducedModel, x: &DVector<f64>) -> Vec<f64> {
    let g = model.n_gen();
    let y = &model.y_reduced;
    let e = &model.e_mag;
    (0..g)
        .map(|i| {
            let di = x[i];
            let mut te = e[i] * e[i] * y[(i, i)].re;
            for j in (0..g).filter(|&j| j != i) {
                let (s, c) = (di - x[j]).sin_cos();
                te += e[i] * e[j] * (y[(i, j)].re * c + y[(i, j)].im * s);
            }
            te
        })
        .collect()
}

/// Network and stator algebra of the transient model at one state.
#[derive(Debug, Clone)]
pub struct TransientAlgebra {
    pub i_r: Vec<f64>,
    pub i_i: Vec<f64>,
    pub i_d: Vec<f64>,
    pub i_q: Vec<f64>,
    pub e_q: Vec<f64>,
    pub e_d: Vec<f64>,
    pub e_r: Vec<f64>,
    pub e_i: Vec<f64>,
    pub t_e: Vec<f64>,
}

impl TransientAlgebra {
    pub fn evaluate(model: &ReducedModel, x: &DVector<f64>) -> Self {
        let g = model.n_gen();
        let lay = &model.layout;
        let mut eqp = model.eq_held.clone();
        let mut edp = model.ed_held.clone();
        for &k in &lay.transient {
            eqp[k] = x[lay.eq_prime(k).expect("transient")];
            edp[k] = x[lay.ed_prime(k).expect("transient")];
        }
        let delta: Vec<f64> = (0..g).map(|k| x[lay.delta(k)]).collect();
        let psi = DVector::from_iterator(
            g,
            (0..g).map(|k| {
                let (s, c) = delta[k].sin_cos();
                Complex64::new(edp[k] * s + eqp[k] * c, eqp[k] * s - edp[k] * c)
            }),
        );
        let it = &model.y_reduced * psi;
        let mut alg = Self {
            i_r: vec![0.0; g],
            i_i: vec![0.0; g],
            i_d: vec![0.0; g],
            i_q: vec![0.0; g],
            e_q: vec![0.0; g],
            e_d: vec![0.0; g],
            e_r: vec![0.0; g],
            e_i: vec![0.0; g],
            t_e: vec![0.0; g],
        };
        for k in 0..g {
            let m = &model.machines[k];
            let (s, c) = delta[k].sin_cos();
            let (ir, ii) = (it[k].re, it[k].im);
            let iq = ii * s + ir * c;
            let id = ir * s - ii * c;
            // Second-order members are treated as round-rotor behind x'_d.
            let xqp = if lay.eq_prime(k).is_some() {
                m.x_q_prime
            } else {
                m.x_d_prime
            };
            let eq = eqp[k] - m.x_d_prime * id;
            let ed = edp[k] + xqp * iq;
            alg.i_r[k] = ir;
            alg.i_i[k] = ii;
            alg.i_d[k] = id;
            alg.i_q[k] = iq;
            alg.e_q[k] = eq;
            alg.e_d[k] = ed;
            alg.e_r[k] = ed * s + eq * c;
            alg.e_i[k] = eq * s - ed * c;
            alg.t_e[k] = eq * iq + ed * id;
        }
        alg
    }
}

pub fn derivative_m1(model: &ReducedModel, x: &DVector<f64>) -> Result<DVector<f64>> {
    if model.kind != MachineModel::Classical {
        return Err(Error::InvalidArgument(
            "derivative_m1 needs a classical model".into(),
        ));
    }
    check_dim(model.dim(), x)?;
    Ok(classical_field(model, x))
}

pub fn derivative_m2(model: &ReducedModel, x: &DVector<f64>) -> Result<DVector<f64>> {
    if model.kind != MachineModel::Transient {
        return Err(Error::InvalidArgument(
            "derivative_m2 needs a transient model".into(),
        ));
    }
    check_dim(model.dim(), x)?;
    Ok(transient_field(model, x))
}

/// State derivative for whichever model `model` carries.
pub fn derivative(model: &ReducedModel, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(model.dim(), x)?;
    Ok(model.field(x))
}

fn classical_field(model: &ReducedModel, x: &DVector<f64>) -> DVector<f64> {
    let g = model.n_gen();
    let w0 = model.omega0;
    let te = classical_torque(model, x);
    let mut dx = DVector::zeros(2 * g);
    for i in 0..g {
        dx[i] = x[g + i] - w0;
        dx[g + i] = w0 / (2.0 * model.machines[i].h) * (model.t_m[i] - te[i]);
    }
    dx
}

fn transient_field(model: &ReducedModel, x: &DVector<f64>) -> DVector<f64> {
    let lay = &model.layout;
    let g = lay.n_gen;
    let w0 = model.omega0;
    let alg = TransientAlgebra::evaluate(model, x);
    let mut dx = DVector::zeros(lay.dim());
    for i in 0..g {
        let m = &model.machines[i];
        let slip = x[lay.omega(i)] - w0;
        dx[lay.delta(i)] = slip;
        dx[lay.omega(i)] = w0 / (2.0 * m.h) * (model.t_m[i] - alg.t_e[i] - m.k_d / w0 * slip);
    }
    for &i in &lay.transient {
        let m = &model.machines[i];
        let (pq, pd) = (
            lay.eq_prime(i).expect("transient"),
            lay.ed_prime(i).expect("transient"),
        );
        dx[pq] = (model.e_fd[i] - x[pq] - (m.x_d - m.x_d_prime) * alg.i_d[i]) / m.t_d0_prime;
        dx[pd] = (-x[pd] + (m.x_q - m.x_q_prime) * alg.i_q[i]) / m.t_q0_prime;
    }
    dx
}

/// PMU outputs of the instrumented generators (positions, 0-based).
///
/// Classical: `[delta; omega]`. Transient: `[e_R; e_I; i_R; i_I]`.
pub fn measure(
    model: &ReducedModel,
    x: &DVector<f64>,
    instrumented: &[usize],
) -> Result<DVector<f64>> {
    observe(model, x, instrumented)
}

impl ObservedSystem for ReducedModel {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn n_sites(&self) -> usize {
        self.n_gen()
    }

    fn outputs_per_site(&self) -> usize {
        match self.kind {
            MachineModel::Classical => 2,
            MachineModel::Transient => 4,
        }
    }

    fn field(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            MachineModel::Classical => classical_field(self, x),
            MachineModel::Transient => transient_field(self, x),
        }
    }

    fn site_outputs(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let g = self.n_gen();
        match self.kind {
            MachineModel::Classical => DMatrix::from_fn(2, g, |t, k| x[t * g + k]),
            MachineModel::Transient => {
                let alg = TransientAlgebra::evaluate(self, x);
                DMatrix::from_fn(4, g, |t, k| match t {
                    0 => alg.e_r[k],
                    1 => alg.e_i[k],
                    2 => alg.i_r[k],
                    _ => alg.i_i[k],
                })
            }
        }
    }
}
