use nalgebra::{DMatrix, DVector};

use super::model::{check_dim, observe, ObservedSystem};
use crate::error::{Error, Result};

fn heun<S: ObservedSystem + ?Sized>(sys: &S, x: &DVector<f64>, dt: f64) -> DVector<f64> {
    let f0 = sys.field(x);
    let predictor = x + &f0 * dt;
    let f1 = sys.field(&predictor);
    x + (f0 + f1) * (0.5 * dt)
}

/// One modified-Euler (Heun) step with inputs held constant.
pub fn modified_euler_step<S: ObservedSystem + ?Sized>(
    sys: &S,
    x_prev: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time step must be positive, got {dt}"
        )));
    }
    check_dim(sys.dim(), x_prev)?;
    let next = heun(sys, x_prev, dt);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::Blowup { step: 0 })
    }
}

/// Number of fixed steps covering `horizon`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon and time step must be positive (horizon {horizon}, dt {dt})"
        )));
    }
    Ok((horizon / dt).round().max(1.0) as usize)
}

/// States on a uniform grid `t_k = k dt`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    /// Output series of `sites`, one vector per grid point.
    pub fn outputs<S: ObservedSystem + ?Sized>(
        &self,
        sys: &S,
        sites: &[usize],
    ) -> Result<Vec<DVector<f64>>> {
        self.states.iter().map(|x| observe(sys, x, sites)).collect()
    }

    /// States as a `(len, dim)` matrix.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        let n = self.states.first().map_or(0, |x| x.len());
        DMatrix::from_fn(self.states.len(), n, |k, j| self.states[k][j])
    }
}

/// Fixed-step modified-Euler rollout of a single model.
pub fn simulate<S: ObservedSystem + ?Sized>(
    sys: &S,
    x_init: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    rollout(x_init, step_count(horizon, dt)?, dt, sys.dim(), |_| sys)
}

pub(crate) fn rollout<'a, S, F>(
    x_init: &DVector<f64>,
    steps: usize,
    dt: f64,
    dim: usize,
    system_at: F,
) -> Result<Trajectory>
where
    S: ObservedSystem + ?Sized + 'a,
    F: Fn(usize) -> &'a S,
{
    check_dim(dim, x_init)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x_init.clone());
    for k in 0..steps {
        let next = heun(system_at(k), &states[k], dt);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Blowup { step: k + 1 });
        }
        states.push(next);
    }
    Ok(Trajectory { dt, states })
}
