use serde::{Deserialize, Serialize};

use super::scenario::EstimationRun;
use crate::error::{Error, Result};
use crate::network::StateLayout;

/// Default convergence band, percent of the true value.
pub const DEFAULT_EPSILON_PERCENT: f64 = 2.0;

/// Absolute floor of the convergence band, natural units.
pub const ABSOLUTE_FLOOR: f64 = 1e-3;

/// Length of the convergence window at the end of a run, seconds.
pub const TAIL_SECONDS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Delta,
    Omega,
    EqPrime,
    EdPrime,
}

impl StateKind {
    pub fn indices(&self, layout: &StateLayout) -> Vec<usize> {
        let g = layout.n_gen;
        match self {
            StateKind::Delta => (0..g).map(|i| layout.delta(i)).collect(),
            StateKind::Omega => (0..g).map(|i| layout.omega(i)).collect(),
            StateKind::EqPrime => layout
                .transient
                .iter()
                .filter_map(|&i| layout.eq_prime(i))
                .collect(),
            StateKind::EdPrime => layout
                .transient
                .iter()
                .filter_map(|&i| layout.ed_prime(i))
                .collect(),
        }
    }
}

/// Errors and convergent counts of one run. Diverged runs carry
/// `f64::INFINITY` errors and zero counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub e_delta: f64,
    pub e_omega: f64,
    pub e_eq_prime: Option<f64>,
    pub e_ed_prime: Option<f64>,
    pub n_delta: usize,
    pub n_omega: usize,
    pub n_eq_prime: Option<usize>,
    pub n_ed_prime: Option<usize>,
}

pub(crate) fn compute_metrics(run: &EstimationRun) -> RunMetrics {
    let e = |k| state_error(run, k).ok();
    let n = |k| count_convergent(run, k, DEFAULT_EPSILON_PERCENT).ok();
    RunMetrics {
        e_delta: e(StateKind::Delta).unwrap_or(f64::INFINITY),
        e_omega: e(StateKind::Omega).unwrap_or(f64::INFINITY),
        e_eq_prime: e(StateKind::EqPrime),
        e_ed_prime: e(StateKind::EdPrime),
        n_delta: n(StateKind::Delta).unwrap_or(0),
        n_omega: n(StateKind::Omega).unwrap_or(0),
        n_eq_prime: n(StateKind::EqPrime),
        n_ed_prime: n(StateKind::EdPrime),
    }
}

fn indices_of(run: &EstimationRun, kind: StateKind) -> Result<Vec<usize>> {
    let idx = kind.indices(&run.layout);
    if idx.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "the model has no {kind:?} states"
        )));
    }
    Ok(idx)
}

/// `sqrt(sum_i sum_t (xhat - x)^2 / (g T_s))` over frames `t = 1..=T_s`.
///
/// Diverged runs give `f64::INFINITY`.
pub fn state_error(run: &EstimationRun, kind: StateKind) -> Result<f64> {
    let idx = indices_of(run, kind)?;
    if run.diverged {
        return Ok(f64::INFINITY);
    }
    let frames = run.truth.len().saturating_sub(1);
    if frames == 0 {
        return Err(Error::InvalidArgument(
            "run has no frames after the initial one".into(),
        ));
    }
    let mut sum = 0.0;
    for t in 1..=frames {
        for &i in &idx {
            let d = run.estimate[t][i] - run.truth[t][i];
            sum += d * d;
        }
    }
    Ok((sum / (idx.len() * frames) as f64).sqrt())
}

/// States whose estimate stays within `eps_percent` of `|x|` (floored at
/// [`ABSOLUTE_FLOOR`]) at every frame of the final second.
pub fn count_convergent(run: &EstimationRun, kind: StateKind, eps_percent: f64) -> Result<usize> {
    let idx = indices_of(run, kind)?;
    if run.diverged {
        return Ok(0);
    }
    let t_end = (run.truth.len() - 1) as f64 * run.frame_period;
    if t_end < TAIL_SECONDS - 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "run covers {t_end} s, shorter than the {TAIL_SECONDS} s window"
        )));
    }
    let first = (((t_end - TAIL_SECONDS) / run.frame_period) - 1e-9)
        .ceil()
        .max(0.0) as usize;
    let ok = |i: usize| {
        (first..run.truth.len()).all(|t| {
            let x = run.truth[t][i];
            let band = (eps_percent / 100.0 * x.abs()).max(ABSOLUTE_FLOOR);
            (run.estimate[t][i] - x).abs() < band
        })
    };
    Ok(idx.into_iter().filter(|&i| ok(i)).count())
}
