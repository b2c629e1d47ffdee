use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::srukf::UnscentedParams;
use crate::error::{Error, Result};
use crate::network::{MachineModel, StateLayout, OMEGA0_60HZ};

/// Standard deviations behind `P0` and `R`, natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevels {
    pub r_delta: f64,
    pub r_omega: f64,
    pub r_eq_prime: f64,
    pub r_ed_prime: f64,
    pub r_e_real: f64,
    pub r_e_imag: f64,
    pub r_i_real: f64,
    pub r_i_imag: f64,
}

impl NoiseLevels {
    /// Half a degree in angle, 0.1 % of rated speed; 1 % on the phasors.
    pub fn for_omega0(omega0: f64) -> Self {
        Self {
            r_delta: 0.5 * PI / 180.0,
            r_omega: 1e-3 * omega0,
            r_eq_prime: 1e-2,
            r_ed_prime: 1e-2,
            r_e_real: 1e-2,
            r_e_imag: 1e-2,
            r_i_real: 1e-2,
            r_i_imag: 1e-2,
        }
    }

    fn all(&self) -> [f64; 8] {
        [
            self.r_delta,
            self.r_omega,
            self.r_eq_prime,
            self.r_ed_prime,
            self.r_e_real,
            self.r_e_imag,
            self.r_i_real,
            self.r_i_imag,
        ]
    }
}

impl Default for NoiseLevels {
    fn default() -> Self {
        Self::for_omega0(OMEGA0_60HZ)
    }
}

/// Filter settings. `P0`, `Q` and `R` are diagonal and built on demand from
/// the noise levels, the state layout and the number of PMUs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub unscented: UnscentedParams,
    pub noise: NoiseLevels,
    /// `Q = process_noise * I_n`.
    pub process_noise: f64,
    /// PMU frames per second; also the filter rate.
    pub sample_rate: f64,
    /// Integration step of the truth simulation and of the filter's
    /// prediction substeps, seconds. Must divide the frame period.
    pub substep: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            unscented: UnscentedParams::default(),
            noise: NoiseLevels::default(),
            process_noise: 1e-7,
            sample_rate: 30.0,
            substep: 1.0 / 120.0,
        }
    }
}

impl EstimatorConfig {
    pub fn for_omega0(omega0: f64) -> Self {
        Self {
            noise: NoiseLevels::for_omega0(omega0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self
            .noise
            .all()
            .into_iter()
            .find(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "noise levels must be positive, got {bad}"
            )));
        }
        if !(self.process_noise > 0.0) || !(self.sample_rate > 0.0) || !(self.substep > 0.0) {
            return Err(Error::InvalidArgument(
                "process noise, sample rate and substep must be positive".into(),
            ));
        }
        self.substeps()?;
        Ok(())
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Integration substeps per frame.
    pub fn substeps(&self) -> Result<usize> {
        let ratio = self.frame_period() / self.substep;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio {
            return Err(Error::InvalidArgument(format!(
                "substep {} does not divide the frame period {}",
                self.substep,
                self.frame_period()
            )));
        }
        Ok(k as usize)
    }

    pub fn p0(&self, layout: &StateLayout) -> DMatrix<f64> {
        let g = layout.n_gen;
        let t = layout.transient.len();
        let r = &self.noise;
        let diag: Vec<f64> = std::iter::repeat_n(r.r_delta, g)
            .chain(std::iter::repeat_n(r.r_omega, g))
            .chain(std::iter::repeat_n(r.r_eq_prime, t))
            .chain(std::iter::repeat_n(r.r_ed_prime, t))
            .map(|s| s * s)
            .collect();
        DMatrix::from_diagonal(&DVector::from_vec(diag))
    }

    pub fn q(&self, n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n) * self.process_noise
    }

    /// Measurement standard deviation of each output type, in output order.
    pub fn output_std(&self, kind: MachineModel) -> Vec<f64> {
        let r = &self.noise;
        match kind {
            MachineModel::Classical => vec![r.r_delta, r.r_omega],
            MachineModel::Transient => vec![r.r_e_real, r.r_e_imag, r.r_i_real, r.r_i_imag],
        }
    }

    /// `R` for `n_pmus` instrumented generators, outputs stacked by type.
    pub fn r(&self, kind: MachineModel, n_pmus: usize) -> DMatrix<f64> {
        let diag: Vec<f64> = self
            .output_std(kind)
            .into_iter()
            .flat_map(|s| std::iter::repeat_n(s * s, n_pmus))
            .collect();
        DMatrix::from_diagonal(&DVector::from_vec(diag))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariances_follow_layout_and_placement() {
        let cfg = EstimatorConfig::default();
        let lay = StateLayout {
            n_gen: 3,
            transient: vec![0, 2],
        };
        let p0 = cfg.p0(&lay);
        assert_eq!(p0.nrows(), 10);
        let rd = 0.5 * PI / 180.0;
        assert!((p0[(2, 2)] - rd * rd).abs() < 1e-18);
        assert!((p0[(3, 3)] - (1e-3 * OMEGA0_60HZ).powi(2)).abs() < 1e-15);
        assert_eq!(p0[(6, 6)], 1e-4);
        assert_eq!(p0[(0, 1)], 0.0);
        assert_eq!(cfg.q(4)[(3, 3)], 1e-7);
        let r = cfg.r(MachineModel::Classical, 2);
        assert_eq!(r.nrows(), 4);
        assert!((r[(1, 1)] - rd * rd).abs() < 1e-18);
        assert!((r[(2, 2)] - (1e-3 * OMEGA0_60HZ).powi(2)).abs() < 1e-15);
        assert_eq!(cfg.r(MachineModel::Transient, 3).nrows(), 12);
    }

    #[test]
    fn substeps_must_divide_the_frame() {
        let mut cfg = EstimatorConfig::default();
        assert_eq!(cfg.substeps().unwrap(), 4);
        cfg.substep = 0.01;
        assert!(cfg.validate().is_err());
        cfg.substep = 1.0 / 30.0;
        assert_eq!(cfg.substeps().unwrap(), 1);
        cfg.noise.r_delta = 0.0;
        assert!(cfg.validate().is_err());
    }
}
