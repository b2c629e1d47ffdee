use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One orthogonal perturbation-direction matrix `T_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `I_n`
    Positive,
    /// `-I_n`
    Negative,
    Orthogonal(DMatrix<f64>),
}

impl Direction {
    pub fn matrix(&self, n: usize) -> DMatrix<f64> {
        match self {
            Direction::Positive => DMatrix::identity(n, n),
            Direction::Negative => -DMatrix::identity(n, n),
            Direction::Orthogonal(t) => t.clone(),
        }
    }

    /// `T_l e_i`
    pub fn column(&self, i: usize, n: usize) -> DVector<f64> {
        match self {
            Direction::Positive => DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 }),
            Direction::Negative => DVector::from_fn(n, |k, _| if k == i { -1.0 } else { 0.0 }),
            Direction::Orthogonal(t) => t.column(i).into_owned(),
        }
    }

    /// `T Psi T^T`
    pub(crate) fn congruence(&self, psi: DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Direction::Positive | Direction::Negative => psi,
            Direction::Orthogonal(t) => t * psi * t.transpose(),
        }
    }
}

/// Perturbation sets and time grid of the empirical Gramian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramianConfig {
    pub directions: Vec<Direction>,
    pub sizes: Vec<f64>,
    /// Integration horizon `t_f`, seconds.
    pub horizon: f64,
    /// Grid spacing of both the rollout and the quadrature, seconds.
    pub dt: f64,
    /// Unperturbed initial state; `None` means the model's equilibrium.
    #[serde(default)]
    pub x_ref: Option<DVector<f64>>,
}

impl Default for GramianConfig {
    fn default() -> Self {
        Self {
            directions: vec![Direction::Positive, Direction::Negative],
            sizes: vec![0.25, 0.5, 0.75, 1.0],
            horizon: 5.0,
            dt: 1.0 / 30.0,
            x_ref: None,
        }
    }
}

impl GramianConfig {
    pub fn with_grid(horizon: f64, dt: f64) -> Self {
        Self {
            horizon,
            dt,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.directions.is_empty() || self.sizes.is_empty() {
            return Err(Error::InvalidArgument(
                "perturbation direction and size sets must be nonempty".into(),
            ));
        }
        for d in &self.directions {
            if let Direction::Orthogonal(t) = d {
                if t.nrows() != n || t.ncols() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: t.nrows(),
                    });
                }
                let dev = (t.transpose() * t - DMatrix::<f64>::identity(n, n)).amax();
                if dev > 1e-12 {
                    return Err(Error::NotOrthogonal(dev));
                }
            }
        }
        if let Some(c) = self.sizes.iter().find(|c| !(**c > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "perturbation sizes must be positive, got {c}"
            )));
        }
        if !(self.horizon > 0.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon and dt must be positive (horizon {}, dt {})",
                self.horizon, self.dt
            )));
        }
        if let Some(x) = &self.x_ref {
            if x.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
