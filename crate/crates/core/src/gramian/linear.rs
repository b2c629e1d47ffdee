use nalgebra::{DMatrix, DVector};

use crate::dynamics::ObservedSystem;
use crate::error::{Error, Result};

/// `x' = A x`, `y = C x`, with the rows of `C` grouped into equal sensor sites.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub outputs_per_site: usize,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, outputs_per_site: usize) -> Result<Self> {
        if !a.is_square() || c.ncols() != a.nrows() {
            return Err(Error::Dimension {
                expected: a.nrows(),
                got: c.ncols(),
            });
        }
        if outputs_per_site == 0 || !c.nrows().is_multiple_of(outputs_per_site) {
            return Err(Error::InvalidArgument(format!(
                "{} output rows do not split into sites of {outputs_per_site}",
                c.nrows()
            )));
        }
        Ok(Self {
            a,
            c,
            outputs_per_site,
        })
    }

    /// Every output row is its own site.
    pub fn single_output_sites(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        Self::new(a, c, 1)
    }
}

impl ObservedSystem for LinearSystem {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn n_sites(&self) -> usize {
        self.c.nrows() / self.outputs_per_site
    }

    fn outputs_per_site(&self) -> usize {
        self.outputs_per_site
    }

    fn field(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }

    fn site_outputs(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let y = &self.c * x;
        let q = self.outputs_per_site;
        DMatrix::from_fn(q, self.n_sites(), |t, s| y[s * q + t])
    }
}

/// Composite-Simpson quadrature of `int_0^T exp(A^T t) C^T C exp(A t) dt`.
///
/// The integrand is sampled with the exact propagator `exp(A dt)`; the step
/// count is rounded up to an even number.
pub fn linear_gramian_oracle(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    horizon: f64,
    dt: f64,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || c.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: c.ncols(),
        });
    }
    if !(horizon > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument(
            "horizon and dt must be positive".into(),
        ));
    }
    let mut steps = (horizon / dt).ceil() as usize;
    steps += steps % 2;
    let h = horizon / steps as f64;
    let step = (a * h).exp();
    let ctc = c.transpose() * c;
    let mut phi = DMatrix::<f64>::identity(n, n);
    let mut w = DMatrix::zeros(n, n);
    for k in 0..=steps {
        let weight = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        w += phi.transpose() * &ctc * &phi * (weight * h / 3.0);
        phi = &step * phi;
    }
    Ok((&w + w.transpose()) * 0.5)
}
