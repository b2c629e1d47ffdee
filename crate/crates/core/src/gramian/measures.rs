use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Pivots at or below this count as zero in [`logdet`].
pub const SINGULAR_PIVOT: f64 = 1e-300;

pub fn check_symmetric(w: &DMatrix<f64>) -> Result<()> {
    if !w.is_square() {
        return Err(Error::Dimension {
            expected: w.nrows(),
            got: w.ncols(),
        });
    }
    let scale = w.amax();
    if scale == 0.0 {
        return Ok(());
    }
    let asym = (w - w.transpose()).amax() / scale;
    if !(asym <= 1e-10) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Natural log-determinant of a symmetric matrix through its Cholesky factor.
///
/// Returns `f64::NEG_INFINITY` when the matrix is not numerically positive
/// definite, which marks an unobservable placement.
pub fn logdet(w: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(w)?;
    if w.nrows() == 0 {
        return Ok(0.0);
    }
    let Some(chol) = w.clone().cholesky() else {
        return Ok(f64::NEG_INFINITY);
    };
    let mut acc = 0.0;
    for &l in chol.l_dirty().diagonal().iter() {
        let pivot = l * l;
        if !(pivot > SINGULAR_PIVOT) {
            return Ok(f64::NEG_INFINITY);
        }
        acc += pivot.ln();
    }
    Ok(acc)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn min_max_eigenvalue(w: &DMatrix<f64>) -> Result<(f64, f64)> {
    check_symmetric(w)?;
    if w.nrows() == 0 {
        return Err(Error::InvalidArgument(
            "empty matrix has no eigenvalues".into(),
        ));
    }
    let eig = SymmetricEigen::new(w.clone()).eigenvalues;
    Ok((eig.min(), eig.max()))
}

/// Trace and 2-norm condition number, for reporting only.
pub fn trace_and_condition(w: &DMatrix<f64>) -> Result<(f64, f64)> {
    let (lo, hi) = min_max_eigenvalue(w)?;
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    Ok((w.trace(), cond))
}

#[cfg(test)]
mod tests {
    use nalgebra::DVector;
    use proptest::prelude::*;

    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn closed_forms() {
        assert_eq!(logdet(&DMatrix::identity(6, 6)).unwrap(), 0.0);
        assert!((logdet(&diag(&[2.0, 3.0])).unwrap() - 6f64.ln()).abs() < 1e-15);
        assert_eq!(
            min_max_eigenvalue(&DMatrix::identity(4, 4)).unwrap(),
            (1.0, 1.0)
        );
        let (lo, hi) = min_max_eigenvalue(&diag(&[0.0082, 1140.0])).unwrap();
        assert!((lo - 0.0082).abs() < 1e-15 && (hi - 1140.0).abs() < 1e-12);
        let (tr, cond) = trace_and_condition(&diag(&[2.0, 8.0])).unwrap();
        assert_eq!((tr, cond), (10.0, 4.0));
    }

    #[test]
    fn singular_and_indefinite_give_sentinel() {
        assert_eq!(logdet(&diag(&[1.0, 0.0])).unwrap(), f64::NEG_INFINITY);
        assert_eq!(logdet(&diag(&[1.0, -2.0])).unwrap(), f64::NEG_INFINITY);
        assert_eq!(logdet(&diag(&[1.0, 1e-301])).unwrap(), f64::NEG_INFINITY);
        assert!(logdet(&diag(&[1e-160, 1e-160])).unwrap().is_finite());
        assert_eq!(logdet(&DMatrix::zeros(3, 3)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(logdet(&w), Err(Error::NotSymmetric(_))));
        assert!(min_max_eigenvalue(&w).is_err());
        assert!(check_symmetric(&DMatrix::zeros(2, 3)).is_err());
    }

    proptest! {
        #[test]
        fn logdet_is_sum_of_log_eigenvalues(entries in prop::collection::vec(-1.0f64..1.0, 25)) {
            let b = DMatrix::from_vec(5, 5, entries);
            let w = &b * b.transpose() + DMatrix::identity(5, 5) * 0.1;
            let w = (&w + w.transpose()) * 0.5;
            let eig = SymmetricEigen::new(w.clone()).eigenvalues;
            let expect: f64 = eig.iter().map(|l| l.ln()).sum();
            prop_assert!((logdet(&w).unwrap() - expect).abs() < 1e-9);
        }
    }
}
