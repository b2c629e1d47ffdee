use super::ybus::CMatrix;
use crate::error::{Error, Result};

/// Eliminate every node not listed in `keep`: `Y_kk - Y_ke Y_ee^-1 Y_ek`.
///
/// The result is ordered as `keep`.
pub fn kron_reduce(y: &CMatrix, keep: &[usize]) -> Result<CMatrix> {
    let m = y.nrows();
    if y.ncols() != m {
        return Err(Error::Dimension {
            expected: m,
            got: y.ncols(),
        });
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= m) {
        return Err(Error::InvalidArgument(format!(
            "kept node {bad} outside a {m}-node matrix"
        )));
    }
    let elim: Vec<usize> = (0..m).filter(|k| !keep.contains(k)).collect();
    let kk = y.select_rows(keep).select_columns(keep);
    if elim.is_empty() {
        return Ok(kk);
    }
    let ke = y.select_rows(keep).select_columns(&elim);
    let ek = y.select_rows(&elim).select_columns(keep);
    let ee = y.select_rows(&elim).select_columns(&elim);
    let scale = ee.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let lu = ee.lu();
    let singular = || Error::SingularReduction {
        nodes: elim.clone(),
    };
    // Reject pivots that are numerically zero relative to the block scale.
    let min_pivot = lu
        .u()
        .diagonal()
        .iter()
        .map(|v| v.norm())
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot > scale * 1e-14) {
        return Err(singular());
    }
    let x = lu.solve(&ek).ok_or_else(singular)?;
    let out = kk - ke * x;
    if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(singular());
    }
    Ok(out)
}
