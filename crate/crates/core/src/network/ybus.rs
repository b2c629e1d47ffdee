use nalgebra::DMatrix;
use num_complex::Complex64;

use super::case::{Branch, PowerSystemCase};
use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub(crate) fn series_admittance(br: &Branch) -> Result<Complex64> {
    if br.r == 0.0 && br.x == 0.0 {
        return Err(Error::SingularBranch {
            from: br.from,
            to: br.to,
        });
    }
    Ok(Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x))
}

/// Stamp a pi-section between positions `i` and `j`.
pub(crate) fn stamp_branch(y: &mut CMatrix, i: usize, j: usize, br: &Branch) -> Result<()> {
    let ys = series_admittance(br)?;
    let ych = Complex64::new(0.0, br.b_charging / 2.0);
    y[(i, i)] += ys + ych;
    y[(j, j)] += ys + ych;
    y[(i, j)] -= ys;
    y[(j, i)] -= ys;
    Ok(())
}

/// Bus admittance matrix, rows ordered as `case.buses`.
pub fn build_ybus(case: &PowerSystemCase) -> Result<CMatrix> {
    build_ybus_without(case, &[])
}

/// Bus admittance matrix with the listed branch positions left out.
pub fn build_ybus_without(case: &PowerSystemCase, skip: &[usize]) -> Result<CMatrix> {
    let n = case.buses.len();
    let idx = case.bus_index();
    let mut y = CMatrix::zeros(n, n);
    for (k, br) in case.branches.iter().enumerate() {
        if !br.status || skip.contains(&k) {
            continue;
        }
        stamp_branch(&mut y, idx[&br.from], idx[&br.to], br)?;
    }
    for (k, b) in case.buses.iter().enumerate() {
        y[(k, k)] += Complex64::new(b.shunt_g, b.shunt_b);
    }
    Ok(y)
}
