//! Thomas algorithm for tridiagonal systems.

use crate::error::{Error, Result};

/// Solves `sub[k] x[k-1] + diag[k] x[k] + sup[k] x[k+1] = rhs[k]` in place of `rhs`.
/// `sub[0]` and `sup[n-1]` are ignored. `scratch` must have length `n`.
pub fn solve(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return Err(Error::Singular(0));
    }
    rhs[0] /= beta;
    for k in 1..n {
        scratch[k] = sup[k - 1] / beta;
        beta = diag[k] - sub[k] * scratch[k];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::Singular(k));
        }
        rhs[k] = (rhs[k] - sub[k] * rhs[k - 1]) / beta;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= scratch[k + 1] * rhs[k + 1];
    }
    Ok(())
}
