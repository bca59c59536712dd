use crate::error::{Error, Result};

/// Solves a tridiagonal system by the Thomas algorithm.
///
/// `lower[0]` and `upper[n - 1]` are ignored. `diag` and `rhs` are overwritten.
pub fn solve_in_place(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    for i in 1..n {
        let pivot = diag[i - 1];
        if !(pivot.abs() > f64::MIN_POSITIVE) || !pivot.is_finite() {
            return Err(Error::SingularSystem { row: i - 1 });
        }
        let m = lower[i] / pivot;
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    if !(diag[n - 1].abs() > f64::MIN_POSITIVE) || !diag[n - 1].is_finite() {
        return Err(Error::SingularSystem { row: n - 1 });
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
    Ok(())
}
