use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solve `(M'M) x = M'b` through a Cholesky factorization of the normal matrix.
pub(crate) fn normal_solve(m: &DMatrix<f64>, b: &[f64], what: &str) -> Result<Vec<f64>> {
    let mtm = m.transpose() * m;
    check_min_eigen(&mtm, 1e-8, what)?;
    let rhs = m.transpose() * DVector::from_column_slice(b);
    let chol = mtm
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("{what}: normal matrix is not positive definite")))?;
    Ok(chol.solve(&rhs).as_slice().to_vec())
}

/// Fail unless the symmetric matrix has all eigenvalues above `threshold`.
pub(crate) fn check_min_eigen(m: &DMatrix<f64>, threshold: f64, what: &str) -> Result<f64> {
    let ev = m.clone().symmetric_eigen().eigenvalues;
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(lo > threshold) {
        return Err(Error::Construction(format!(
            "{what}: smallest eigenvalue {lo:e} is not above {threshold:e}"
        )));
    }
    Ok(lo)
}

/// Symmetrize in place to remove rounding asymmetry from products like `A'A`.
pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
