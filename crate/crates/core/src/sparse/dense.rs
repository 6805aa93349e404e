use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::EigenResult;
use crate::error::{Error, Result};

/// Lowest `nev` eigenpairs of the dense pencil `(a, m)` with `m` SPD.
///
/// Reduces to standard form through the Cholesky factor `m = L L^T`,
/// diagonalizes `L^-1 a L^-T`, and maps eigenvectors back so they are
/// `m`-orthonormal.
pub fn dense_eig(a: &DMatrix<f64>, m: &DMatrix<f64>, nev: usize) -> Result<EigenResult> {
    let n = a.nrows();
    if a.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidInput(
            "dense_eig needs square matrices of equal size".into(),
        ));
    }
    if nev == 0 || nev > n {
        return Err(Error::InvalidInput(format!(
            "cannot request {nev} eigenpairs of a {n}x{n} pencil"
        )));
    }
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    // C = L^-1 A L^-T
    let y = l.solve_lower_triangular(a).ok_or(Error::NotPositiveDefinite)?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::NotPositiveDefinite)?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut z = DMatrix::zeros(n, nev);
    let mut values = Vec::with_capacity(nev);
    for (col, &k) in order.iter().take(nev).enumerate() {
        values.push(eig.eigenvalues[k]);
        z.set_column(col, &eig.eigenvectors.column(k));
    }
    let vectors = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::NotPositiveDefinite)?;

    let residuals = (0..nev)
        .map(|k| {
            let x: DVector<f64> = vectors.column(k).into();
            (a * &x - m * &x * values[k]).norm()
        })
        .collect();
    Ok(EigenResult {
        values,
        vectors,
        residuals,
        iterations: 1,
        trace_history: Vec::new(),
    })
}
