//! Sparse matrices, conjugate gradients and symmetric generalized eigensolvers.

mod cg;
mod csr;
mod dense;
mod lobpcg;

use nalgebra::DMatrix;

pub use cg::{cg_solve, CgOutcome, Preconditioner};
pub use csr::{axpy, dot, norm2, CsrMatrix};
pub use dense::dense_eig;
pub(crate) use lobpcg::random_block;
pub use lobpcg::{eigensolve, lobpcg, LobpcgOptions, DENSE_FALLBACK_DIM};

/// Eigenpairs of `A x = lambda M x`, ascending, with `M`-orthonormal vectors.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    /// One eigenvector per column.
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Sum of the Ritz values after each iteration.
    pub trace_history: Vec<f64>,
}

/// A symmetric linear operator on coefficient vectors.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut y = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut y);
            out.set_column(j, &nalgebra::DVector::from_column_slice(&y));
            e[j] = 0.0;
        }
        out
    }
}

impl SymmetricOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y);
    }

    fn diagonal(&self) -> Vec<f64> {
        CsrMatrix::diagonal(self)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        CsrMatrix::to_dense(self)
    }
}

/// Applies `op` to every column of `x`.
pub fn apply_block(op: &dyn SymmetricOperator, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        let col = x.column(j);
        let src = col.as_slice();
        let mut dst = out.column_mut(j);
        op.apply(src, dst.as_mut_slice());
    }
    out
}
