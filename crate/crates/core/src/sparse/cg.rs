use super::csr::{axpy, dot, norm2, CsrMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    Jacobi,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for SPD `a`, stopping when
/// `||b - A x|| <= tol ||b||`. `x0` warm-starts the iteration.
pub fn cg_solve(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    maxit: usize,
    preconditioner: Preconditioner,
) -> Result<CgOutcome> {
    let n = b.len();
    assert_eq!(a.nrows(), n);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = match preconditioner {
        Preconditioner::None => vec![1.0; n],
        Preconditioner::Jacobi => a
            .diagonal()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect(),
    };

    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let mut r = b.to_vec();
    if x0.is_some() {
        axpy(-1.0, &a.matvec(&x), &mut r);
    }
    let mut rnorm = norm2(&r);
    if rnorm <= tol * bnorm {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relative_residual: rnorm / bnorm,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for it in 1..=maxit {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        rnorm = norm2(&r);
        if rnorm <= tol * bnorm {
            return Ok(CgOutcome {
                x,
                iterations: it,
                relative_residual: rnorm / bnorm,
            });
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::NotConverged {
        solver: "cg",
        iterations: maxit,
        residual: rnorm / bnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_one_step() {
        let a = CsrMatrix::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        let out = cg_solve(&a, &b, None, 1e-14, 10, Preconditioner::None).unwrap();
        assert!(out.iterations <= 1);
        assert_eq!(out.x, b.to_vec());
    }

    #[test]
    fn diagonal_with_jacobi() {
        let d = [1.0, 10.0, 100.0, 0.1];
        let a = CsrMatrix::from_diagonal(&d);
        let b = [1.0, 1.0, 1.0, 1.0];
        let out = cg_solve(&a, &b, None, 1e-14, 10, Preconditioner::Jacobi).unwrap();
        assert!(out.iterations <= 1);
        for (xi, di) in out.x.iter().zip(&d) {
            assert!((xi - 1.0 / di).abs() < 1e-14);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let b = vec![1.0; n];
        match cg_solve(&a, &b, None, 1e-12, 3, Preconditioner::None) {
            Err(Error::NotConverged {
                iterations, residual, ..
            }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
