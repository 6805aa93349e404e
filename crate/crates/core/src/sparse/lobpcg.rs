//! Locally optimal block preconditioned conjugate gradients for the lowest
//! eigenpairs of a symmetric pencil `A x = lambda M x`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::csr::CsrMatrix;
use super::dense::dense_eig;
use super::{apply_block, EigenResult, SymmetricOperator};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LobpcgOptions {
    /// Relative residual `||Ax - lambda Mx|| / (||Ax|| + |lambda| ||Mx||)`.
    pub tol: f64,
    pub maxit: usize,
    pub precondition: bool,
    /// Seed for the fresh directions injected after a rank collapse.
    pub seed: u64,
    /// Only the lowest `wanted` pairs must reach `tol`; the remaining block
    /// columns act as guard vectors. Zero means the whole block.
    pub wanted: usize,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            maxit: 2000,
            precondition: true,
            seed: 0x5eed,
            wanted: 0,
        }
    }
}

/// Below this dimension [`eigensolve`] uses the dense solver.
pub const DENSE_FALLBACK_DIM: usize = 200;

/// Dense solve for small problems, LOBPCG otherwise.
pub fn eigensolve(
    a: &dyn SymmetricOperator,
    m: &CsrMatrix,
    x0: &DMatrix<f64>,
    opts: &LobpcgOptions,
) -> Result<EigenResult> {
    if a.dim() < DENSE_FALLBACK_DIM {
        let mut r = dense_eig(&a.to_dense(), &m.to_dense(), x0.ncols())?;
        r.residuals = relative_residuals(a, m, &r.vectors, &r.values);
        r.trace_history = vec![r.values.iter().sum()];
        Ok(r)
    } else {
        lobpcg(a, m, x0, opts)
    }
}

pub fn lobpcg(
    a: &dyn SymmetricOperator,
    m: &CsrMatrix,
    x0: &DMatrix<f64>,
    opts: &LobpcgOptions,
) -> Result<EigenResult> {
    let n = a.dim();
    let k = x0.ncols();
    if k == 0 || k > n || x0.nrows() != n || m.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "lobpcg: block {}x{} incompatible with operator of dimension {n}",
            x0.nrows(),
            k
        )));
    }
    let wanted = if opts.wanted == 0 { k } else { opts.wanted.min(k) };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut restarted = false;

    let mut x = x0.clone();
    let mut mx = m_block(m, &x);
    // initial M-orthonormalization and Rayleigh-Ritz on span(X0)
    let (mut lambda, coef) = loop {
        let basis = [&x];
        let mbasis = [&mx];
        match rayleigh_ritz(a, &basis, &mbasis, None, k) {
            Some(r) => break r,
            None if !restarted => {
                restarted = true;
                x += random_block(n, k, &mut rng) * (x.amax().max(1.0) * 1e-3);
                mx = m_block(m, &x);
            }
            None => {
                return Err(Error::RankDeficient { column: 0, norm: 0.0 });
            }
        }
    };
    x = &x * &coef;
    mx = &mx * &coef;
    let mut ax = apply_block(a, &x);

    let inv_precond: Option<Vec<f64>> = opts.precondition.then(|| {
        let sigma = 1.0 - lambda.iter().cloned().fold(f64::INFINITY, f64::min);
        a.diagonal()
            .iter()
            .zip(m.diagonal())
            .map(|(da, dm)| {
                let d = da + sigma * dm;
                if d > 0.0 {
                    1.0 / d
                } else {
                    1.0
                }
            })
            .collect()
    });

    let mut p: Option<DMatrix<f64>> = None;
    let mut trace_history = vec![lambda.iter().sum::<f64>()];
    let mut residuals = vec![f64::INFINITY; k];

    for it in 1..=opts.maxit {
        let mut r = ax.clone();
        if it % REFRESH_EVERY == 0 {
            mx = m_block(m, &x);
            ax = apply_block(a, &x);
            r = ax.clone();
        }
        for j in 0..k {
            let mut col = r.column_mut(j);
            col.axpy(-lambda[j], &mx.column(j), 1.0);
        }
        for j in 0..k {
            let scale = ax.column(j).norm() + lambda[j].abs() * mx.column(j).norm();
            residuals[j] = r.column(j).norm() / scale.max(f64::MIN_POSITIVE);
        }
        if residuals[..wanted].iter().all(|&r| r <= opts.tol) {
            return finish(a, m, x, it - 1, trace_history);
        }
        let active: Vec<usize> = (0..k).filter(|&j| residuals[j] > opts.tol).collect();

        let mut w = DMatrix::zeros(n, active.len());
        for (c, &j) in active.iter().enumerate() {
            w.set_column(c, &r.column(j));
        }
        if let Some(d) = &inv_precond {
            for mut col in w.column_iter_mut() {
                for (v, di) in col.iter_mut().zip(d) {
                    *v *= di;
                }
            }
        }
        // W and P are M-orthonormalized against everything before them and
        // their images recomputed, so the reduced pencil is well conditioned
        let mut w = m_orthonormalize(m, &w, &[(&x, &mx)]);
        if w.is_none() && !restarted {
            restarted = true;
            w = m_orthonormalize(m, &random_block(n, active.len(), &mut rng), &[(&x, &mx)]);
        }
        let Some((w, mw)) = w else {
            return Err(Error::RankDeficient {
                column: active[0],
                norm: 0.0,
            });
        };
        let aw = apply_block(a, &w);
        let pp = p
            .as_ref()
            .and_then(|pp| m_orthonormalize(m, &select_columns(pp, &active), &[(&x, &mx), (&w, &mw)]))
            .map(|(pp, mp)| {
                let ap = apply_block(a, &pp);
                (pp, ap, mp)
            });

        let mut basis = vec![&x, &w];
        let mut abasis = vec![&ax, &aw];
        let mut mbasis = vec![&mx, &mw];
        if let Some((pp, ap, mp)) = &pp {
            basis.push(pp);
            abasis.push(ap);
            mbasis.push(mp);
        }
        let Some((new_lambda, coef)) = rayleigh_ritz(a, &basis, &mbasis, Some(&abasis), k) else {
            return Err(Error::RankDeficient {
                column: active[0],
                norm: 0.0,
            });
        };
        let s = hstack(&basis);

        lambda = new_lambda;
        x = &s * &coef;
        ax = &hstack(&abasis) * &coef;
        mx = &hstack(&mbasis) * &coef;
        let tail = coef.rows(k, coef.nrows() - k).into_owned();
        p = Some(s.columns(k, s.ncols() - k) * &tail);
        trace_history.push(lambda.iter().sum());
    }
    Err(Error::NotConverged {
        solver: "lobpcg",
        iterations: opts.maxit,
        residual: residuals[..wanted].iter().cloned().fold(0.0, f64::max),
    })
}

fn finish(
    a: &dyn SymmetricOperator,
    m: &CsrMatrix,
    x: DMatrix<f64>,
    iterations: usize,
    trace_history: Vec<f64>,
) -> Result<EigenResult> {
    // final Cholesky re-orthonormalization against accumulated drift
    let mx = m_block(m, &x);
    let k = x.ncols();
    let (values, coef) =
        rayleigh_ritz(a, &[&x], &[&mx], None, k).ok_or(Error::RankDeficient { column: 0, norm: 0.0 })?;
    let vectors = &x * coef;
    let residuals = relative_residuals(a, m, &vectors, &values);
    Ok(EigenResult {
        values,
        vectors,
        residuals,
        iterations,
        trace_history,
    })
}

pub(crate) fn relative_residuals(
    a: &dyn SymmetricOperator,
    m: &CsrMatrix,
    vectors: &DMatrix<f64>,
    values: &[f64],
) -> Vec<f64> {
    let ax = apply_block(a, vectors);
    let mx = m_block(m, vectors);
    (0..vectors.ncols())
        .map(|j| {
            let r = ax.column(j) - mx.column(j) * values[j];
            let scale = ax.column(j).norm() + values[j].abs() * mx.column(j).norm();
            r.norm() / scale.max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// Relative Gram eigenvalue below which a direction is dropped. Directions
/// closer to dependence than this carry reduced-matrix entries dominated by
/// rounding and can produce spurious Ritz values far below the spectrum.
const GRAM_DROP: f64 = 1e-9;

/// Iterations between explicit recomputation of `AX` and `MX`, which are
/// otherwise updated implicitly and drift.
const REFRESH_EVERY: usize = 25;

/// Rayleigh-Ritz on span of the concatenated blocks. Returns the lowest `k`
/// Ritz values and the coefficient matrix, or `None` if fewer than `k`
/// independent directions survive.
fn rayleigh_ritz(
    a: &dyn SymmetricOperator,
    basis: &[&DMatrix<f64>],
    mbasis: &[&DMatrix<f64>],
    abasis: Option<&[&DMatrix<f64>]>,
    k: usize,
) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let s = hstack(basis);
    let ms = hstack(mbasis);
    let as_ = match abasis {
        Some(ab) => hstack(ab),
        None => apply_block(a, &s),
    };
    let gm = symmetrize(s.transpose() * &ms);
    let ga = symmetrize(s.transpose() * &as_);

    // scaled eigen-orthonormalization of the Gram matrix, dropping near-null directions
    let dim = gm.nrows();
    let scale: Vec<f64> = (0..dim).map(|i| gm[(i, i)]).collect();
    if scale.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return None;
    }
    let d = DVector::from_iterator(dim, scale.iter().map(|v| 1.0 / v.sqrt()));
    let dm = DMatrix::from_diagonal(&d);
    let gs = symmetrize(&dm * &gm * &dm);
    let eig = SymmetricEigen::new(gs);
    let top = eig.eigenvalues.max();
    let keep: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] > GRAM_DROP * top).collect();
    if keep.len() < k {
        return None;
    }
    let mut t = DMatrix::zeros(dim, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let col = eig.eigenvectors.column(i) / eig.eigenvalues[i].sqrt();
        t.set_column(c, &(&dm * col));
    }
    let reduced = symmetrize(t.transpose() * &ga * &t);
    let red = SymmetricEigen::new(reduced);
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by(|&i, &j| red.eigenvalues[i].total_cmp(&red.eigenvalues[j]));
    let mut y = DMatrix::zeros(keep.len(), k);
    let mut values = Vec::with_capacity(k);
    for (c, &i) in order.iter().take(k).enumerate() {
        values.push(red.eigenvalues[i]);
        y.set_column(c, &red.eigenvectors.column(i));
    }
    Some((values, t * y))
}

/// Directions kept by [`m_orthonormalize`] must retain this fraction of
/// their `M`-norm after projection; shorter remainders are rounding noise.
const PROJECTION_KEEP: f64 = 1e-8;

/// Projects `b` out of the given `M`-orthonormal blocks (twice, for
/// stability) and `M`-orthonormalizes what remains by SVQB, dropping
/// near-dependent directions. Returns the block and its `M`-image, or `None`
/// if nothing survives.
fn m_orthonormalize(
    m: &CsrMatrix,
    b: &DMatrix<f64>,
    against: &[(&DMatrix<f64>, &DMatrix<f64>)],
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let before: Vec<f64> = {
        let mb = m_block(m, b);
        (0..b.ncols())
            .map(|j| b.column(j).dot(&mb.column(j)).max(0.0).sqrt())
            .collect()
    };
    let mut b = b.clone();
    for _ in 0..2 {
        for (q, mq) in against {
            let c = mq.transpose() * &b;
            b -= *q * c;
        }
    }
    let mb = m_block(m, &b);
    let g = symmetrize(b.transpose() * &mb);
    let scale = before.iter().cloned().fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let eig = SymmetricEigen::new(g);
    let cut = (PROJECTION_KEEP * scale).powi(2);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > cut)
        .collect();
    if keep.is_empty() {
        return None;
    }
    let mut t = DMatrix::zeros(b.ncols(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        t.set_column(c, &(eig.eigenvectors.column(i) / eig.eigenvalues[i].sqrt()));
    }
    let out = b * t;
    let mout = m_block(m, &out);
    Some((out, mout))
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, cols);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(*b);
        c += b.ncols();
    }
    out
}

fn select_columns(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), cols.len());
    for (c, &j) in cols.iter().enumerate() {
        out.set_column(c, &a.column(j));
    }
    out
}

pub(crate) fn m_block(m: &CsrMatrix, x: &DMatrix<f64>) -> DMatrix<f64> {
    apply_block(m, x)
}

pub(crate) fn random_block(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(n: usize) -> CsrMatrix {
        CsrMatrix::from_diagonal(&(1..=n).map(|i| i as f64).collect::<Vec<_>>())
    }

    fn laplace_2d(m: usize) -> CsrMatrix {
        let n = m * m;
        let mut t = Vec::new();
        for j in 0..m {
            for i in 0..m {
                let r = i + m * j;
                t.push((r, r, 4.0));
                if i > 0 {
                    t.push((r, r - 1, -1.0));
                }
                if i + 1 < m {
                    t.push((r, r + 1, -1.0));
                }
                if j > 0 {
                    t.push((r, r - m, -1.0));
                }
                if j + 1 < m {
                    t.push((r, r + m, -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn diagonal_spectrum() {
        let n = 40;
        let a = diag(n);
        let m = CsrMatrix::identity(n);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = random_block(n, 3, &mut rng);
        let r = lobpcg(&a, &m, &x0, &LobpcgOptions::default()).unwrap();
        for (l, e) in r.values.iter().zip([1.0, 2.0, 3.0]) {
            assert!((l - e).abs() < 1e-9, "{l}");
        }
        assert!(r.residuals.iter().all(|&res| res <= 1e-10));
    }

    #[test]
    fn matches_dense_and_is_orthonormal() {
        let a = laplace_2d(24);
        let n = a.nrows();
        // a non-trivial mass matrix
        let m = CsrMatrix::from_diagonal(&(0..n).map(|i| 1.0 + 0.5 * ((i % 7) as f64) / 7.0).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = random_block(n, 4, &mut rng);
        let r = lobpcg(&a, &m, &x0, &LobpcgOptions::default()).unwrap();
        let d = dense_eig(&a.to_dense(), &m.to_dense(), 4).unwrap();
        for (l, e) in r.values.iter().zip(&d.values) {
            assert!((l - e).abs() < 1e-9 * e.abs().max(1.0), "{l} vs {e}");
        }
        let gram = r.vectors.transpose() * m_block(&m, &r.vectors);
        assert!((gram - DMatrix::identity(4, 4)).amax() < 1e-10);
        for w in r.trace_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn deterministic() {
        let a = laplace_2d(20);
        let m = CsrMatrix::identity(a.nrows());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = random_block(a.nrows(), 2, &mut rng);
        let r1 = lobpcg(&a, &m, &x0, &LobpcgOptions::default()).unwrap();
        let r2 = lobpcg(&a, &m, &x0, &LobpcgOptions::default()).unwrap();
        assert_eq!(r1.values, r2.values);
        assert_eq!(r1.vectors, r2.vectors);
    }

    #[test]
    fn recovers_from_dependent_start() {
        let a = diag(30);
        let m = CsrMatrix::identity(30);
        let col = DVector::from_fn(30, |i, _| (i as f64 + 1.0).sin());
        let x0 = DMatrix::from_columns(&[col.clone(), col]);
        let r = lobpcg(&a, &m, &x0, &LobpcgOptions::default()).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-9);
        assert!((r.values[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_cap() {
        let a = laplace_2d(30);
        let m = CsrMatrix::identity(a.nrows());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x0 = random_block(a.nrows(), 2, &mut rng);
        let opts = LobpcgOptions {
            maxit: 2,
            ..Default::default()
        };
        assert!(matches!(lobpcg(&a, &m, &x0, &opts), Err(Error::NotConverged { .. })));
    }
}
