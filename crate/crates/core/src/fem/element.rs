//! Lagrange shape functions on a tetrahedron in barycentric form.
//!
//! Local numbering: vertices 0..4, then for P2 the edge midpoints in the
//! order (0,1), (0,2), (0,3), (1,2), (1,3), (2,3).

use crate::mesh::{cross, dot, sub, Point};

pub const MAX_LOCAL: usize = 10;

pub const P2_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

pub fn local_dofs(degree: usize) -> usize {
    match degree {
        1 => 4,
        2 => 10,
        _ => unreachable!("only P1 and P2 are supported"),
    }
}

pub fn basis_values(degree: usize, lam: &[f64; 4], out: &mut [f64; MAX_LOCAL]) {
    match degree {
        1 => out[..4].copy_from_slice(lam),
        _ => {
            for i in 0..4 {
                out[i] = lam[i] * (2.0 * lam[i] - 1.0);
            }
            for (e, &(i, j)) in P2_EDGES.iter().enumerate() {
                out[4 + e] = 4.0 * lam[i] * lam[j];
            }
        }
    }
}

/// Physical gradients of the shape functions given `grad_lam[i] = grad(lambda_i)`.
pub fn basis_gradients(degree: usize, lam: &[f64; 4], grad_lam: &[Point; 4], out: &mut [Point; MAX_LOCAL]) {
    match degree {
        1 => out[..4].copy_from_slice(grad_lam),
        _ => {
            for i in 0..4 {
                let s = 4.0 * lam[i] - 1.0;
                out[i] = scale(&grad_lam[i], s);
            }
            for (e, &(i, j)) in P2_EDGES.iter().enumerate() {
                let a = scale(&grad_lam[j], 4.0 * lam[i]);
                let b = scale(&grad_lam[i], 4.0 * lam[j]);
                out[4 + e] = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
            }
        }
    }
}

fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Gradients of the barycentric coordinates and the (positive) volume.
pub fn tet_geometry(v: &[Point; 4]) -> ([Point; 4], f64) {
    let e1 = sub(&v[1], &v[0]);
    let e2 = sub(&v[2], &v[0]);
    let e3 = sub(&v[3], &v[0]);
    let det = dot(&e1, &cross(&e2, &e3));
    // rows of the inverse Jacobian are the gradients of lambda_1..3
    let g1 = scale(&cross(&e2, &e3), 1.0 / det);
    let g2 = scale(&cross(&e3, &e1), 1.0 / det);
    let g3 = scale(&cross(&e1, &e2), 1.0 / det);
    let g0 = [
        -(g1[0] + g2[0] + g3[0]),
        -(g1[1] + g2[1] + g3[1]),
        -(g1[2] + g2[2] + g3[2]),
    ];
    ([g0, g1, g2, g3], det.abs() / 6.0)
}

pub fn barycentric(v: &[Point; 4], x: &Point) -> [f64; 4] {
    let (g, _) = tet_geometry(v);
    barycentric_from_gradients(&v[0], &g, x)
}

pub(crate) fn barycentric_from_gradients(v0: &Point, g: &[Point; 4], x: &Point) -> [f64; 4] {
    let d = sub(x, v0);
    let l1 = dot(&g[1], &d);
    let l2 = dot(&g[2], &d);
    let l3 = dot(&g[3], &d);
    [1.0 - l1 - l2 - l3, l1, l2, l3]
}

#[cfg(test)]
mod tests {
    use super::*;

    const REF: [Point; 4] = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    #[test]
    fn reference_gradients() {
        let (g, vol) = tet_geometry(&REF);
        assert!((vol - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(g[0], [-1.0, -1.0, -1.0]);
        assert_eq!(g[1], [1.0, 0.0, 0.0]);
        // |grad lambda_0|^2 V = 3/6
        assert!((dot(&g[0], &g[0]) * vol - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partition_of_unity_and_nodal_property() {
        for degree in [1, 2] {
            let nloc = local_dofs(degree);
            let mut nodes: Vec<[f64; 4]> = (0..4)
                .map(|i| {
                    let mut l = [0.0; 4];
                    l[i] = 1.0;
                    l
                })
                .collect();
            if degree == 2 {
                for &(i, j) in &P2_EDGES {
                    let mut l = [0.0; 4];
                    l[i] = 0.5;
                    l[j] = 0.5;
                    nodes.push(l);
                }
            }
            let mut b = [0.0; MAX_LOCAL];
            for (k, lam) in nodes.iter().enumerate() {
                basis_values(degree, lam, &mut b);
                for a in 0..nloc {
                    assert!((b[a] - if a == k { 1.0 } else { 0.0 }).abs() < 1e-15);
                }
            }
            let lam = [0.1, 0.2, 0.3, 0.4];
            basis_values(degree, &lam, &mut b);
            assert!((b[..nloc].iter().sum::<f64>() - 1.0).abs() < 1e-15);
            let (g, _) = tet_geometry(&REF);
            let mut gb = [[0.0; 3]; MAX_LOCAL];
            basis_gradients(degree, &lam, &g, &mut gb);
            for c in 0..3 {
                assert!(gb[..nloc].iter().map(|v| v[c]).sum::<f64>().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let v: [Point; 4] = [[0.1, 0.0, 0.2], [1.2, 0.1, 0.0], [0.0, 0.9, 0.1], [0.2, 0.3, 1.1]];
        let (g, _) = tet_geometry(&v);
        let x = [0.35, 0.25, 0.3];
        let eps = 1e-6;
        let mut gb = [[0.0; 3]; MAX_LOCAL];
        basis_gradients(2, &barycentric(&v, &x), &g, &mut gb);
        for c in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += eps;
            xm[c] -= eps;
            let mut bp = [0.0; MAX_LOCAL];
            let mut bm = [0.0; MAX_LOCAL];
            basis_values(2, &barycentric(&v, &xp), &mut bp);
            basis_values(2, &barycentric(&v, &xm), &mut bm);
            for a in 0..10 {
                let fd = (bp[a] - bm[a]) / (2.0 * eps);
                assert!((fd - gb[a][c]).abs() < 1e-8);
            }
        }
    }
}
