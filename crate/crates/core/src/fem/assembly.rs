//! Element loops producing stiffness, mass and potential-weighted mass
//! matrices on the free dofs, plus load vectors.

use super::element::{basis_gradients, basis_values, MAX_LOCAL};
use super::space::{FeSpace, BOUNDARY};
use crate::error::{Error, Result};
use crate::mesh::dot;
use crate::sparse::CsrMatrix;

/// Element matrix callback: fills `local` (row-major, `nloc x nloc`) for tet `t`.
fn assemble_with<F>(space: &FeSpace, mut element: F) -> CsrMatrix
where
    F: FnMut(usize, &mut [f64]),
{
    let nloc = space.local_dofs();
    let mut mat = space.pattern().clone();
    let mut local = vec![0.0; nloc * nloc];
    for t in 0..space.n_elements() {
        local.iter_mut().for_each(|v| *v = 0.0);
        element(t, &mut local);
        let scatter = space.scatter(t);
        let values = mat.values_mut();
        for (k, &pos) in scatter.iter().enumerate() {
            if pos != u32::MAX {
                values[pos as usize] += local[k];
            }
        }
    }
    mat
}

/// Upper-triangle element integrals mirrored, so the result is bitwise symmetric.
fn mirror(local: &mut [f64], nloc: usize) {
    for a in 0..nloc {
        for b in 0..a {
            local[a * nloc + b] = local[b * nloc + a];
        }
    }
}

fn stiffness_element(space: &FeSpace, t: usize, local: &mut [f64]) {
    let nloc = space.local_dofs();
    let rule = space.matrix_rule();
    let g = space.grad_lambda(t);
    let vol = space.volume(t);
    let mut gb = [[0.0; 3]; MAX_LOCAL];
    for (lam, w) in rule.points.iter().zip(&rule.weights) {
        basis_gradients(space.degree(), lam, g, &mut gb);
        for a in 0..nloc {
            for b in a..nloc {
                local[a * nloc + b] += w * vol * dot(&gb[a], &gb[b]);
            }
        }
    }
    mirror(local, nloc);
}

fn mass_element(space: &FeSpace, t: usize, local: &mut [f64]) {
    let nloc = space.local_dofs();
    let rule = space.matrix_rule();
    let vol = space.volume(t);
    let mut bv = [0.0; MAX_LOCAL];
    for (lam, w) in rule.points.iter().zip(&rule.weights) {
        basis_values(space.degree(), lam, &mut bv);
        for a in 0..nloc {
            for b in a..nloc {
                local[a * nloc + b] += w * vol * bv[a] * bv[b];
            }
        }
    }
    mirror(local, nloc);
}

/// `K_ij = int grad b_i . grad b_j` on the free dofs.
pub fn assemble_stiffness(space: &FeSpace) -> CsrMatrix {
    assemble_with(space, |t, local| stiffness_element(space, t, local))
}

/// `M_ij = int b_i b_j` on the free dofs.
pub fn assemble_mass(space: &FeSpace) -> CsrMatrix {
    assemble_with(space, |t, local| mass_element(space, t, local))
}

/// `W_ij = int w b_i b_j` with `w` given at every field quadrature point.
pub fn assemble_weighted_mass(space: &FeSpace, w: &[f64]) -> Result<CsrMatrix> {
    if w.len() != space.n_qp() {
        return Err(Error::InvalidInput(format!(
            "weight has {} values, space has {} quadrature points",
            w.len(),
            space.n_qp()
        )));
    }
    if let Some(i) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite weight at quadrature point {i}"
        )));
    }
    let nloc = space.local_dofs();
    let nq = space.qp_per_element();
    let rule = space.field_rule();
    let basis = space.field_basis();
    Ok(assemble_with(space, |t, local| {
        let vol = space.volume(t);
        for q in 0..nq {
            let wq = rule.weights[q] * vol * w[t * nq + q];
            let b = &basis[q];
            for a in 0..nloc {
                let s = wq * b[a];
                for c in a..nloc {
                    local[a * nloc + c] += s * b[c];
                }
            }
        }
        mirror(local, nloc);
    }))
}

/// `f_i = int f b_i` on the free dofs, `f` given at the field points.
pub fn load_vector(space: &FeSpace, f: &[f64]) -> Vec<f64> {
    let node_load = node_load_vector(space, f);
    space.free_nodes().iter().map(|&n| node_load[n]).collect()
}

/// `f_i = int f b_i` for every node, boundary included.
pub fn node_load_vector(space: &FeSpace, f: &[f64]) -> Vec<f64> {
    assert_eq!(f.len(), space.n_qp());
    let nq = space.qp_per_element();
    let rule = space.field_rule();
    let basis = space.field_basis();
    let mut out = vec![0.0; space.n_nodes()];
    for t in 0..space.n_elements() {
        let vol = space.volume(t);
        let nodes = space.element_nodes(t);
        for q in 0..nq {
            let s = rule.weights[q] * vol * f[t * nq + q];
            for (a, &n) in nodes.iter().enumerate() {
                out[n] += s * basis[q][a];
            }
        }
    }
    out
}

/// Stiffness coupling from boundary nodes into the free dofs, `K_IB`.
pub fn assemble_boundary_coupling(space: &FeSpace) -> CsrMatrix {
    let nloc = space.local_dofs();
    let mut bindex = vec![usize::MAX; space.n_nodes()];
    for (k, &n) in space.boundary_nodes().iter().enumerate() {
        bindex[n] = k;
    }
    let mut triplets = Vec::new();
    let mut local = vec![0.0; nloc * nloc];
    for t in 0..space.n_elements() {
        let nodes = space.element_nodes(t);
        if nodes.iter().all(|&n| bindex[n] == usize::MAX) {
            continue;
        }
        local.iter_mut().for_each(|v| *v = 0.0);
        stiffness_element(space, t, &mut local);
        for a in 0..nloc {
            let r = space.node_dof(nodes[a]);
            if r == BOUNDARY {
                continue;
            }
            for b in 0..nloc {
                let c = bindex[nodes[b]];
                if c != usize::MAX {
                    triplets.push((r, c, local[a * nloc + b]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(space.n_dofs(), space.boundary_nodes().len(), triplets)
}
