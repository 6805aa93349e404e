use std::collections::BTreeMap;

use rayon::prelude::*;

use super::element::{
    barycentric_from_gradients, basis_gradients, basis_values, local_dofs, tet_geometry, MAX_LOCAL, P2_EDGES,
};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{quadrature_rule, Quadrature};
use crate::sparse::CsrMatrix;

/// Marks boundary nodes in the element-to-dof map.
pub const BOUNDARY: usize = usize::MAX;

/// Exactness degree of the rule used for every density-dependent integral.
pub const FIELD_QUADRATURE_ORDER: usize = 5;

/// Lagrange P1/P2 space on a [`Mesh`] with homogeneous Dirichlet conditions.
///
/// Nodes are all Lagrange nodes (vertices, then edge midpoints for P2);
/// dofs are the interior nodes, numbered in node order.
#[derive(Debug)]
pub struct FeSpace {
    mesh: Mesh,
    degree: usize,
    nloc: usize,
    nodes: Vec<Point>,
    node_dof: Vec<usize>,
    free_nodes: Vec<usize>,
    boundary_nodes: Vec<usize>,
    elem_nodes: Vec<usize>,
    grad_lam: Vec<[Point; 4]>,
    volumes: Vec<f64>,
    matrix_rule: Quadrature,
    field_rule: Quadrature,
    field_basis: Vec<[f64; MAX_LOCAL]>,
    pattern: CsrMatrix,
    scatter: Vec<u32>,
}

impl FeSpace {
    pub fn new(mesh: Mesh, degree: usize) -> Result<Self> {
        if degree != 1 && degree != 2 {
            return Err(Error::InvalidInput(format!("unsupported element degree {degree}")));
        }
        let nloc = local_dofs(degree);
        let mut nodes: Vec<Point> = mesh.vertices().to_vec();
        let mut elem_nodes = Vec::with_capacity(nloc * mesh.tets().len());

        if degree == 1 {
            for t in mesh.tets() {
                elem_nodes.extend_from_slice(t);
            }
        } else {
            // edge nodes are numbered by sorted vertex pair
            let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            for t in mesh.tets() {
                for &(a, b) in &P2_EDGES {
                    let key = (t[a].min(t[b]), t[a].max(t[b]));
                    edges.insert(key, 0);
                }
            }
            let nv = nodes.len();
            for (k, (key, id)) in edges.iter_mut().enumerate() {
                *id = nv + k;
                let (p, q) = (mesh.vertices()[key.0], mesh.vertices()[key.1]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])]);
            }
            for t in mesh.tets() {
                elem_nodes.extend_from_slice(t);
                for &(a, b) in &P2_EDGES {
                    elem_nodes.push(edges[&(t[a].min(t[b]), t[a].max(t[b]))]);
                }
            }
        }

        let l = mesh.half_width();
        let tol = 1e-10 * l;
        let mut node_dof = vec![BOUNDARY; nodes.len()];
        let mut free_nodes = Vec::new();
        let mut boundary_nodes = Vec::new();
        for (i, p) in nodes.iter().enumerate() {
            if p.iter().any(|c| (c.abs() - l).abs() <= tol) {
                boundary_nodes.push(i);
            } else {
                node_dof[i] = free_nodes.len();
                free_nodes.push(i);
            }
        }

        let (grad_lam, volumes): (Vec<_>, Vec<_>) = (0..mesh.tets().len())
            .map(|t| tet_geometry(&mesh.tet_vertices(t)))
            .unzip();

        let matrix_rule = quadrature_rule(if degree == 1 { 2 } else { 4 })?;
        let field_rule = quadrature_rule(FIELD_QUADRATURE_ORDER)?;
        let field_basis = field_rule
            .points
            .iter()
            .map(|lam| {
                let mut b = [0.0; MAX_LOCAL];
                basis_values(degree, lam, &mut b);
                b
            })
            .collect();

        let mut space = Self {
            mesh,
            degree,
            nloc,
            nodes,
            node_dof,
            free_nodes,
            boundary_nodes,
            elem_nodes,
            grad_lam,
            volumes,
            matrix_rule,
            field_rule,
            field_basis,
            pattern: CsrMatrix::identity(0),
            scatter: Vec::new(),
        };
        space.build_pattern();
        Ok(space)
    }

    fn build_pattern(&mut self) {
        let n = self.n_dofs();
        let mut triplets = Vec::with_capacity(self.n_elements() * self.nloc * self.nloc);
        for t in 0..self.n_elements() {
            let dofs = self.element_dofs(t);
            for &r in &dofs {
                if r == BOUNDARY {
                    continue;
                }
                for &c in &dofs {
                    if c != BOUNDARY {
                        triplets.push((r, c, 0.0));
                    }
                }
            }
        }
        let pattern = CsrMatrix::from_triplets(n, n, triplets);
        let mut scatter = Vec::with_capacity(self.n_elements() * self.nloc * self.nloc);
        for t in 0..self.n_elements() {
            let dofs = self.element_dofs(t);
            for &r in &dofs {
                for &c in &dofs {
                    let pos = if r == BOUNDARY || c == BOUNDARY {
                        u32::MAX
                    } else {
                        pattern.position(r, c).expect("pattern covers element couplings") as u32
                    };
                    scatter.push(pos);
                }
            }
        }
        self.pattern = pattern;
        self.scatter = scatter;
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn local_dofs(&self) -> usize {
        self.nloc
    }

    pub fn n_dofs(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.volumes.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    /// Free-dof index of a node, or [`BOUNDARY`].
    pub fn node_dof(&self, node: usize) -> usize {
        self.node_dof[node]
    }

    pub fn dof_coords(&self) -> Vec<Point> {
        self.free_nodes.iter().map(|&i| self.nodes[i]).collect()
    }

    pub fn element_nodes(&self, t: usize) -> &[usize] {
        &self.elem_nodes[t * self.nloc..(t + 1) * self.nloc]
    }

    /// Local-to-global dof map with boundary nodes mapped to [`BOUNDARY`].
    pub fn element_dofs(&self, t: usize) -> Vec<usize> {
        self.element_nodes(t).iter().map(|&n| self.node_dof[n]).collect()
    }

    pub fn volume(&self, t: usize) -> f64 {
        self.volumes[t]
    }

    pub(crate) fn grad_lambda(&self, t: usize) -> &[Point; 4] {
        &self.grad_lam[t]
    }

    pub fn field_rule(&self) -> &Quadrature {
        &self.field_rule
    }

    /// Quadrature points per element of the field rule.
    pub fn qp_per_element(&self) -> usize {
        self.field_rule.len()
    }

    pub fn n_qp(&self) -> usize {
        self.n_elements() * self.qp_per_element()
    }

    /// Physical quadrature weights of all field points, element-major.
    pub fn qp_weights(&self) -> Vec<f64> {
        let nq = self.qp_per_element();
        let mut w = Vec::with_capacity(self.n_qp());
        for t in 0..self.n_elements() {
            for q in 0..nq {
                w.push(self.field_rule.weights[q] * self.volumes[t]);
            }
        }
        w
    }

    /// Physical coordinates of all field points, element-major.
    pub fn qp_points(&self) -> Vec<Point> {
        let mut pts = Vec::with_capacity(self.n_qp());
        for t in 0..self.n_elements() {
            let v = self.mesh.tet_vertices(t);
            for lam in &self.field_rule.points {
                let mut x = [0.0; 3];
                for (k, vk) in v.iter().enumerate() {
                    for c in 0..3 {
                        x[c] += lam[k] * vk[c];
                    }
                }
                pts.push(x);
            }
        }
        pts
    }

    /// Same identity (box, resolution, degree) as `other`.
    pub fn same_as(&self, other: &FeSpace) -> bool {
        self.degree == other.degree
            && self.mesh.cells_per_axis() == other.mesh.cells_per_axis()
            && self.mesh.half_width() == other.mesh.half_width()
    }

    pub(crate) fn field_basis(&self) -> &[[f64; MAX_LOCAL]] {
        &self.field_basis
    }

    pub(crate) fn matrix_rule(&self) -> &Quadrature {
        &self.matrix_rule
    }

    pub(crate) fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    pub(crate) fn scatter(&self, t: usize) -> &[u32] {
        let s = self.nloc * self.nloc;
        &self.scatter[t * s..(t + 1) * s]
    }

    /// Values of a free-dof coefficient vector at every field point.
    pub fn values_at_qp(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n_dofs());
        let nq = self.qp_per_element();
        let mut out = vec![0.0; self.n_qp()];
        out.par_chunks_mut(nq).enumerate().for_each(|(t, chunk)| {
            let local = self.local_coeffs(t, coeffs);
            for (q, v) in chunk.iter_mut().enumerate() {
                let b = &self.field_basis[q];
                *v = (0..self.nloc).map(|a| local[a] * b[a]).sum();
            }
        });
        out
    }

    /// Values at every field point of a function given on all nodes.
    pub fn node_values_at_qp(&self, node_values: &[f64]) -> Vec<f64> {
        assert_eq!(node_values.len(), self.n_nodes());
        let nq = self.qp_per_element();
        let mut out = vec![0.0; self.n_qp()];
        out.par_chunks_mut(nq).enumerate().for_each(|(t, chunk)| {
            let nodes = self.element_nodes(t);
            for (q, v) in chunk.iter_mut().enumerate() {
                let b = &self.field_basis[q];
                *v = (0..self.nloc).map(|a| node_values[nodes[a]] * b[a]).sum();
            }
        });
        out
    }

    pub(crate) fn local_coeffs(&self, t: usize, coeffs: &[f64]) -> [f64; MAX_LOCAL] {
        let mut local = [0.0; MAX_LOCAL];
        for (a, &n) in self.element_nodes(t).iter().enumerate() {
            let d = self.node_dof[n];
            if d != BOUNDARY {
                local[a] = coeffs[d];
            }
        }
        local
    }

    /// Value and gradient at an arbitrary point of the box.
    pub fn evaluate(&self, coeffs: &[f64], x: &Point) -> (f64, Point) {
        let t = self.mesh.locate(x);
        let local = self.local_coeffs(t, coeffs);
        self.evaluate_local(t, &local, x)
    }

    /// Value and gradient at `x` of a function given on all nodes.
    pub fn evaluate_nodal(&self, node_values: &[f64], x: &Point) -> (f64, Point) {
        assert_eq!(node_values.len(), self.n_nodes());
        let t = self.mesh.locate(x);
        let mut local = [0.0; MAX_LOCAL];
        for (a, &n) in self.element_nodes(t).iter().enumerate() {
            local[a] = node_values[n];
        }
        self.evaluate_local(t, &local, x)
    }

    /// Free-dof coefficients scattered into a vector over all nodes.
    pub fn to_nodal(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for (d, &n) in self.free_nodes.iter().enumerate() {
            out[n] = coeffs[d];
        }
        out
    }

    pub(crate) fn evaluate_local(&self, t: usize, local: &[f64; MAX_LOCAL], x: &Point) -> (f64, Point) {
        let v0 = self.mesh.vertices()[self.mesh.tets()[t][0]];
        let g = &self.grad_lam[t];
        let lam = barycentric_from_gradients(&v0, g, x);
        let mut b = [0.0; MAX_LOCAL];
        let mut gb = [[0.0; 3]; MAX_LOCAL];
        basis_values(self.degree, &lam, &mut b);
        basis_gradients(self.degree, &lam, g, &mut gb);
        let mut val = 0.0;
        let mut grad = [0.0; 3];
        for a in 0..self.nloc {
            val += local[a] * b[a];
            for c in 0..3 {
                grad[c] += local[a] * gb[a][c];
            }
        }
        (val, grad)
    }

    /// Nodal interpolant of `f` at the free dofs.
    pub fn interpolate<F: Fn(&Point) -> f64>(&self, f: F) -> Result<Vec<f64>> {
        self.free_nodes
            .iter()
            .map(|&n| {
                let v = f(&self.nodes[n]);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::InvalidInput(format!(
                        "non-finite value at node {:?}",
                        self.nodes[n]
                    )))
                }
            })
            .collect()
    }
}
