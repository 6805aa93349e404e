//! Uniform Kuhn tetrahedral meshes of the box `[-L, L]^3`.
//!
//! Every cube of the `n x n x n` lattice is split into six tetrahedra, one per
//! permutation of the coordinate axes. The triangulation is the Freudenthal
//! arrangement of the hyperplanes `x_a = k H` and `x_a - x_b = k H`, so the
//! mesh at level `2n` refines the mesh at level `n` and point location is a
//! sort of the fractional cell coordinates.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// Axis permutations, in the order used to number the six tets of a cube.
pub(crate) const KUHN_PERMUTATIONS: [[usize; 3]; 6] =
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

#[derive(Debug, Clone)]
pub struct Mesh {
    half_width: f64,
    cells: usize,
    level: u32,
    vertices: Vec<Point>,
    tets: Vec<[usize; 4]>,
    boundary: Vec<bool>,
}

impl Mesh {
    /// Uniform Kuhn mesh with `n` cells per axis on `[-half_width, half_width]^3`.
    pub fn uniform(half_width: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("mesh needs at least one cell per axis".into()));
        }
        if !half_width.is_finite() || half_width <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "box half-width must be positive and finite, got {half_width}"
            )));
        }
        let np = n + 1;
        let step = 2.0 * half_width / n as f64;
        let tol = 1e-10 * half_width;

        // (z, y, x) lexicographic: x index varies fastest
        let mut vertices = Vec::with_capacity(np * np * np);
        let mut boundary = Vec::with_capacity(np * np * np);
        for k in 0..np {
            for j in 0..np {
                for i in 0..np {
                    let p = [
                        lattice_coord(i, n, half_width, step),
                        lattice_coord(j, n, half_width, step),
                        lattice_coord(k, n, half_width, step),
                    ];
                    boundary.push(p.iter().any(|c| (c.abs() - half_width).abs() <= tol));
                    vertices.push(p);
                }
            }
        }

        let vid = |i: usize, j: usize, k: usize| i + np * (j + np * k);
        let mut tets = Vec::with_capacity(6 * n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    for perm in KUHN_PERMUTATIONS.iter() {
                        let mut idx = [i, j, k];
                        let mut t = [0usize; 4];
                        t[0] = vid(idx[0], idx[1], idx[2]);
                        for (s, &axis) in perm.iter().enumerate() {
                            idx[axis] += 1;
                            t[s + 1] = vid(idx[0], idx[1], idx[2]);
                        }
                        if signed_volume(&vertices, &t) < 0.0 {
                            t.swap(2, 3);
                        }
                        tets.push(t);
                    }
                }
            }
        }

        Ok(Self {
            half_width,
            cells: n,
            level: 0,
            vertices,
            tets,
            boundary,
        })
    }

    /// The next mesh of the family: same box, twice the cells per axis.
    pub fn refine(&self) -> Self {
        let mut fine = Self::uniform(self.half_width, 2 * self.cells).expect("refining a valid mesh cannot fail");
        fine.level = self.level + 1;
        fine
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| self.boundary[v]).collect()
    }

    /// Lattice spacing `2L / n`.
    pub fn cell_size(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }

    /// Mesh size: the largest tet diameter, i.e. the cube diagonal.
    pub fn h(&self) -> f64 {
        self.cell_size() * 3f64.sqrt()
    }

    pub fn tet_vertices(&self, t: usize) -> [Point; 4] {
        let tet = &self.tets[t];
        [
            self.vertices[tet[0]],
            self.vertices[tet[1]],
            self.vertices[tet[2]],
            self.vertices[tet[3]],
        ]
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.vertices, &self.tets[t])
    }

    pub fn tet_diameter(&self, t: usize) -> f64 {
        let p = self.tet_vertices(t);
        let mut d: f64 = 0.0;
        for a in 0..4 {
            for b in a + 1..4 {
                d = d.max(dist(&p[a], &p[b]));
            }
        }
        d
    }

    /// Radius of the inscribed sphere, `3V / total face area`.
    pub fn tet_inradius(&self, t: usize) -> f64 {
        let p = self.tet_vertices(t);
        let faces = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];
        let area: f64 = faces
            .iter()
            .map(|f| {
                let u = sub(&p[f[1]], &p[f[0]]);
                let v = sub(&p[f[2]], &p[f[0]]);
                0.5 * norm(&cross(&u, &v))
            })
            .sum();
        3.0 * self.tet_volume(t) / area
    }

    /// Index of a tet containing `x`. Points outside the box are clamped.
    pub fn locate(&self, x: &Point) -> usize {
        let n = self.cells;
        let step = self.cell_size();
        let mut cell = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let s = (x[a] + self.half_width) / step;
            let c = (s.floor().max(0.0) as usize).min(n - 1);
            cell[a] = c;
            frac[a] = (s - c as f64).clamp(0.0, 1.0);
        }
        // the Kuhn tet for permutation p holds frac[p0] >= frac[p1] >= frac[p2]
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| frac[b].partial_cmp(&frac[a]).unwrap().then(a.cmp(&b)));
        let perm = KUHN_PERMUTATIONS
            .iter()
            .position(|p| *p == order)
            .expect("every axis ordering is a Kuhn permutation");
        let cube = cell[0] + n * (cell[1] + n * cell[2]);
        6 * cube + perm
    }

    /// ASCII legacy VTK unstructured grid (cell type 10).
    pub fn to_vtk(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# vtk DataFile Version 3.0");
        let _ = writeln!(out, "ksfem mesh n={} L={}", self.cells, self.half_width);
        let _ = writeln!(out, "ASCII");
        let _ = writeln!(out, "DATASET UNSTRUCTURED_GRID");
        let _ = writeln!(out, "POINTS {} double", self.vertices.len());
        for p in &self.vertices {
            let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
        }
        let _ = writeln!(out, "CELLS {} {}", self.tets.len(), 5 * self.tets.len());
        for t in &self.tets {
            let _ = writeln!(out, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        let _ = writeln!(out, "CELL_TYPES {}", self.tets.len());
        for _ in &self.tets {
            let _ = writeln!(out, "10");
        }
        out
    }
}

fn lattice_coord(i: usize, n: usize, half_width: f64, step: f64) -> f64 {
    // exact endpoints so boundary detection never depends on rounding
    if i == n {
        half_width
    } else {
        -half_width + step * i as f64
    }
}

pub(crate) fn signed_volume(vertices: &[Point], t: &[usize; 4]) -> f64 {
    let a = sub(&vertices[t[1]], &vertices[t[0]]);
    let b = sub(&vertices[t[2]], &vertices[t[0]]);
    let c = sub(&vertices[t[3]], &vertices[t[0]]);
    dot(&a, &cross(&b, &c)) / 6.0
}

pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}
