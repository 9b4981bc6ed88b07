//! Structured right-triangle meshes of a rectangle with P1 element geometry.
//!
//! Nodes are numbered row-major (`j * (nx + 1) + i`), and every grid cell is
//! split along its bottom-left to top-right diagonal into two
//! counter-clockwise triangles.

use crate::error::{invalid, Result};

/// Axis-aligned rectangle `(x_min, x_max) x (y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x_min: 0.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: 1.0,
    };

    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

impl Default for Rect {
    fn default() -> Self {
        Self::UNIT
    }
}

pub type Point = [f64; 2];

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub domain: Rect,
    pub nodes: Vec<Point>,
    /// Counter-clockwise node triples.
    pub elements: Vec<[usize; 3]>,
    /// Sorted indices of the nodes on the boundary.
    pub boundary_nodes: Vec<usize>,
    pub element_area: Vec<f64>,
    pub element_grads: Vec<[Point; 3]>,
    is_boundary: Vec<bool>,
}

/// Builds the uniform triangulation with `2 * nx * ny` elements.
pub fn build_rect_mesh(nx: usize, ny: usize, domain: Rect) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(invalid(format!("subdivisions must be positive, got {nx}x{ny}")));
    }
    let finite = [domain.x_min, domain.x_max, domain.y_min, domain.y_max]
        .iter()
        .all(|v| v.is_finite());
    if !finite || domain.width() <= 0.0 || domain.height() <= 0.0 {
        return Err(invalid(format!("degenerate or inverted rectangle {domain:?}")));
    }

    let hx = domain.width() / nx as f64;
    let hy = domain.height() / ny as f64;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut is_boundary = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        // pin the last row/column to the exact rectangle edge
        let y = if j == ny { domain.y_max } else { domain.y_min + j as f64 * hy };
        for i in 0..=nx {
            let x = if i == nx { domain.x_max } else { domain.x_min + i as f64 * hx };
            nodes.push([x, y]);
            is_boundary.push(i == 0 || j == 0 || i == nx || j == ny);
        }
    }

    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }

    let mut element_area = Vec::with_capacity(elements.len());
    let mut element_grads = Vec::with_capacity(elements.len());
    for tri in &elements {
        let (area, grads) = p1_geometry(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
        element_area.push(area);
        element_grads.push(grads);
    }

    let boundary_nodes = (0..nodes.len()).filter(|&n| is_boundary[n]).collect();
    Ok(Mesh {
        nx,
        ny,
        domain,
        nodes,
        elements,
        boundary_nodes,
        element_area,
        element_grads,
        is_boundary,
    })
}

/// Area and constant basis gradients of the P1 triangle `(p0, p1, p2)`.
pub fn p1_geometry(p0: Point, p1: Point, p2: Point) -> (f64, [Point; 3]) {
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let inv = 1.0 / det;
    // grad N_i = rot90(p_{i+2} - p_{i+1}) / det
    let g = |a: Point, b: Point| [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv];
    (0.5 * det.abs(), [g(p1, p2), g(p2, p0), g(p0, p1)])
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.is_boundary[node]
    }

    pub fn total_area(&self) -> f64 {
        self.element_area.iter().sum()
    }

    /// Smallest grid spacing.
    pub fn h(&self) -> f64 {
        (self.domain.width() / self.nx as f64).min(self.domain.height() / self.ny as f64)
    }

    pub fn element_basis_gradients(&self, e: usize) -> Result<[Point; 3]> {
        self.element_grads
            .get(e)
            .copied()
            .ok_or_else(|| invalid(format!("element {e} out of range ({})", self.num_elements())))
    }

    /// Constant gradient on element `e` of the P1 interpolant of `values`.
    #[inline]
    pub fn gradient(&self, e: usize, values: &[f64]) -> Point {
        let tri = &self.elements[e];
        let g = &self.element_grads[e];
        let mut out = [0.0; 2];
        for k in 0..3 {
            let v = values[tri[k]];
            out[0] += g[k][0] * v;
            out[1] += g[k][1] * v;
        }
        out
    }

    /// Nodal interpolant of a function of position.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|p| f(p[0], p[1])).collect()
    }

    /// Area-weighted average of element values at each node.
    pub fn element_to_nodes(&self, element_values: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.num_nodes()];
        let mut weight = vec![0.0; self.num_nodes()];
        for (e, tri) in self.elements.iter().enumerate() {
            let a = self.element_area[e];
            for &n in tri {
                acc[n] += a * element_values[e];
                weight[n] += a;
            }
        }
        acc.iter().zip(&weight).map(|(s, w)| s / w).collect()
    }
}
