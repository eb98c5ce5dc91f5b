//! Conforming P2 Lagrange space on a [`Mesh`].
//!
//! DOFs are the mesh vertices (indices `0..V`) followed by the edge midpoints
//! (index `V + e`). Within an element the local order is the three vertices,
//! then the midpoints of the edges opposite vertex 0, 1 and 2.

use std::ops::{Deref, DerefMut};

use crate::mesh::{EdgeClass, Mesh};
use crate::par;
use crate::{Error, Result};

/// Affine data of one triangle: vertices, area and the (constant) gradients of
/// the barycentric coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub points: [[f64; 2]; 3],
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(points: [[f64; 2]; 3]) -> Self {
        let [a, b, c] = points;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let grad_lambda = [
            [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
        ];
        ElementGeometry { points, area: 0.5 * det, grad_lambda }
    }

    pub fn map(&self, l: [f64; 3]) -> [f64; 2] {
        let [a, b, c] = self.points;
        [
            l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
            l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
        ]
    }

    /// Values of the six local basis functions at barycentric point `l`.
    pub fn values(&self, l: [f64; 3]) -> [f64; 6] {
        let mut v = [0.0; 6];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            v[i] = l[i] * (2.0 * l[i] - 1.0);
            v[3 + i] = 4.0 * l[j] * l[k];
        }
        v
    }

    /// Physical gradients of the six local basis functions at `l`.
    pub fn gradients(&self, l: [f64; 3]) -> [[f64; 2]; 6] {
        let g = &self.grad_lambda;
        let mut out = [[0.0; 2]; 6];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let s = 4.0 * l[i] - 1.0;
            out[i] = [s * g[i][0], s * g[i][1]];
            out[3 + i] = [
                4.0 * (l[j] * g[k][0] + l[k] * g[j][0]),
                4.0 * (l[j] * g[k][1] + l[k] * g[j][1]),
            ];
        }
        out
    }

    /// Laplacians of the six local basis functions (constant on the element).
    pub fn laplacians(&self) -> [f64; 6] {
        let g = &self.grad_lambda;
        let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
        let mut out = [0.0; 6];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            out[i] = 4.0 * dot(g[i], g[i]);
            out[3 + i] = 8.0 * dot(g[j], g[k]);
        }
        out
    }
}

/// Reference-element basis evaluation: values, gradients with respect to
/// `(x̂, ŷ)` and second derivatives `[∂x̂x̂, ∂x̂ŷ, ∂ŷŷ]`.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceBasis {
    pub values: [f64; 6],
    pub gradients: [[f64; 2]; 6],
    pub hessians: [[f64; 3]; 6],
}

/// P2 shape functions on the reference triangle at barycentric point `l`.
pub fn eval_basis(l: [f64; 3]) -> ReferenceBasis {
    let reference = ElementGeometry::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    let g = reference.grad_lambda;
    let mut hessians = [[0.0; 3]; 6];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        hessians[i] = [
            4.0 * g[i][0] * g[i][0],
            4.0 * g[i][0] * g[i][1],
            4.0 * g[i][1] * g[i][1],
        ];
        hessians[3 + i] = [
            8.0 * g[j][0] * g[k][0],
            4.0 * (g[j][0] * g[k][1] + g[k][0] * g[j][1]),
            8.0 * g[j][1] * g[k][1],
        ];
    }
    ReferenceBasis { values: reference.values(l), gradients: reference.gradients(l), hessians }
}

/// Real value per DOF.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalVector(Vec<f64>);

impl NodalVector {
    pub fn zeros(n: usize) -> Self {
        NodalVector(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(&self.0).sqrt()
    }
}

impl From<Vec<f64>> for NodalVector {
    fn from(v: Vec<f64>) -> Self {
        NodalVector(v)
    }
}

impl Deref for NodalVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for NodalVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Piecewise polynomial field in the discontinuous space: `per_element`
/// coefficients per triangle (6 for P2 in the local basis order, 1 for
/// elementwise constants).
#[derive(Debug, Clone, PartialEq)]
pub struct ElementwiseField {
    pub per_element: usize,
    pub coeffs: Vec<f64>,
}

impl ElementwiseField {
    pub fn zeros(num_elements: usize, per_element: usize) -> Self {
        ElementwiseField { per_element, coeffs: vec![0.0; num_elements * per_element] }
    }

    pub fn num_elements(&self) -> usize {
        self.coeffs.len() / self.per_element
    }

    pub fn element(&self, k: usize) -> &[f64] {
        &self.coeffs[k * self.per_element..(k + 1) * self.per_element]
    }

    pub fn element_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.coeffs[k * self.per_element..(k + 1) * self.per_element]
    }

    /// Value on element `k` at barycentric point `l`.
    pub fn value_at(&self, geom: &ElementGeometry, k: usize, l: [f64; 3]) -> f64 {
        let c = self.element(k);
        match self.per_element {
            1 => c[0],
            6 => geom.values(l).iter().zip(c).map(|(a, b)| a * b).sum(),
            n => panic!("unsupported elementwise field with {n} coefficients"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FESpace {
    mesh: Mesh,
    pub dof_coords: Vec<[f64; 2]>,
    pub element_dofs: Vec<[usize; 6]>,
    pub boundary_dofs: Vec<usize>,
    is_boundary: Vec<bool>,
    geometry: Vec<ElementGeometry>,
}

/// P2 space on `mesh`; continuity comes from shared DOF indices.
pub fn build_p2_space(mesh: Mesh) -> FESpace {
    let nv = mesh.num_vertices();
    let mut dof_coords = mesh.vertices.clone();
    dof_coords.extend(mesh.edges.iter().map(|e| e.midpoint(&mesh)));
    let element_dofs = mesh
        .triangles
        .iter()
        .zip(&mesh.tri_edges)
        .map(|(t, te)| [t[0], t[1], t[2], nv + te[0], nv + te[1], nv + te[2]])
        .collect();
    let mut is_boundary = vec![false; dof_coords.len()];
    for (i, e) in mesh.edges.iter().enumerate() {
        if e.class == EdgeClass::Boundary {
            is_boundary[e.vertices[0]] = true;
            is_boundary[e.vertices[1]] = true;
            is_boundary[nv + i] = true;
        }
    }
    let boundary_dofs = (0..dof_coords.len()).filter(|&i| is_boundary[i]).collect();
    let geometry = (0..mesh.num_triangles())
        .map(|k| ElementGeometry::new(mesh.triangle_points(k)))
        .collect();
    FESpace { mesh, dof_coords, element_dofs, boundary_dofs, is_boundary, geometry }
}

impl FESpace {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn num_dofs(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn num_elements(&self) -> usize {
        self.element_dofs.len()
    }

    pub fn is_boundary_dof(&self, i: usize) -> bool {
        self.is_boundary[i]
    }

    pub fn geometry(&self, k: usize) -> &ElementGeometry {
        &self.geometry[k]
    }

    /// The three DOFs on edge `e` in the order (first vertex, second vertex, midpoint).
    pub fn edge_dofs(&self, e: usize) -> [usize; 3] {
        let edge = &self.mesh.edges[e];
        [edge.vertices[0], edge.vertices[1], self.mesh.num_vertices() + e]
    }

    /// Barycentric coordinates, relative to element `k`, of the point at
    /// parameter `t` along edge `e` (which must belong to `k`).
    pub fn edge_point_in_element(&self, k: usize, e: usize, t: f64) -> [f64; 3] {
        let edge = &self.mesh.edges[e];
        let tri = self.mesh.triangles[k];
        let mut l = [0.0; 3];
        for (i, &v) in tri.iter().enumerate() {
            if v == edge.vertices[0] {
                l[i] = 1.0 - t;
            } else if v == edge.vertices[1] {
                l[i] = t;
            }
        }
        l
    }

    pub fn local_values(&self, k: usize, u: &[f64]) -> [f64; 6] {
        let d = &self.element_dofs[k];
        [u[d[0]], u[d[1]], u[d[2]], u[d[3]], u[d[4]], u[d[5]]]
    }

    /// `Σ U_z Φ_z` at point `p`.
    pub fn evaluate(&self, u: &[f64], p: [f64; 2]) -> Result<f64> {
        let (k, l) = self.mesh.locate(p)?;
        let vals = self.geometry[k].values(l);
        Ok(dot6(&vals, &self.local_values(k, u)))
    }

    /// Gradient of the FE function at `p` (taken from the containing element).
    pub fn gradient(&self, u: &[f64], p: [f64; 2]) -> Result<[f64; 2]> {
        let (k, l) = self.mesh.locate(p)?;
        Ok(self.element_gradient(k, u, l))
    }

    /// Elementwise Laplacian at `p`; constant on each P2 element.
    pub fn laplacian(&self, u: &[f64], p: [f64; 2]) -> Result<f64> {
        let (k, _) = self.mesh.locate(p)?;
        Ok(self.element_laplacian(k, u))
    }

    pub fn element_gradient(&self, k: usize, u: &[f64], l: [f64; 3]) -> [f64; 2] {
        let g = self.geometry[k].gradients(l);
        let uv = self.local_values(k, u);
        let mut out = [0.0; 2];
        for i in 0..6 {
            out[0] += uv[i] * g[i][0];
            out[1] += uv[i] * g[i][1];
        }
        out
    }

    pub fn element_laplacian(&self, k: usize, u: &[f64]) -> f64 {
        dot6(&self.geometry[k].laplacians(), &self.local_values(k, u))
    }

    pub fn element_value(&self, k: usize, u: &[f64], l: [f64; 3]) -> f64 {
        dot6(&self.geometry[k].values(l), &self.local_values(k, u))
    }
}

pub(crate) fn dot6(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nodal values `w(z)` at every DOF node `z`.
pub fn interpolate(space: &FESpace, w: impl Fn([f64; 2]) -> f64 + Sync + Send) -> Result<NodalVector> {
    let values = par::map_range(space.num_dofs(), |i| w(space.dof_coords[i]));
    if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        let [x, y] = space.dof_coords[node];
        return Err(Error::NonFiniteNode { node, x, y, value });
    }
    Ok(NodalVector(values))
}
