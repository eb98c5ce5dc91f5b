//! Structured triangulations of the unit square and the L-shaped domain.
//!
//! Both domains are unions of cells of a uniform square lattice. Every cell is
//! split along its lower-left to upper-right diagonal, so point location is a
//! floor operation followed by one comparison.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::{Error, Result};

/// Tolerance used when deciding whether a point lies in the closed domain.
const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainTag {
    /// `[0, 1]²`
    UnitSquare,
    /// `(-1, 1)²` minus `[0, 1) × (-1, 0]`
    LShape,
}

impl DomainTag {
    pub fn area(self) -> f64 {
        match self {
            DomainTag::UnitSquare => 1.0,
            DomainTag::LShape => 3.0,
        }
    }

    /// Closed-domain membership with tolerance `tol`.
    pub fn contains(self, p: [f64; 2], tol: f64) -> bool {
        let [x, y] = p;
        match self {
            DomainTag::UnitSquare => {
                x >= -tol && x <= 1.0 + tol && y >= -tol && y <= 1.0 + tol
            }
            DomainTag::LShape => {
                let in_box = x >= -1.0 - tol && x <= 1.0 + tol && y >= -1.0 - tol && y <= 1.0 + tol;
                let in_hole = x > tol && y < -tol;
                in_box && !in_hole
            }
        }
    }

    /// Whether `p` lies on `∂Ω` (within `tol`).
    pub fn on_boundary(self, p: [f64; 2], tol: f64) -> bool {
        if !self.contains(p, tol) {
            return false;
        }
        let [x, y] = p;
        match self {
            DomainTag::UnitSquare => {
                x.abs() <= tol || (x - 1.0).abs() <= tol || y.abs() <= tol || (y - 1.0).abs() <= tol
            }
            DomainTag::LShape => {
                let outer = (x + 1.0).abs() <= tol
                    || (x - 1.0).abs() <= tol
                    || (y + 1.0).abs() <= tol
                    || (y - 1.0).abs() <= tol;
                let reentrant = (x.abs() <= tol && y <= tol) || (y.abs() <= tol && x >= -tol);
                outer || reentrant
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainTag::UnitSquare => "unit_square",
            DomainTag::LShape => "lshape",
        }
    }

    /// Bounding box `[xmin, ymin, xmax, ymax]`.
    pub fn bbox(self) -> [f64; 4] {
        match self {
            DomainTag::UnitSquare => [0.0, 0.0, 1.0, 1.0],
            DomainTag::LShape => [-1.0, -1.0, 1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    Interior,
    Boundary,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub length: f64,
    /// Unit normal, outward for `plus`; on interior edges it points into `minus`.
    pub normal: [f64; 2],
    /// Adjacent element with the smaller index.
    pub plus: usize,
    pub minus: Option<usize>,
    pub class: EdgeClass,
}

impl Edge {
    pub fn midpoint(&self, mesh: &Mesh) -> [f64; 2] {
        let a = mesh.vertices[self.vertices[0]];
        let b = mesh.vertices[self.vertices[1]];
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Point at parameter `t ∈ [0, 1]` from `vertices[0]` to `vertices[1]`.
    pub fn point_at(&self, mesh: &Mesh, t: f64) -> [f64; 2] {
        let a = mesh.vertices[self.vertices[0]];
        let b = mesh.vertices[self.vertices[1]];
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }
}

/// Uniform cell lattice backing a structured mesh, used for point location.
#[derive(Debug, Clone)]
struct Lattice {
    origin: [f64; 2],
    spacing: f64,
    nx: usize,
    ny: usize,
    /// For each cell (row-major, `j * nx + i`), the lower and upper triangle.
    cell_tris: Vec<Option<[usize; 2]>>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// `tri_edges[k][i]` is the edge of triangle `k` opposite its local vertex `i`.
    pub tri_edges: Vec<[usize; 3]>,
    pub domain: DomainTag,
    /// Nominal mesh size.
    pub h: f64,
    lattice: Option<Lattice>,
}

/// Uniform `n × n` triangulation of the unit square, `2n²` triangles.
pub fn build_unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("subdivisions must be at least 1".into()));
    }
    let s = 1.0 / n as f64;
    lattice_mesh([0.0, 0.0], s, n, n, |_, _| true, DomainTag::UnitSquare, s)
}

/// Uniform triangulation of the L-shaped domain. Level 0 has twelve squares of
/// side 1/2, each cut into 8 triangles (96 in total, nominal `h = 1/2`); every
/// further level quadrisects all triangles.
pub fn build_lshape_mesh(level: u32) -> Result<Mesh> {
    if level > 12 {
        return Err(Error::InvalidArgument(format!("refinement level {level} is too large")));
    }
    let r = 1usize << (level + 2); // lattice cells per unit length
    let s = 1.0 / r as f64;
    let n = 2 * r;
    // Cell (i, j) covers [-1 + i s, -1 + (i+1) s] × [-1 + j s, -1 + (j+1) s];
    // the removed quadrant is i ≥ r, j < r.
    let keep = move |i: usize, j: usize| !(i >= r && j < r);
    let h = 1.0 / (1usize << (level + 1)) as f64;
    lattice_mesh([-1.0, -1.0], s, n, n, keep, DomainTag::LShape, h)
}

fn lattice_mesh(
    origin: [f64; 2],
    spacing: f64,
    nx: usize,
    ny: usize,
    keep: impl Fn(usize, usize) -> bool,
    domain: DomainTag,
    h: f64,
) -> Result<Mesh> {
    // Vertices keyed by integer lattice coordinates; no float comparisons.
    let mut vertex_id: HashMap<(usize, usize), usize> = HashMap::new();
    let mut used = vec![false; (nx + 1) * (ny + 1)];
    for j in 0..ny {
        for i in 0..nx {
            if keep(i, j) {
                for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    used[(j + dj) * (nx + 1) + i + di] = true;
                }
            }
        }
    }
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if used[j * (nx + 1) + i] {
                vertex_id.insert((i, j), vertices.len());
                vertices.push([origin[0] + i as f64 * spacing, origin[1] + j as f64 * spacing]);
            }
        }
    }
    let mut triangles = Vec::new();
    let mut cell_tris = vec![None; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            if !keep(i, j) {
                continue;
            }
            let v00 = vertex_id[&(i, j)];
            let v10 = vertex_id[&(i + 1, j)];
            let v01 = vertex_id[&(i, j + 1)];
            let v11 = vertex_id[&(i + 1, j + 1)];
            let k = triangles.len();
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
            cell_tris[j * nx + i] = Some([k, k + 1]);
        }
    }
    let mut mesh = Mesh::from_triangles(vertices, triangles, domain, h)?;
    mesh.lattice = Some(Lattice { origin, spacing, nx, ny, cell_tris });
    Ok(mesh)
}

impl Mesh {
    /// Build a mesh from raw counter-clockwise triangles, computing edges and
    /// adjacency. Fails on degenerate or clockwise triangles and on edges
    /// shared by more than two triangles.
    pub fn from_triangles(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        domain: DomainTag,
        h: f64,
    ) -> Result<Mesh> {
        let mut edge_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (k, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::Structural(format!("triangle {k} references a missing vertex")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::Structural(format!("triangle {k} has non-positive signed area {area}")));
            }
            let mut te = [0usize; 3];
            for (i, slot) in te.iter_mut().enumerate() {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let key = (a.min(b), a.max(b));
                *slot = match edge_of.get(&key) {
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.minus.is_some() {
                            return Err(Error::Structural(format!(
                                "edge ({}, {}) is shared by more than two triangles",
                                key.0, key.1
                            )));
                        }
                        edge.minus = Some(k);
                        edge.class = EdgeClass::Interior;
                        e
                    }
                    None => {
                        let pa = vertices[a];
                        let pb = vertices[b];
                        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
                        let len = dx.hypot(dy);
                        // (a, b) runs counter-clockwise around k, so (dy, -dx) points out of k.
                        edges.push(Edge {
                            vertices: [a, b],
                            length: len,
                            normal: [dy / len, -dx / len],
                            plus: k,
                            minus: None,
                            class: EdgeClass::Boundary,
                        });
                        edge_of.insert(key, edges.len() - 1);
                        edges.len() - 1
                    }
                };
            }
            tri_edges.push(te);
        }
        Ok(Mesh { vertices, triangles, edges, tri_edges, domain, h, lattice: None })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn triangle_points(&self, k: usize) -> [[f64; 2]; 3] {
        let t = self.triangles[k];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn area(&self, k: usize) -> f64 {
        let [a, b, c] = self.triangle_points(k);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|k| self.area(k)).sum()
    }

    /// Smallest and largest edge length.
    pub fn edge_length_range(&self) -> (f64, f64) {
        self.edges.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), e| {
            (lo.min(e.length), hi.max(e.length))
        })
    }

    /// Local index (0..3) of edge `e` within triangle `k`.
    pub fn local_edge_index(&self, k: usize, e: usize) -> Option<usize> {
        self.tri_edges[k].iter().position(|&x| x == e)
    }

    /// Locate the triangle containing `p`, returning it with the barycentric
    /// coordinates of `p` relative to its vertices.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 3])> {
        if !self.domain.contains(p, GEOM_TOL) || !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::OutsideDomain(p[0], p[1]));
        }
        if let Some(lat) = &self.lattice {
            let fx = (p[0] - lat.origin[0]) / lat.spacing;
            let fy = (p[1] - lat.origin[1]) / lat.spacing;
            let ci = (fx.floor().max(0.0) as usize).min(lat.nx - 1);
            let cj = (fy.floor().max(0.0) as usize).min(lat.ny - 1);
            if let Some(tris) = lat.cell_tris[cj * lat.nx + ci] {
                let lx = fx - ci as f64;
                let ly = fy - cj as f64;
                let k = if lx >= ly { tris[0] } else { tris[1] };
                return Ok((k, self.barycentric(k, p)));
            }
            // Point on the edge of a removed cell: search the neighbourhood.
            let mut best: Option<(usize, [f64; 3], f64)> = None;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let i = ci as i64 + di;
                    let j = cj as i64 + dj;
                    if i < 0 || j < 0 || i >= lat.nx as i64 || j >= lat.ny as i64 {
                        continue;
                    }
                    if let Some(tris) = lat.cell_tris[j as usize * lat.nx + i as usize] {
                        for k in tris {
                            let b = self.barycentric(k, p);
                            let m = b[0].min(b[1]).min(b[2]);
                            if best.map_or(true, |(_, _, bm)| m > bm) {
                                best = Some((k, b, m));
                            }
                        }
                    }
                }
            }
            return match best {
                Some((k, b, m)) if m >= -1e-9 => Ok((k, b)),
                _ => Err(Error::OutsideDomain(p[0], p[1])),
            };
        }
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for k in 0..self.num_triangles() {
            let b = self.barycentric(k, p);
            let m = b[0].min(b[1]).min(b[2]);
            if best.map_or(true, |(_, _, bm)| m > bm) {
                best = Some((k, b, m));
            }
        }
        match best {
            Some((k, b, m)) if m >= -1e-9 => Ok((k, b)),
            _ => Err(Error::OutsideDomain(p[0], p[1])),
        }
    }

    pub fn barycentric(&self, k: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangle_points(k);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Plain-text dump: header `V T E`, then vertices, triangles and edge
    /// records (`v0 v1 plus minus class length nx ny`, `minus = -1` on the
    /// boundary).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.num_vertices(), self.num_triangles(), self.num_edges());
        for v in &self.vertices {
            let _ = writeln!(s, "{:?} {:?}", v[0], v[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        for e in &self.edges {
            let minus = e.minus.map_or(-1, |m| m as i64);
            let class = match e.class {
                EdgeClass::Interior => 'I',
                EdgeClass::Boundary => 'B',
            };
            let _ = writeln!(
                s,
                "{} {} {} {} {} {:?} {:?} {:?}",
                e.vertices[0], e.vertices[1], e.plus, minus, class, e.length, e.normal[0], e.normal[1]
            );
        }
        s
    }
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Partition the edges into interior and boundary index lists. Every boundary
/// edge must lie on `∂Ω`; a boundary edge inside the domain means the mesh has
/// a hanging node.
pub fn classify_edges(mesh: &Mesh) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for (i, e) in mesh.edges.iter().enumerate() {
        match e.class {
            EdgeClass::Interior => interior.push(i),
            EdgeClass::Boundary => {
                let a = mesh.vertices[e.vertices[0]];
                let b = mesh.vertices[e.vertices[1]];
                let on = [a, b, e.midpoint(mesh)]
                    .iter()
                    .all(|&p| mesh.domain.on_boundary(p, 1e-12));
                if !on {
                    return Err(Error::Structural(format!(
                        "edge {i} has a single neighbour but does not lie on the boundary (hanging node?)"
                    )));
                }
                boundary.push(i);
            }
        }
    }
    Ok((interior, boundary))
}
