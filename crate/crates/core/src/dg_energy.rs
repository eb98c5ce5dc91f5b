//! The interior-penalty least-squares energy
//!
//! ```text
//! E(U) = Σ_K ∫_K |ΔU + F|²
//!      - 2 Σ_{e interior} ∫_e {ΔU + F} ⟦∇U·n⟧
//!      + α Σ_{e interior} (1/h_e) ∫_e |⟦∇U⟧|²
//!      + α Σ_{e boundary} (1/h_e) ∫_e |U - G|²
//! ```
//!
//! for a P2 function `U` with nodal source `F = I f` and nodal trace `G = I g`.
//! `E` is quadratic in the nodal values, so it is assembled once as
//! `UᵀAU + bᵀU + c`. Only the volume integral uses the configurable rule;
//! edge integrals use 3-point Gauss and are exact for P2 data.

use std::fmt;
use std::sync::Arc;

use crate::fe_space::{dot6, FESpace, NodalVector};
use crate::mesh::{DomainTag, EdgeClass};
use crate::par;
use crate::quadrature::{edge_rule, EdgeRule, TriangleRule};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

pub type ScalarField = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Poisson problem `-Δu = f` in `Ω`, `u = g` on `∂Ω`.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub f: ScalarField,
    pub g: ScalarField,
    pub exact_u: Option<ScalarField>,
    pub domain: DomainTag,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("has_exact_u", &self.exact_u.is_some())
            .finish()
    }
}

impl ProblemSpec {
    /// Nodal values of `f`. A node where `f` is singular (the re-entrant
    /// corner of the L-shape) gets the mean of `f` over its element patch,
    /// computed with the precision-6 rule whose nodes are all interior.
    pub fn source_nodal(&self, space: &FESpace) -> Result<NodalVector> {
        let f = &self.f;
        let mut values: Vec<f64> = par::map_range(space.num_dofs(), |i| f(space.dof_coords[i]));
        let singular: Vec<usize> = (0..values.len()).filter(|&i| !values[i].is_finite()).collect();
        if singular.is_empty() {
            return Ok(values.into());
        }
        let rule = crate::quadrature::triangle_rule(6)?;
        for node in singular {
            let mut integral = 0.0;
            let mut area = 0.0;
            for (k, dofs) in space.element_dofs.iter().enumerate() {
                if dofs.contains(&node) {
                    integral += crate::quadrature::integrate_element(&rule, space.mesh(), k, |p| f(p));
                    area += space.mesh().area(k);
                }
            }
            let mean = integral / area;
            if !mean.is_finite() {
                let [x, y] = space.dof_coords[node];
                return Err(Error::NonFiniteNode { node, x, y, value: mean });
            }
            values[node] = mean;
        }
        Ok(values.into())
    }

    /// Nodal values of `g` on boundary DOFs, zero elsewhere.
    pub fn trace_nodal(&self, space: &FESpace) -> Result<NodalVector> {
        let g = &self.g;
        let values: Vec<f64> = par::map_range(space.num_dofs(), |i| {
            if space.is_boundary_dof(i) {
                g(space.dof_coords[i])
            } else {
                0.0
            }
        });
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            let [x, y] = space.dof_coords[node];
            return Err(Error::NonFiniteNode { node, x, y, value: values[node] });
        }
        Ok(values.into())
    }
}

/// Which terms of the energy to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyTerms {
    pub volume: bool,
    /// Consistency term and interior gradient-jump penalty.
    pub jumps: bool,
    pub boundary: bool,
}

impl EnergyTerms {
    pub const FULL: EnergyTerms = EnergyTerms { volume: true, jumps: true, boundary: true };
    pub const NO_JUMPS: EnergyTerms = EnergyTerms { volume: true, jumps: false, boundary: true };
    pub const BOUNDARY_ONLY: EnergyTerms = EnergyTerms { volume: false, jumps: false, boundary: true };
}

/// `E(U) = UᵀAU + bᵀU + c`.
#[derive(Debug, Clone)]
pub struct QuadraticEnergyForm {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub c: f64,
    pub alpha: f64,
    pub terms: EnergyTerms,
    pub volume_precision: usize,
    pub num_elements: usize,
    pub f_nodal: NodalVector,
    pub g_nodal: NodalVector,
}

impl QuadraticEnergyForm {
    pub fn num_dofs(&self) -> usize {
        self.b.len()
    }

    pub fn include_jump_terms(&self) -> bool {
        self.terms.jumps
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.value_and_gradient(u).0
    }

    pub fn gradient(&self, u: &[f64]) -> NodalVector {
        self.value_and_gradient(u).1
    }

    /// Value and `2AU + b` from a single product `AU`.
    pub fn value_and_gradient(&self, u: &[f64]) -> (f64, NodalVector) {
        assert_eq!(u.len(), self.num_dofs(), "nodal vector length mismatch");
        let au = self.a.matvec(u);
        let mut value = self.c;
        let mut grad = vec![0.0; u.len()];
        for i in 0..u.len() {
            value += u[i] * (au[i] + self.b[i]);
            grad[i] = 2.0 * au[i] + self.b[i];
        }
        (value, grad.into())
    }

    /// Restriction to the DOF subset `keep`, valid when every other DOF has
    /// no coupling (e.g. a boundary-only form restricted to boundary DOFs).
    pub fn restrict(&self, keep: &[usize]) -> QuadraticEnergyForm {
        QuadraticEnergyForm {
            a: self.a.principal_submatrix(keep),
            b: keep.iter().map(|&i| self.b[i]).collect(),
            c: self.c,
            alpha: self.alpha,
            terms: self.terms,
            volume_precision: self.volume_precision,
            num_elements: self.num_elements,
            f_nodal: keep.iter().map(|&i| self.f_nodal[i]).collect::<Vec<_>>().into(),
            g_nodal: keep.iter().map(|&i| self.g_nodal[i]).collect::<Vec<_>>().into(),
        }
    }
}

pub fn energy_value(form: &QuadraticEnergyForm, u: &[f64]) -> f64 {
    form.value(u)
}

pub fn energy_gradient(form: &QuadraticEnergyForm, u: &[f64]) -> NodalVector {
    form.gradient(u)
}

/// Local contribution: `dofs`, dense `a` (row-major), `b` and `c`.
struct Local {
    dofs: Vec<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
}

impl Local {
    fn new(dofs: Vec<usize>) -> Self {
        let n = dofs.len();
        Local { dofs, a: vec![0.0; n * n], b: vec![0.0; n], c: 0.0 }
    }

    /// Add `w (vᵀU + s)²`.
    fn add_square(&mut self, w: f64, v: &[f64], s: f64) {
        let n = self.dofs.len();
        for i in 0..n {
            for j in 0..n {
                self.a[i * n + j] += w * v[i] * v[j];
            }
            self.b[i] += 2.0 * w * s * v[i];
        }
        self.c += w * s * s;
    }

    /// Add `w (pᵀU + s)(qᵀU)`, symmetrised.
    fn add_product(&mut self, w: f64, p: &[f64], s: f64, q: &[f64]) {
        let n = self.dofs.len();
        for i in 0..n {
            for j in 0..n {
                self.a[i * n + j] += 0.5 * w * (p[i] * q[j] + q[i] * p[j]);
            }
            self.b[i] += w * s * q[i];
        }
    }
}

fn gauss3() -> EdgeRule {
    edge_rule(3).expect("3-point rule exists")
}

/// 1-D quadratic Lagrange basis on an edge: (first vertex, second vertex, midpoint).
fn edge_basis(t: f64) -> [f64; 3] {
    [(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)]
}

/// Assemble the energy with `include_jump_terms` selecting the full energy or
/// the variant with only the volume and boundary terms.
pub fn assemble_energy_form(
    space: &FESpace,
    volume_rule: &TriangleRule,
    alpha: f64,
    include_jump_terms: bool,
    f_nodal: &NodalVector,
    g_nodal: &NodalVector,
) -> Result<QuadraticEnergyForm> {
    let terms = if include_jump_terms { EnergyTerms::FULL } else { EnergyTerms::NO_JUMPS };
    assemble_terms(space, volume_rule, alpha, terms, f_nodal, g_nodal)
}

pub fn assemble_terms(
    space: &FESpace,
    volume_rule: &TriangleRule,
    alpha: f64,
    terms: EnergyTerms,
    f_nodal: &NodalVector,
    g_nodal: &NodalVector,
) -> Result<QuadraticEnergyForm> {
    let n = space.num_dofs();
    if f_nodal.len() != n || g_nodal.len() != n {
        return Err(Error::Structural(format!(
            "nodal data of length {}/{} on a space with {n} DOFs",
            f_nodal.len(),
            g_nodal.len()
        )));
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("penalty parameter must be non-negative, got {alpha}")));
    }
    let mesh = space.mesh();
    let gauss = gauss3();

    let volume: Vec<Local> = if terms.volume {
        par::map_range(space.num_elements(), |k| {
            let geom = space.geometry(k);
            let lap = geom.laplacians();
            let fl = space.local_values(k, f_nodal);
            let mut local = Local::new(space.element_dofs[k].to_vec());
            for (l, w) in volume_rule.points.iter().zip(&volume_rule.weights) {
                let s = dot6(&geom.values(*l), &fl);
                local.add_square(w * 2.0 * geom.area, &lap, s);
            }
            local
        })
    } else {
        Vec::new()
    };

    let edges: Vec<Option<Local>> = par::map_range(mesh.num_edges(), |e| {
        let edge = &mesh.edges[e];
        match (edge.class, edge.minus) {
            (EdgeClass::Interior, Some(minus)) if terms.jumps => {
                let plus = edge.plus;
                let (gp, gm) = (space.geometry(plus), space.geometry(minus));
                let (lap_p, lap_m) = (gp.laplacians(), gm.laplacians());
                let fl = space.local_values(plus, f_nodal);
                let mut dofs = space.element_dofs[plus].to_vec();
                dofs.extend_from_slice(&space.element_dofs[minus]);
                let mut local = Local::new(dofs);
                let nrm = edge.normal;
                for (t, w) in gauss.points.iter().zip(&gauss.weights) {
                    let wt = w * edge.length;
                    let lp = space.edge_point_in_element(plus, e, *t);
                    let lm = space.edge_point_in_element(minus, e, *t);
                    let (dp, dm) = (gp.gradients(lp), gm.gradients(lm));
                    let s = dot6(&gp.values(lp), &fl);
                    let mut avg = [0.0; 12];
                    let mut jn = [0.0; 12];
                    let mut jx = [0.0; 12];
                    let mut jy = [0.0; 12];
                    for i in 0..6 {
                        avg[i] = 0.5 * lap_p[i];
                        avg[6 + i] = 0.5 * lap_m[i];
                        jx[i] = dp[i][0];
                        jx[6 + i] = -dm[i][0];
                        jy[i] = dp[i][1];
                        jy[6 + i] = -dm[i][1];
                        jn[i] = jx[i] * nrm[0] + jy[i] * nrm[1];
                        jn[6 + i] = jx[6 + i] * nrm[0] + jy[6 + i] * nrm[1];
                    }
                    local.add_product(-2.0 * wt, &avg, s, &jn);
                    let pw = alpha * wt / edge.length;
                    local.add_square(pw, &jx, 0.0);
                    local.add_square(pw, &jy, 0.0);
                }
                Some(local)
            }
            (EdgeClass::Boundary, _) if terms.boundary => {
                let dofs = space.edge_dofs(e);
                let gl = [g_nodal[dofs[0]], g_nodal[dofs[1]], g_nodal[dofs[2]]];
                let mut local = Local::new(dofs.to_vec());
                for (t, w) in gauss.points.iter().zip(&gauss.weights) {
                    let phi = edge_basis(*t);
                    let s = -(phi[0] * gl[0] + phi[1] * gl[1] + phi[2] * gl[2]);
                    local.add_square(alpha * w, &phi, s);
                }
                Some(local)
            }
            _ => None,
        }
    });

    let mut triplets = Vec::new();
    let mut b = vec![0.0; n];
    let mut c = 0.0;
    for local in volume.iter().chain(edges.iter().flatten()) {
        let m = local.dofs.len();
        for i in 0..m {
            for j in 0..m {
                let (r, c) = (local.dofs[i], local.dofs[j]);
                // upper triangle only; mirrored below so A is exactly symmetric
                let v = 0.5 * (local.a[i * m + j] + local.a[j * m + i]);
                if r <= c && v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
            b[local.dofs[i]] += local.b[i];
        }
        c += local.c;
    }
    Ok(QuadraticEnergyForm {
        a: CsrMatrix::from_upper_triplets(n, triplets),
        b,
        c,
        alpha,
        terms,
        volume_precision: volume_rule.precision,
        num_elements: space.num_elements(),
        f_nodal: f_nodal.clone(),
        g_nodal: g_nodal.clone(),
    })
}

/// The four terms of the energy, computed by direct integration of the FE
/// functions. `consistency` includes its factor −2; both penalties are
/// unscaled by `α`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyComponents {
    pub volume: f64,
    pub consistency: f64,
    pub interior_penalty: f64,
    pub boundary_penalty: f64,
}

impl EnergyComponents {
    pub fn total(&self, alpha: f64, include_jump_terms: bool) -> f64 {
        if include_jump_terms {
            self.volume + self.consistency + alpha * (self.interior_penalty + self.boundary_penalty)
        } else {
            self.volume + alpha * self.boundary_penalty
        }
    }
}

pub fn energy_components(
    space: &FESpace,
    u: &[f64],
    f_nodal: &[f64],
    g_nodal: &[f64],
    volume_rule: &TriangleRule,
) -> EnergyComponents {
    let mesh = space.mesh();
    let gauss = gauss3();
    let volume: f64 = par::map_range(space.num_elements(), |k| {
        let geom = space.geometry(k);
        let lap = space.element_laplacian(k, u);
        volume_rule
            .points
            .iter()
            .zip(&volume_rule.weights)
            .map(|(l, w)| {
                let r = lap + space.element_value(k, f_nodal, *l);
                w * 2.0 * geom.area * r * r
            })
            .sum::<f64>()
    })
    .iter()
    .sum();

    let diff: Vec<f64> = u.iter().zip(g_nodal).map(|(a, b)| a - b).collect();
    let per_edge: Vec<[f64; 3]> = par::map_range(mesh.num_edges(), |e| {
        let edge = &mesh.edges[e];
        let mut out = [0.0; 3];
        for (t, w) in gauss.points.iter().zip(&gauss.weights) {
            let wt = w * edge.length;
            let lp = space.edge_point_in_element(edge.plus, e, *t);
            match edge.minus {
                Some(minus) => {
                    let lm = space.edge_point_in_element(minus, e, *t);
                    let gp = space.element_gradient(edge.plus, u, lp);
                    let gm = space.element_gradient(minus, u, lm);
                    let jump = [gp[0] - gm[0], gp[1] - gm[1]];
                    let jn = jump[0] * edge.normal[0] + jump[1] * edge.normal[1];
                    let avg = 0.5 * (space.element_laplacian(edge.plus, u) + space.element_laplacian(minus, u))
                        + space.element_value(edge.plus, f_nodal, lp);
                    out[0] += -2.0 * wt * avg * jn;
                    out[1] += wt / edge.length * (jump[0] * jump[0] + jump[1] * jump[1]);
                }
                None => {
                    let v = space.element_value(edge.plus, &diff, lp);
                    out[2] += wt / edge.length * v * v;
                }
            }
        }
        out
    });
    let mut comps = EnergyComponents { volume, ..Default::default() };
    for e in per_edge {
        comps.consistency += e[0];
        comps.interior_penalty += e[1];
        comps.boundary_penalty += e[2];
    }
    comps
}
