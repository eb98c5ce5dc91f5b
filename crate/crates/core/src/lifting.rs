//! Lifting of gradient jumps and the discrete Laplacian `L_h = Δ_h − R_h`.
//!
//! `R_h(∇U)` is the discontinuous P2 field with
//! `∫_Ω R_h w = Σ_{e interior} ∫_e {w} ⟦∇U·n⟧` for all discontinuous P2 `w`.
//! Training never needs it; it backs the cross-check of the assembled energy
//! against the rewritten form `∫|L_h U + F|² − ∫|R_h|² + α pen(U)`.

use crate::dg_energy::energy_components;
use crate::fe_space::{ElementGeometry, ElementwiseField, FESpace};
use crate::par;
use crate::quadrature::{edge_rule, triangle_rule};
use crate::{Error, Result};

/// `R_h(∇U)` in the local P2 basis of every element.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedField(pub ElementwiseField);

/// Exact P2 mass matrix of an element (row-major 6×6).
pub fn element_mass(geom: &ElementGeometry) -> [f64; 36] {
    let rule = triangle_rule(4).expect("precision-4 rule exists");
    let mut m = [0.0; 36];
    for (l, w) in rule.points.iter().zip(&rule.weights) {
        let v = geom.values(*l);
        let wq = w * 2.0 * geom.area;
        for i in 0..6 {
            for j in 0..6 {
                m[i * 6 + j] += wq * v[i] * v[j];
            }
        }
    }
    m
}

/// Solve the 6×6 system `m x = rhs` by Gaussian elimination with partial pivoting.
fn solve6(mut m: [f64; 36], mut rhs: [f64; 6]) -> Option<[f64; 6]> {
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..6 {
        let piv = (col..6).max_by(|&a, &b| m[a * 6 + col].abs().total_cmp(&m[b * 6 + col].abs()))?;
        if m[piv * 6 + col].abs() <= 1e-14 * scale {
            return None;
        }
        if piv != col {
            for j in 0..6 {
                m.swap(col * 6 + j, piv * 6 + j);
            }
            rhs.swap(col, piv);
        }
        for r in col + 1..6 {
            let factor = m[r * 6 + col] / m[col * 6 + col];
            for j in col..6 {
                m[r * 6 + j] -= factor * m[col * 6 + j];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = [0.0; 6];
    for r in (0..6).rev() {
        let mut s = rhs[r];
        for j in r + 1..6 {
            s -= m[r * 6 + j] * x[j];
        }
        x[r] = s / m[r * 6 + r];
    }
    Some(x)
}

/// `⟦∇U·n⟧` on interior edge `e` at edge parameter `t`.
pub fn normal_jump(space: &FESpace, u: &[f64], e: usize, t: f64) -> f64 {
    let edge = &space.mesh().edges[e];
    let Some(minus) = edge.minus else { return 0.0 };
    let gp = space.element_gradient(edge.plus, u, space.edge_point_in_element(edge.plus, e, t));
    let gm = space.element_gradient(minus, u, space.edge_point_in_element(minus, e, t));
    (gp[0] - gm[0]) * edge.normal[0] + (gp[1] - gm[1]) * edge.normal[1]
}

/// `R_h(∇U)` via one elementwise mass solve per triangle.
pub fn lifting_apply(space: &FESpace, u: &[f64]) -> Result<LiftedField> {
    let mesh = space.mesh();
    let gauss = edge_rule(3)?;
    let blocks: Vec<Option<[f64; 6]>> = par::map_range(space.num_elements(), |k| {
        let geom = space.geometry(k);
        let mut rhs = [0.0; 6];
        for &e in &mesh.tri_edges[k] {
            let edge = &mesh.edges[e];
            if edge.minus.is_none() {
                continue;
            }
            for (t, w) in gauss.points.iter().zip(&gauss.weights) {
                let jn = normal_jump(space, u, e, *t);
                let psi = geom.values(space.edge_point_in_element(k, e, *t));
                for i in 0..6 {
                    rhs[i] += 0.5 * w * edge.length * psi[i] * jn;
                }
            }
        }
        if rhs.iter().all(|&v| v == 0.0) {
            return Some(rhs);
        }
        solve6(element_mass(geom), rhs)
    });
    let mut field = ElementwiseField::zeros(space.num_elements(), 6);
    for (k, block) in blocks.into_iter().enumerate() {
        let block = block.ok_or_else(|| Error::Numeric(format!("singular mass block on element {k}")))?;
        field.element_mut(k).copy_from_slice(&block);
    }
    Ok(LiftedField(field))
}

/// Elementwise Laplacian (P2 coefficients of a constant per element).
pub fn broken_laplacian(space: &FESpace, u: &[f64]) -> ElementwiseField {
    let mut field = ElementwiseField::zeros(space.num_elements(), 6);
    for k in 0..space.num_elements() {
        let lap = space.element_laplacian(k, u);
        field.element_mut(k).fill(lap);
    }
    field
}

/// `L_h(U) = Δ_h U − R_h(∇U)`.
pub fn discrete_laplacian(space: &FESpace, u: &[f64]) -> Result<ElementwiseField> {
    let lifted = lifting_apply(space, u)?;
    let mut field = broken_laplacian(space, u);
    for (c, r) in field.coeffs.iter_mut().zip(&lifted.0.coeffs) {
        *c -= r;
    }
    Ok(field)
}

/// `Σ_K cᵀ M_K c` for a discontinuous P2 field.
pub fn l2_norm_squared(space: &FESpace, field: &ElementwiseField) -> f64 {
    par::map_range(space.num_elements(), |k| {
        let m = element_mass(space.geometry(k));
        let c = field.element(k);
        let mut s = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                s += c[i] * m[i * 6 + j] * c[j];
            }
        }
        s
    })
    .iter()
    .sum()
}

/// `∫|L_h(U) + F|² − ∫|R_h(∇U)|² + α pen(U)` with exact integration.
pub fn energy_lifted(space: &FESpace, u: &[f64], f_nodal: &[f64], g_nodal: &[f64], alpha: f64) -> Result<f64> {
    let lifted = lifting_apply(space, u)?;
    let mut shifted = broken_laplacian(space, u);
    for k in 0..space.num_elements() {
        let fl = space.local_values(k, f_nodal);
        let r = lifted.0.element(k).to_vec();
        for (i, c) in shifted.element_mut(k).iter_mut().enumerate() {
            *c += fl[i] - r[i];
        }
    }
    let rule = triangle_rule(4)?;
    let comps = energy_components(space, u, f_nodal, g_nodal, &rule);
    let pen = comps.interior_penalty + comps.boundary_penalty;
    Ok(l2_norm_squared(space, &shifted) - l2_norm_squared(space, &lifted.0) + alpha * pen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg_energy::assemble_energy_form;
    use crate::fe_space::{build_p2_space, interpolate, NodalVector};
    use crate::mesh::build_unit_square_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn mass_matrix_closed_form() {
        // P2 mass matrix: |K|/180 · [[6,-1,-1,-4,0,0]...] in (vertex, opposite-midpoint) order
        let geom = ElementGeometry::new([[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]]);
        let m = element_mass(&geom);
        let a = geom.area / 180.0;
        assert!((m[0] - 6.0 * a).abs() < 1e-14);
        assert!((m[1] + a).abs() < 1e-14);
        assert!((m[3] + 4.0 * a).abs() < 1e-14); // vertex 0 with midpoint opposite it
        assert!(m[4].abs() < 1e-14);
        assert!((m[3 * 6 + 3] - 32.0 * a).abs() < 1e-14);
        assert!((m[3 * 6 + 4] - 16.0 * a).abs() < 1e-14);
    }

    #[test]
    fn smooth_quadratic_has_no_lifting() {
        let space = build_p2_space(build_unit_square_mesh(4).unwrap());
        let u = interpolate(&space, |p| p[0] * p[0] + p[1] * p[1]).unwrap();
        let r = lifting_apply(&space, &u).unwrap();
        assert!(r.0.coeffs.iter().all(|c| c.abs() < 1e-11));
        let l = discrete_laplacian(&space, &u).unwrap();
        assert!(l.coeffs.iter().all(|c| (c - 4.0).abs() < 1e-10));
        let lin = interpolate(&space, |p| 2.0 * p[0] - p[1] + 0.5).unwrap();
        let l = discrete_laplacian(&space, &lin).unwrap();
        assert!(l.coeffs.iter().all(|c| c.abs() < 1e-11));
    }

    #[test]
    fn defining_identity_holds() {
        let space = build_p2_space(build_unit_square_mesh(3).unwrap());
        let u = random_vec(space.num_dofs(), 1);
        let r = lifting_apply(&space, &u).unwrap();
        let gauss = edge_rule(3).unwrap();
        let mesh = space.mesh();
        for seed in 0..20 {
            let w = ElementwiseField { per_element: 6, coeffs: random_vec(6 * space.num_elements(), 50 + seed) };
            let mut lhs = 0.0;
            for k in 0..space.num_elements() {
                let m = element_mass(space.geometry(k));
                let (rc, wc) = (r.0.element(k), w.element(k));
                for i in 0..6 {
                    for j in 0..6 {
                        lhs += rc[i] * m[i * 6 + j] * wc[j];
                    }
                }
            }
            let mut rhs = 0.0;
            for (e, edge) in mesh.edges.iter().enumerate() {
                let Some(minus) = edge.minus else { continue };
                for (t, wt) in gauss.points.iter().zip(&gauss.weights) {
                    let wp = w.value_at(space.geometry(edge.plus), edge.plus, space.edge_point_in_element(edge.plus, e, *t));
                    let wm = w.value_at(space.geometry(minus), minus, space.edge_point_in_element(minus, e, *t));
                    rhs += wt * edge.length * 0.5 * (wp + wm) * normal_jump(&space, &u, e, *t);
                }
            }
            assert!((lhs - rhs).abs() <= 1e-11 * rhs.abs().max(1.0), "{lhs} {rhs}");
        }
    }

    #[test]
    fn lifted_energy_matches_assembly() {
        let space = build_p2_space(build_unit_square_mesh(3).unwrap());
        let n = space.num_dofs();
        let rule = triangle_rule(4).unwrap();
        let zero = NodalVector::zeros(n);
        let f: NodalVector = random_vec(n, 2).into();
        let g: NodalVector = random_vec(n, 3).into();
        for (f, g) in [(&f, &g), (&zero, &zero)] {
            let form = assemble_energy_form(&space, &rule, 60.0, true, f, g).unwrap();
            for seed in 0..5 {
                let u = random_vec(n, 10 + seed);
                let direct = form.value(&u);
                let lifted = energy_lifted(&space, &u, f, g, 60.0).unwrap();
                assert!((direct - lifted).abs() <= 1e-9 * direct.abs(), "{direct} vs {lifted}");
            }
        }
    }

    #[test]
    fn lifting_vanishes_iff_jumps_vanish() {
        let space = build_p2_space(build_unit_square_mesh(3).unwrap());
        // a kink along x = 1/3 produces gradient jumps
        let kink = interpolate(&space, |p| (p[0] - 1.0 / 3.0).abs()).unwrap();
        let r = lifting_apply(&space, &kink).unwrap();
        assert!(l2_norm_squared(&space, &r.0) > 1e-3);
        let rule = triangle_rule(4).unwrap();
        let zero = vec![0.0; space.num_dofs()];
        assert!(energy_components(&space, &kink, &zero, &zero, &rule).interior_penalty > 1e-3);
        let smooth = interpolate(&space, |p| p[0] * p[1] - p[1] * p[1]).unwrap();
        assert!(l2_norm_squared(&space, &lifting_apply(&space, &smooth).unwrap().0) < 1e-20);
        assert!(energy_components(&space, &smooth, &zero, &zero, &rule).interior_penalty < 1e-20);
    }
}
