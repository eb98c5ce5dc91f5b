//! Verification tools: manufactured problems, the direct minimiser of the
//! assembled energy, a power-iteration PSD check and L2 errors.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::dg_energy::{ProblemSpec, QuadraticEnergyForm};
use crate::fe_space::{FESpace, NodalVector};
use crate::mesh::{DomainTag, Mesh};
use crate::quadrature::{map_to_element, triangle_rule, TriangleRule};
use crate::resnet::{forward, Real, ResNetParams};
use crate::sparse::CsrMatrix;
use crate::{par, Error, Result};

pub const PROBLEM_NAMES: [&str; 3] = ["sine", "lshape", "quadratic"];

/// `sine`: `u = sin(4πx) sin(4πy)` on the unit square, `g = 0`.
/// `lshape`: `u = (x² + y²)^{2/3}` on the L-shape, `g = u`.
/// `quadratic`: `u = x² + y²` on the unit square, `g = u`.
/// In every case `f = −Δu`.
pub fn manufactured_problem(name: &str) -> Result<ProblemSpec> {
    let p = match name {
        "sine" => {
            let u = |p: [f64; 2]| (4.0 * PI * p[0]).sin() * (4.0 * PI * p[1]).sin();
            ProblemSpec {
                name: name.into(),
                f: Arc::new(move |p| 32.0 * PI * PI * u(p)),
                g: Arc::new(|_| 0.0),
                exact_u: Some(Arc::new(u)),
                domain: DomainTag::UnitSquare,
            }
        }
        "lshape" => {
            let u = |p: [f64; 2]| (p[0] * p[0] + p[1] * p[1]).powf(2.0 / 3.0);
            ProblemSpec {
                name: name.into(),
                f: Arc::new(|p| -16.0 / 9.0 * (p[0] * p[0] + p[1] * p[1]).powf(-1.0 / 3.0)),
                g: Arc::new(u),
                exact_u: Some(Arc::new(u)),
                domain: DomainTag::LShape,
            }
        }
        "quadratic" => {
            let u = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
            ProblemSpec {
                name: name.into(),
                f: Arc::new(|_| -4.0),
                g: Arc::new(u),
                exact_u: Some(Arc::new(u)),
                domain: DomainTag::UnitSquare,
            }
        }
        _ => {
            return Err(Error::UnknownName(format!(
                "problem {name:?} (expected one of {})",
                PROBLEM_NAMES.join(", ")
            )))
        }
    };
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub u: NodalVector,
    pub energy: f64,
    /// `‖2AU + b‖₂`, recomputed from the returned `U`.
    pub residual: f64,
    pub iterations: usize,
}

/// Minimise `UᵀAU + bᵀU + c` by Jacobi-preconditioned CG on `2AU = −b`.
/// The relative residual must reach `1e-10`; iteration then continues toward
/// `1e-13` while it keeps improving, and the best iterate is returned.
pub fn solve_fe_minimizer(form: &QuadraticEnergyForm) -> Result<OracleSolution> {
    solve_fe_minimizer_with(form, 1e-10, 20 * form.num_dofs().max(50))
}

pub fn solve_fe_minimizer_with(form: &QuadraticEnergyForm, rel_tol: f64, max_iter: usize) -> Result<OracleSolution> {
    let n = form.num_dofs();
    let a = &form.a;
    let rhs: Vec<f64> = form.b.iter().map(|v| -0.5 * v).collect();
    let scale = norm(&rhs).max(f64::MIN_POSITIVE);
    let (target, polish) = (rel_tol * scale, 1e-3 * rel_tol * scale);
    let patience = 50 + (n as f64).sqrt() as usize;
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();

    let mut x = vec![0.0; n];
    let mut r = rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut best = (norm(&r), x.clone(), 0usize);
    let mut iterations = 0;
    while best.0 > polish && iterations < max_iter && !(best.0 <= target && iterations - best.2 > patience) {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // p lies in the null space: the remaining residual cannot be reduced
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
        let rn = norm(&r);
        if rn < best.0 {
            best = (rn, x.clone(), iterations);
        }
    }
    if best.0 > target {
        return Err(Error::Convergence { iterations, residual: 2.0 * best.0 });
    }
    let x = best.1;
    let (energy, grad) = form.value_and_gradient(&x);
    Ok(OracleSolution { u: x.into(), energy, residual: grad.norm(), iterations })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Estimate of the smallest eigenvalue of a symmetric matrix by power
/// iteration on `σI − A`, with `σ` an upper bound on the spectrum from the
/// ∞-norm. The estimate is a Rayleigh quotient, so it never lies below the
/// true minimum.
pub fn smallest_eigenvalue(a: &CsrMatrix, iterations: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let n = a.dim();
    if n == 0 {
        return 0.0;
    }
    let sigma = a.norm_inf();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut av = vec![0.0; n];
    for _ in 0..iterations {
        a.matvec_into(&v, &mut av);
        let mut w: Vec<f64> = v.iter().zip(&av).map(|(v, av)| sigma * v - av).collect();
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        w.iter_mut().for_each(|x| *x /= nw);
        v = w;
    }
    a.matvec_into(&v, &mut av);
    dot(&v, &av)
}

/// A quadrature point with its element and barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementPoint {
    pub element: usize,
    pub bary: [f64; 3],
    pub x: [f64; 2],
}

/// Anything that can be evaluated at quadrature points of a mesh.
pub trait Evaluable: Sync {
    fn evaluate(&self, points: &[ElementPoint]) -> Result<Vec<f64>>;
}

impl<T: Real> Evaluable for ResNetParams<T> {
    fn evaluate(&self, points: &[ElementPoint]) -> Result<Vec<f64>> {
        let xs: Vec<[f64; 2]> = points.iter().map(|p| p.x).collect();
        Ok(forward(self, &xs)?.into_iter().map(|v| v.to_f64().unwrap()).collect())
    }
}

/// A P2 function given by nodal values; points must come from the space's
/// own mesh.
pub struct FeFunction<'a> {
    pub space: &'a FESpace,
    pub u: &'a [f64],
}

impl Evaluable for FeFunction<'_> {
    fn evaluate(&self, points: &[ElementPoint]) -> Result<Vec<f64>> {
        Ok(points.iter().map(|p| self.space.element_value(p.element, self.u, p.bary)).collect())
    }
}

/// A plain function of position.
pub struct PointFunction<F>(pub F);

impl<F: Fn([f64; 2]) -> f64 + Sync> Evaluable for PointFunction<F> {
    fn evaluate(&self, points: &[ElementPoint]) -> Result<Vec<f64>> {
        Ok(points.iter().map(|p| (self.0)(p.x)).collect())
    }
}

/// Physical points and weights of `rule` on every element.
pub fn quadrature_points(mesh: &Mesh, rule: &TriangleRule) -> (Vec<ElementPoint>, Vec<f64>) {
    let mut pts = Vec::with_capacity(mesh.num_triangles() * rule.len());
    let mut weights = Vec::with_capacity(pts.capacity());
    for k in 0..mesh.num_triangles() {
        let det = 2.0 * mesh.area(k);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            pts.push(ElementPoint { element: k, bary: *l, x: map_to_element(mesh, k, *l) });
            weights.push(det * w);
        }
    }
    (pts, weights)
}

/// `‖v − u‖_{L²(Ω)}` with the rule of the given precision on `mesh`.
pub fn l2_error(evaluable: &dyn Evaluable, problem: &ProblemSpec, mesh: &Mesh, precision: usize) -> Result<f64> {
    let exact = problem
        .exact_u
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("problem {} has no exact solution", problem.name)))?;
    let rule = triangle_rule(precision)?;
    let (pts, weights) = quadrature_points(mesh, &rule);
    let values = evaluable.evaluate(&pts)?;
    let sum: f64 = par::map_range(pts.len(), |i| {
        let d = values[i] - exact(pts[i].x);
        weights[i] * d * d
    })
    .iter()
    .sum();
    Ok(sum.sqrt())
}

/// `∫_K (ΔU + f)²` per element, with `f` sampled at the points of `rule`.
pub fn element_residuals(space: &FESpace, u: &[f64], problem: &ProblemSpec, rule: &TriangleRule) -> Vec<f64> {
    let mesh = space.mesh();
    par::map_range(space.num_elements(), |k| {
        let lap = space.element_laplacian(k, u);
        let det = 2.0 * mesh.area(k);
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(l, w)| {
                let r = lap + (problem.f)(map_to_element(mesh, k, *l));
                det * w * r * r
            })
            .sum()
    })
}
