//! Symmetric quadrature rules on the reference triangle `{(0,0), (1,0), (0,1)}`
//! and Gauss–Legendre rules on `[0, 1]`.

use crate::mesh::Mesh;
use crate::{Error, Result};

/// A rule on the reference triangle. Points are barycentric `(λ0, λ1, λ2)`,
/// with reference coordinates `(x̂, ŷ) = (λ1, λ2)`; weights sum to 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub precision: usize,
}

/// A rule on `[0, 1]`; weights sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub precision: usize,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rule over the reference triangle applied to `f(x̂, ŷ)`.
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[1], p[2]))
            .sum()
    }
}

impl EdgeRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn orbit3(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, w: f64) {
    let b = 1.0 - 2.0 * a;
    for p in [[b, a, a], [a, b, a], [a, a, b]] {
        points.push(p);
        weights.push(w);
    }
}

fn orbit6(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    let c = 1.0 - a - b;
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        points.push(p);
        weights.push(w);
    }
}

/// Symmetric triangle rule integrating all polynomials of total degree
/// `≤ precision` exactly. Supported precisions are 1 to 6.
///
/// Precision 3 is the classical four-point rule with a negative centroid
/// weight; 4 to 6 are the Dunavant rules with 6, 7 and 12 points.
pub fn triangle_rule(precision: usize) -> Result<TriangleRule> {
    const THIRD: f64 = 1.0 / 3.0;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match precision {
        1 => {
            points.push([THIRD; 3]);
            weights.push(0.5);
        }
        2 => orbit3(&mut points, &mut weights, 1.0 / 6.0, 1.0 / 6.0),
        3 => {
            points.push([THIRD; 3]);
            weights.push(-27.0 / 96.0);
            orbit3(&mut points, &mut weights, 0.2, 25.0 / 96.0);
        }
        4 => {
            orbit3(&mut points, &mut weights, 0.445_948_490_915_964_886_32, 0.111_690_794_839_005_732_85);
            orbit3(&mut points, &mut weights, 0.091_576_213_509_770_743_46, 0.054_975_871_827_660_933_819);
        }
        5 => {
            points.push([THIRD; 3]);
            weights.push(0.1125);
            orbit3(&mut points, &mut weights, 0.470_142_064_105_115_089_77, 0.066_197_076_394_253_090_369);
            orbit3(&mut points, &mut weights, 0.101_286_507_323_456_338_8, 0.062_969_590_272_413_576_298);
        }
        6 => {
            orbit3(&mut points, &mut weights, 0.249_286_745_170_910_421_29, 0.058_393_137_863_189_683_013);
            orbit3(&mut points, &mut weights, 0.063_089_014_491_502_228_34, 0.025_422_453_185_103_408_46);
            orbit6(
                &mut points,
                &mut weights,
                0.053_145_049_844_816_947_353,
                0.310_352_451_033_784_405_42,
                0.041_425_537_809_186_787_597,
            );
        }
        p => return Err(Error::InvalidArgument(format!("no triangle rule of precision {p}"))),
    }
    Ok(TriangleRule { points, weights, precision })
}

/// Gauss–Legendre rule with `npoints ∈ 1..=4` on `[0, 1]`, exact to degree
/// `2 npoints - 1`.
pub fn edge_rule(npoints: usize) -> Result<EdgeRule> {
    // Nodes and weights on [-1, 1], mapped below.
    let (nodes, w): (Vec<f64>, Vec<f64>) = match npoints {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = (1.0f64 / 3.0).sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (0.6f64).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let r = 2.0 * (1.2f64).sqrt();
            let a = ((3.0 - r) / 7.0).sqrt();
            let b = ((3.0 + r) / 7.0).sqrt();
            let s = (30.0f64).sqrt();
            let wa = (18.0 + s) / 36.0;
            let wb = (18.0 - s) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        n => return Err(Error::InvalidArgument(format!("no edge rule with {n} points"))),
    };
    Ok(EdgeRule {
        points: nodes.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        weights: w.iter().map(|w| 0.5 * w).collect(),
        precision: 2 * npoints - 1,
    })
}

/// `|det J_K| Σ_q w_q f(F_K(x̂_q))` over triangle `k`.
pub fn integrate_element(rule: &TriangleRule, mesh: &Mesh, k: usize, f: impl Fn([f64; 2]) -> f64) -> f64 {
    let [a, b, c] = mesh.triangle_points(k);
    let det = 2.0 * mesh.area(k);
    det * rule
        .points
        .iter()
        .zip(&rule.weights)
        .map(|(l, w)| {
            let x = l[0] * a[0] + l[1] * b[0] + l[2] * c[0];
            let y = l[0] * a[1] + l[1] * b[1] + l[2] * c[1];
            w * f([x, y])
        })
        .sum::<f64>()
}

/// Physical coordinates of barycentric point `l` in triangle `k`.
pub fn map_to_element(mesh: &Mesh, k: usize, l: [f64; 3]) -> [f64; 2] {
    let [a, b, c] = mesh.triangle_points(k);
    [
        l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
        l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_unit_square_mesh;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    fn monomial_exact(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn triangle_rules_are_exact_to_precision() {
        for p in 1..=6 {
            let rule = triangle_rule(p).unwrap();
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 0.5).abs() < 1e-14);
            for a in 0..=p as u32 {
                for b in 0..=(p as u32 - a) {
                    let q = rule.integrate_reference(|x, y| x.powi(a as i32) * y.powi(b as i32));
                    assert!((q - monomial_exact(a, b)).abs() < 1e-15, "p={p} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn named_examples() {
        let r1 = triangle_rule(1).unwrap();
        assert_eq!(r1.points, vec![[1.0 / 3.0; 3]]);
        assert_eq!(r1.weights, vec![0.5]);
        let r2 = triangle_rule(2).unwrap();
        assert!((r2.integrate_reference(|x, y| x * y) - 1.0 / 24.0).abs() < 1e-16);
        let r3 = triangle_rule(3).unwrap();
        assert!((r3.integrate_reference(|x, _| x.powi(3)) - 1.0 / 20.0).abs() < 1e-16);
        assert_eq!(r3.weights.iter().filter(|w| **w < 0.0).count(), 1);
    }

    #[test]
    fn unsupported_precision() {
        assert!(matches!(triangle_rule(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(triangle_rule(7), Err(Error::InvalidArgument(_))));
        assert!(matches!(edge_rule(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(edge_rule(5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn edge_rules() {
        let r1 = edge_rule(1).unwrap();
        assert_eq!((r1.points[0], r1.weights[0]), (0.5, 1.0));
        for n in 1..=4 {
            let r = edge_rule(n).unwrap();
            for d in 0..=(2 * n - 1) {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(t, w)| w * t.powi(d as i32)).sum();
                assert!((q - 1.0 / (d as f64 + 1.0)).abs() < 1e-15, "n={n} d={d}");
            }
        }
        let r3 = edge_rule(3).unwrap();
        let q: f64 = r3.points.iter().zip(&r3.weights).map(|(t, w)| w * t.powi(4)).sum();
        assert!((q - 0.2).abs() < 1e-15);
    }

    #[test]
    fn element_integrals() {
        let m = build_unit_square_mesh(4).unwrap();
        let r = triangle_rule(2).unwrap();
        let total: f64 = (0..m.num_triangles()).map(|k| integrate_element(&r, &m, k, |_| 1.0)).sum();
        assert!((total - 1.0).abs() < 1e-14);
        for k in 0..m.num_triangles() {
            assert!((integrate_element(&r, &m, k, |_| 1.0) - m.area(k)).abs() < 1e-16);
        }
        let reference = crate::mesh::Mesh::from_triangles(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            crate::mesh::DomainTag::UnitSquare,
            1.0,
        )
        .unwrap();
        assert!((integrate_element(&r, &reference, 0, |p| p[0]) - 1.0 / 6.0).abs() < 1e-16);
    }

    #[test]
    fn affine_invariance() {
        // ∫_K x² y over a physical triangle equals the pulled-back reference integral.
        let m = crate::mesh::Mesh::from_triangles(
            vec![[0.3, -0.2], [1.7, 0.4], [0.1, 1.1]],
            vec![[0, 1, 2]],
            crate::mesh::DomainTag::LShape,
            1.0,
        )
        .unwrap();
        let r = triangle_rule(4).unwrap();
        let f = |p: [f64; 2]| p[0] * p[0] * p[1] - 0.5 * p[1].powi(3) + 2.0;
        let phys = integrate_element(&r, &m, 0, f);
        let [a, b, c] = m.triangle_points(0);
        let det = 2.0 * m.area(0);
        let fine = triangle_rule(6).unwrap();
        let pulled = det
            * fine.integrate_reference(|x, y| {
                f([
                    a[0] + x * (b[0] - a[0]) + y * (c[0] - a[0]),
                    a[1] + x * (b[1] - a[1]) + y * (c[1] - a[1]),
                ])
            });
        assert!((phys - pulled).abs() < 1e-13 * phys.abs().max(1.0));
    }
}
