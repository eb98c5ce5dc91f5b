//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each and exits nonzero if any failed. Pass criterion numbers as arguments
//! to run a subset, e.g. `cargo test -p validation --test acceptance -- 1 4`.
//!
//! Reference values (eigenvalues, finite differences, rates, L2 errors,
//! monomial integrals) are computed here from first principles rather than
//! through the library's own helpers.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dgnet::dg_energy::{energy_components, QuadraticEnergyForm};
use dgnet::experiment::{assemble_for, build_space};
use dgnet::fe_space::FESpace;
use dgnet::lifting::energy_lifted;
use dgnet::mesh::{EdgeClass, Mesh};
use dgnet::oracle::{manufactured_problem, solve_fe_minimizer};
use dgnet::quadrature::{edge_rule, triangle_rule};
use dgnet::resnet::{forward, init_params, laplacian_forward, vjp, NetDims, ResNetParams};
use dgnet::training::{train_collocation, train_fe, RunReport, TrainConfig};

// Criterion tolerances.
const C1_REL: f64 = 1e-9;
const C2_REL: f64 = 1e-8;
const C3_ENERGY_REL: f64 = 1e-6;
const C3_VJP_REL: f64 = 1e-5;
const C3_LAP_ABS: f64 = 1e-5;
const C4_JUMP_RATE: (f64, f64) = (1.6, 2.4);
const C4_CONS_RATE: (f64, f64) = (0.6, 1.4);
const C5_RATE: (f64, f64) = (2.7, 3.3);
const C6_ABS: f64 = 1e-13;
const C7_L2: f64 = 1e-2;
const C8_RATIO: f64 = 3.0;
const C9_LEVEL1: (f64, f64) = (0.02, 0.2);
const C10_SPEEDUP: f64 = 1.5;
const C11_SLACK: f64 = 1e-8;

// Training budgets.
const SEEDS: [u64; 3] = [0, 1, 2];
const C7_EPOCHS: usize = 20_000;
const C8_EPOCHS: usize = 5_000;
const C8_MESH: usize = 24;
const C9_EPOCHS: usize = 5_000;
const C10_EPOCHS: usize = 1_100;
const TIMING_WINDOW: (usize, usize) = (100, 1100);

// ---------------------------------------------------------------------------
// Independent helpers

fn sine_u(p: [f64; 2]) -> f64 {
    (4.0 * PI * p[0]).sin() * (4.0 * PI * p[1]).sin()
}

fn sine_f(p: [f64; 2]) -> f64 {
    32.0 * PI * PI * sine_u(p)
}

fn lshape_u(p: [f64; 2]) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).powf(2.0 / 3.0)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Least-squares slope of log(v) against log(h).
fn fitted_rate(hs: &[f64], v: &[f64]) -> f64 {
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = v.iter().map(|a| a.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Seven-point Radon rule (degree 5): barycentric points and weights
/// relative to the triangle area.
fn radon7() -> Vec<([f64; 3], f64)> {
    let s = 15f64.sqrt();
    let (a1, a2) = ((6.0 - s) / 21.0, (6.0 + s) / 21.0);
    let (w1, w2) = ((155.0 - s) / 1200.0, (155.0 + s) / 1200.0);
    let mut r = vec![([1.0 / 3.0; 3], 9.0 / 40.0)];
    for (a, w) in [(a1, w1), (a2, w2)] {
        let b = 1.0 - 2.0 * a;
        r.extend([([a, a, b], w), ([a, b, a], w), ([b, a, a], w)]);
    }
    r
}

fn triangle_area(t: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1])).abs()
}

fn bary_point(t: &[[f64; 2]; 3], l: [f64; 3]) -> [f64; 2] {
    [
        l[0] * t[0][0] + l[1] * t[1][0] + l[2] * t[2][0],
        l[0] * t[0][1] + l[1] * t[1][1] + l[2] * t[2][1],
    ]
}

/// `‖v − u‖_{L²}` with `v` evaluated in batch at Radon points of every cell.
fn l2_error(mesh: &Mesh, v: &dyn Fn(&[[f64; 2]]) -> Vec<f64>, u: fn([f64; 2]) -> f64) -> f64 {
    let rule = radon7();
    let mut pts = Vec::with_capacity(mesh.num_triangles() * rule.len());
    let mut wts = Vec::with_capacity(pts.capacity());
    for k in 0..mesh.num_triangles() {
        let t = mesh.triangle_points(k);
        let area = triangle_area(&t);
        for (l, w) in &rule {
            pts.push(bary_point(&t, *l));
            wts.push(w * area);
        }
    }
    let vals = v(&pts);
    pts.iter().zip(&vals).zip(&wts).map(|((p, a), w)| w * (a - u(*p)).powi(2)).sum::<f64>().sqrt()
}

fn network_l2(params: &ResNetParams<f64>, mesh: &Mesh, u: fn([f64; 2]) -> f64) -> f64 {
    l2_error(mesh, &|p| forward(params, p).expect("finite network"), u)
}

/// A P2 function on one triangle, with the local basis rebuilt from the
/// barycentric coordinates of the six nodes.
struct LocalP2 {
    grad_l: [[f64; 2]; 3],
    /// For each node: `Some(i)` for the vertex function of vertex `i`,
    /// `None` paired with `(j, k)` for the edge function `4 λj λk`.
    kind: [(Option<usize>, usize, usize); 6],
    coeff: [f64; 6],
}

impl LocalP2 {
    fn new(space: &FESpace, k: usize, u: &[f64]) -> Self {
        let t = space.mesh().triangle_points(k);
        let det = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
        let mut grad_l = [[0.0; 2]; 3];
        for i in 0..3 {
            let (b, c) = (t[(i + 1) % 3], t[(i + 2) % 3]);
            grad_l[i] = [(b[1] - c[1]) / det, (c[0] - b[0]) / det];
        }
        let dofs = space.element_dofs[k];
        let mut kind = [(None, 0, 0); 6];
        let mut coeff = [0.0; 6];
        for (j, &d) in dofs.iter().enumerate() {
            let l = barycentric(&t, space.dof_coords[d]);
            coeff[j] = u[d];
            kind[j] = match l.iter().position(|&x| (x - 1.0).abs() < 1e-9) {
                Some(i) => (Some(i), 0, 0),
                None => {
                    let zero = l.iter().position(|&x| x.abs() < 1e-9).expect("edge node");
                    (None, (zero + 1) % 3, (zero + 2) % 3)
                }
            };
        }
        LocalP2 { grad_l, kind, coeff }
    }

    fn value(&self, l: [f64; 3]) -> f64 {
        self.kind
            .iter()
            .zip(&self.coeff)
            .map(|(kd, c)| {
                c * match *kd {
                    (Some(i), _, _) => l[i] * (2.0 * l[i] - 1.0),
                    (None, a, b) => 4.0 * l[a] * l[b],
                }
            })
            .sum()
    }

    fn gradient(&self, l: [f64; 3]) -> [f64; 2] {
        let g = &self.grad_l;
        let mut out = [0.0; 2];
        for (kd, c) in self.kind.iter().zip(&self.coeff) {
            for d in 0..2 {
                out[d] += c * match *kd {
                    (Some(i), _, _) => (4.0 * l[i] - 1.0) * g[i][d],
                    (None, a, b) => 4.0 * (l[a] * g[b][d] + l[b] * g[a][d]),
                };
            }
        }
        out
    }

    fn laplacian(&self) -> f64 {
        let g = &self.grad_l;
        let dot = |a: usize, b: usize| g[a][0] * g[b][0] + g[a][1] * g[b][1];
        self.kind
            .iter()
            .zip(&self.coeff)
            .map(|(kd, c)| {
                c * match *kd {
                    (Some(i), _, _) => 4.0 * dot(i, i),
                    (None, a, b) => 8.0 * dot(a, b),
                }
            })
            .sum()
    }
}

fn barycentric(t: &[[f64; 2]; 3], p: [f64; 2]) -> [f64; 3] {
    let det = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
    let l1 = ((p[0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (p[1] - t[0][1])) / det;
    let l2 = ((t[1][0] - t[0][0]) * (p[1] - t[0][1]) - (p[0] - t[0][0]) * (t[1][1] - t[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Interior jump penalty `Σ 1/h_e ∫_e |[∇v]|²` and consistency term
/// `Σ ∫_e {Δv + f}[∇v·n]` of the P2 functions with nodal values `u`, `f`.
fn edge_terms(space: &FESpace, u: &[f64], f: &[f64]) -> (f64, f64) {
    let mesh = space.mesh();
    let s = 0.6f64.sqrt();
    let gauss = [(0.5 * (1.0 - s), 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 * (1.0 + s), 5.0 / 18.0)];
    let (mut pen, mut cons) = (0.0, 0.0);
    for e in mesh.edges.iter().filter(|e| e.class == EdgeClass::Interior) {
        let (kp, km) = (e.plus, e.minus.unwrap());
        let (tp, tm) = (mesh.triangle_points(kp), mesh.triangle_points(km));
        let (up, um) = (LocalP2::new(space, kp, u), LocalP2::new(space, km, u));
        let fp = LocalP2::new(space, kp, f);
        let (a, b) = (mesh.vertices[e.vertices[0]], mesh.vertices[e.vertices[1]]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        // normal pointing out of the plus element
        let mut n = [(b[1] - a[1]) / len, (a[0] - b[0]) / len];
        let cp = [(tp[0][0] + tp[1][0] + tp[2][0]) / 3.0, (tp[0][1] + tp[1][1] + tp[2][1]) / 3.0];
        if (cp[0] - a[0]) * n[0] + (cp[1] - a[1]) * n[1] > 0.0 {
            n = [-n[0], -n[1]];
        }
        for (t, w) in gauss {
            let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let (lp, lm) = (barycentric(&tp, x), barycentric(&tm, x));
            let (gp, gm) = (up.gradient(lp), um.gradient(lm));
            let jump = [gp[0] - gm[0], gp[1] - gm[1]];
            pen += w * (jump[0] * jump[0] + jump[1] * jump[1]);
            let avg = 0.5 * (up.laplacian() + um.laplacian()) + fp.value(lp);
            cons += w * len * avg * (jump[0] * n[0] + jump[1] * n[1]);
        }
    }
    (pen, cons)
}

fn nodal(space: &FESpace, w: fn([f64; 2]) -> f64) -> Vec<f64> {
    space.dof_coords.iter().map(|p| w(*p)).collect()
}

// ---------------------------------------------------------------------------
// Shared training runs

struct TrainedRun {
    label: String,
    report: RunReport,
    form: QuadraticEnergyForm,
    l2: f64,
}

fn train_sine(n: usize, blocks: usize, jumps: bool, seed: u64, epochs: usize) -> TrainedRun {
    let problem = manufactured_problem("sine").unwrap();
    let space = build_space(&problem, n).unwrap();
    let form = assemble_for(&problem, &space, 2, 60.0, jumps).unwrap();
    let cfg = TrainConfig { epochs, seed, include_jump_terms: jumps, volume_precision: 2, ..TrainConfig::default() };
    let params = init_params(NetDims::new(2, 64, blocks).unwrap(), seed);
    let report = train_fe(&params, &form, &space, &cfg).unwrap();
    let l2 = network_l2(&report.final_params, space.mesh(), sine_u);
    let label = format!("sine h=1/{n} L={blocks} {} seed {seed}", if jumps { "full" } else { "no-jump" });
    TrainedRun { label, report, form, l2 }
}

fn c7_runs() -> &'static [TrainedRun] {
    static RUNS: OnceLock<Vec<TrainedRun>> = OnceLock::new();
    RUNS.get_or_init(|| SEEDS.iter().map(|&s| train_sine(24, 2, true, s, C7_EPOCHS)).collect())
}

fn c8_runs() -> &'static (Vec<TrainedRun>, Vec<TrainedRun>) {
    static RUNS: OnceLock<(Vec<TrainedRun>, Vec<TrainedRun>)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let full = SEEDS.iter().map(|&s| train_sine(C8_MESH, 4, true, s, C8_EPOCHS)).collect();
        let nojump = SEEDS.iter().map(|&s| train_sine(C8_MESH, 4, false, s, C8_EPOCHS)).collect();
        (full, nojump)
    })
}

fn c9_runs() -> &'static [Vec<TrainedRun>] {
    static RUNS: OnceLock<Vec<Vec<TrainedRun>>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let problem = manufactured_problem("lshape").unwrap();
        (1..=3)
            .map(|level| {
                let space = build_space(&problem, level).unwrap();
                let form = assemble_for(&problem, &space, 1, 60.0, true).unwrap();
                SEEDS
                    .iter()
                    .map(|&seed| {
                        let cfg = TrainConfig { epochs: C9_EPOCHS, seed, volume_precision: 1, ..TrainConfig::default() };
                        let params = init_params(NetDims::new(2, 64, 2).unwrap(), seed);
                        let report = train_fe(&params, &form, &space, &cfg).unwrap();
                        let l2 = network_l2(&report.final_params, space.mesh(), lshape_u);
                        let label = format!("lshape level {level} seed {seed}");
                        TrainedRun { label, report, form: form.clone(), l2 }
                    })
                    .collect()
            })
            .collect()
    })
}

// ---------------------------------------------------------------------------
// Criteria

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn c1_form_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for (name, mesh) in [("sine", 3), ("sine", 6), ("lshape", 0)] {
        let problem = manufactured_problem(name).unwrap();
        let space = build_space(&problem, mesh).unwrap();
        // P0 Laplacian plus P2 source squared: degree 4 is exact
        let form = assemble_for(&problem, &space, 4, 60.0, true).unwrap();
        for _ in 0..20 {
            let u = random_vector(space.num_dofs(), &mut rng);
            let direct = form.value(&u);
            let lifted = energy_lifted(&space, &u, &form.f_nodal, &form.g_nodal, 60.0).unwrap();
            worst = worst.max((direct - lifted).abs() / lifted.abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= C1_REL && secs < 10.0,
        format!("max relative difference {worst:.2e} (≤ {C1_REL:e}), {secs:.1} s (< 10 s)"),
    )
}

fn c2_psd() -> Outcome {
    let start = Instant::now();
    let problem = manufactured_problem("sine").unwrap();
    let mut worst = f64::INFINITY;
    for n in [3, 6, 12] {
        let space = build_space(&problem, n).unwrap();
        let form = assemble_for(&problem, &space, 2, 60.0, true).unwrap();
        let d = space.num_dofs();
        let dense = form.a.to_dense();
        let m = DMatrix::from_fn(d, d, |i, j| dense[i][j]);
        let eig = SymmetricEigen::new(m).eigenvalues;
        let lmin = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let norm = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
        worst = worst.min(lmin / norm);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst >= -C2_REL && secs < 30.0,
        format!("min λ(A)/‖A‖₂ = {worst:.3e} (≥ −{C2_REL:e}) over n = 3, 6, 12, {secs:.1} s (< 30 s)"),
    )
}

fn c3_gradients() -> Outcome {
    let start = Instant::now();
    let problem = manufactured_problem("sine").unwrap();
    let space = build_space(&problem, 3).unwrap();
    let form = assemble_for(&problem, &space, 2, 60.0, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let u = random_vector(space.num_dofs(), &mut rng);
    let g = form.gradient(&u);
    let gmax = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let h = 1e-3;
    let mut energy_err = 0.0f64;
    for i in 0..u.len() {
        let (mut a, mut b) = (u.clone(), u.clone());
        a[i] += h;
        b[i] -= h;
        let fd = (form.value(&a) - form.value(&b)) / (2.0 * h);
        energy_err = energy_err.max((fd - g[i]).abs() / gmax);
    }

    let params = init_params(NetDims::new(2, 8, 2).unwrap(), 7);
    let pts: Vec<[f64; 2]> = (0..9).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
    let cot = random_vector(pts.len(), &mut rng);
    let grad = vjp(&params, &pts, &cot).unwrap();
    let objective = |p: &ResNetParams<f64>| -> f64 { forward(p, &pts).unwrap().iter().zip(&cot).map(|(a, b)| a * b).sum() };
    let gmax = grad.data.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let h = 1e-6;
    let mut vjp_err = 0.0f64;
    for i in 0..params.len() {
        let (mut a, mut b) = (params.clone(), params.clone());
        a.data[i] += h;
        b.data[i] -= h;
        let fd = (objective(&a) - objective(&b)) / (2.0 * h);
        vjp_err = vjp_err.max((fd - grad.data[i]).abs() / gmax);
    }

    // second differences as nested central first differences
    let h = 2e-4;
    let val = |x: f64, y: f64| forward(&params, &[[x, y]]).unwrap()[0];
    let d1 = |x: f64, y: f64, dx: f64, dy: f64| (val(x + dx, y + dy) - val(x - dx, y - dy)) / (2.0 * h);
    let mut lap_err = 0.0f64;
    for p in &pts {
        let dxx = (d1(p[0] + h, p[1], h, 0.0) - d1(p[0] - h, p[1], h, 0.0)) / (2.0 * h);
        let dyy = (d1(p[0], p[1] + h, 0.0, h) - d1(p[0], p[1] - h, 0.0, h)) / (2.0 * h);
        let (_, lap) = laplacian_forward(&params, *p).unwrap();
        lap_err = lap_err.max((dxx + dyy - lap).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        energy_err <= C3_ENERGY_REL && vjp_err <= C3_VJP_REL && lap_err <= C3_LAP_ABS && secs < 10.0,
        format!(
            "energy gradient {energy_err:.2e} (≤ {C3_ENERGY_REL:e}), VJP {vjp_err:.2e} (≤ {C3_VJP_REL:e}), \
             Laplacian {lap_err:.2e} abs (≤ {C3_LAP_ABS:e}), {secs:.1} s (< 10 s)"
        ),
    )
}

fn c4_rates() -> Outcome {
    let start = Instant::now();
    let problem = manufactured_problem("sine").unwrap();
    let rule = triangle_rule(6).unwrap();
    let (mut hs, mut pens, mut cons) = (vec![], vec![], vec![]);
    let mut library_gap = 0.0f64;
    for n in [8, 16, 32, 64] {
        let space = build_space(&problem, n).unwrap();
        let (u, f) = (nodal(&space, sine_u), nodal(&space, sine_f));
        let (pen, con) = edge_terms(&space, &u, &f);
        let lib = energy_components(&space, &u, &f, &vec![0.0; u.len()], &rule);
        library_gap = library_gap
            .max((lib.interior_penalty - pen).abs() / pen)
            .max((lib.consistency + 2.0 * con).abs() / con.abs());
        hs.push(1.0 / n as f64);
        pens.push(pen);
        cons.push(con.abs());
    }
    let (rj, rc) = (fitted_rate(&hs, &pens), fitted_rate(&hs, &cons));
    let secs = start.elapsed().as_secs_f64();
    let inside = |r: f64, w: (f64, f64)| r >= w.0 && r <= w.1;
    outcome(
        inside(rj, C4_JUMP_RATE) && inside(rc, C4_CONS_RATE) && secs < 30.0,
        format!(
            "jump penalty rate {rj:.3} (in [{}, {}]), consistency rate {rc:.3} (in [{}, {}]), \
             library agreement {library_gap:.1e}, {secs:.1} s (< 30 s)",
            C4_JUMP_RATE.0, C4_JUMP_RATE.1, C4_CONS_RATE.0, C4_CONS_RATE.1
        ),
    )
}

fn c5_interpolation() -> Outcome {
    let start = Instant::now();
    let problem = manufactured_problem("sine").unwrap();
    let (mut hs, mut errs) = (vec![], vec![]);
    for n in [8, 16, 32, 64] {
        let space = build_space(&problem, n).unwrap();
        let u = nodal(&space, sine_u);
        let locals: Vec<LocalP2> = (0..space.num_elements()).map(|k| LocalP2::new(&space, k, &u)).collect();
        let rule = radon7();
        // points are generated cell by cell, in the order l2_error visits them
        let eval = |_: &[[f64; 2]]| -> Vec<f64> {
            locals.iter().flat_map(|loc| rule.iter().map(move |(l, _)| loc.value(*l))).collect()
        };
        hs.push(1.0 / n as f64);
        errs.push(l2_error(space.mesh(), &eval, sine_u));
    }
    let r = fitted_rate(&hs, &errs);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r >= C5_RATE.0 && r <= C5_RATE.1 && secs < 10.0,
        format!(
            "L2 interpolation rate {r:.3} (in [{}, {}]), errors {:.2e} … {:.2e}, {secs:.1} s (< 10 s)",
            C5_RATE.0,
            C5_RATE.1,
            errs[0],
            errs[errs.len() - 1]
        ),
    )
}

fn c6_quadrature() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut rules = 0;
    for p in 1..=6 {
        let rule = triangle_rule(p).unwrap();
        rules += 1;
        for a in 0..=p as u32 {
            for b in 0..=(p as u32 - a) {
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                let got: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(l, w)| w * l[1].powi(a as i32) * l[2].powi(b as i32))
                    .sum();
                worst = worst.max((got - exact).abs());
            }
        }
    }
    for n in 1..=4 {
        let rule = edge_rule(n).unwrap();
        rules += 1;
        for k in 0..=(2 * n as u32 - 1) {
            let got: f64 = rule.points.iter().zip(&rule.weights).map(|(t, w)| w * t.powi(k as i32)).sum();
            worst = worst.max((got - 1.0 / f64::from(k + 1)).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= C6_ABS && secs < 1.0,
        format!("{rules} rules, max monomial error {worst:.2e} (≤ {C6_ABS:e}), {secs:.3} s (< 1 s)"),
    )
}

fn c7_training_accuracy() -> Outcome {
    let runs = c7_runs();
    let errs: Vec<f64> = runs.iter().map(|r| r.l2).collect();
    let m = median(&errs);
    outcome(
        m <= C7_L2,
        format!(
            "median L2 error {m:.3e} (≤ {C7_L2:e}) over seeds, per seed {:.3e} {:.3e} {:.3e}, {} epochs",
            errs[0], errs[1], errs[2], C7_EPOCHS
        ),
    )
}

fn c8_jump_robustness() -> Outcome {
    let (full, nojump) = c8_runs();
    let ef = median(&full.iter().map(|r| r.l2).collect::<Vec<_>>());
    let en = median(&nojump.iter().map(|r| r.l2).collect::<Vec<_>>());
    let lf = median(&full.iter().map(|r| r.report.final_loss).collect::<Vec<_>>());
    let ln = median(&nojump.iter().map(|r| r.report.final_loss).collect::<Vec<_>>());
    outcome(
        en >= C8_RATIO * ef && ln <= lf,
        format!(
            "4 blocks, h=1/{C8_MESH}, {C8_EPOCHS} epochs: median L2 no-jump {en:.3e} vs full {ef:.3e} \
             (ratio {:.2}, need ≥ {C8_RATIO}); median loss no-jump {ln:.4e} vs full {lf:.4e} (need ≤)",
            en / ef
        ),
    )
}

fn c9_lshape() -> Outcome {
    let levels = c9_runs();
    let med: Vec<f64> = levels.iter().map(|runs| median(&runs.iter().map(|r| r.l2).collect::<Vec<_>>())).collect();
    let monotone = med.windows(2).all(|w| w[1] < w[0]);
    outcome(
        monotone && med[0] >= C9_LEVEL1.0 && med[0] <= C9_LEVEL1.1,
        format!(
            "median L2 by level 1..3: {:.3e} {:.3e} {:.3e} (decreasing: {monotone}; level 1 in [{}, {}]), {C9_EPOCHS} epochs",
            med[0], med[1], med[2], C9_LEVEL1.0, C9_LEVEL1.1
        ),
    )
}

fn c10_efficiency() -> Outcome {
    let problem = manufactured_problem("sine").unwrap();
    let space = build_space(&problem, 24).unwrap();
    let rule = triangle_rule(2).unwrap();
    let fe = c7_runs()[0].report.mean_epoch_ms(TIMING_WINDOW.0, TIMING_WINDOW.1);
    let cfg = TrainConfig { epochs: C10_EPOCHS, seed: 0, volume_precision: 2, ..TrainConfig::default() };
    let params = init_params(NetDims::new(2, 64, 2).unwrap(), 0);
    let col = train_collocation(&params, &space, &rule, &problem, &cfg).unwrap();
    let col_ms = col.mean_epoch_ms(TIMING_WINDOW.0, TIMING_WINDOW.1);
    let points = space.num_elements() * rule.len();
    outcome(
        fe * C10_SPEEDUP <= col_ms,
        format!(
            "h=1/24, precision 2, {points} quadrature points: FE {fe:.2} ms/epoch, collocation {col_ms:.2} ms/epoch, \
             speedup {:.2}× (≥ {C10_SPEEDUP}×), epochs {}..{}",
            col_ms / fe,
            TIMING_WINDOW.0,
            TIMING_WINDOW.1
        ),
    )
}

fn c11_oracle_dominance() -> Outcome {
    let (full, nojump) = c8_runs();
    let all = c7_runs().iter().chain(full).chain(nojump).chain(c9_runs().iter().flatten());
    let mut worst_margin = f64::INFINITY;
    let mut worst_label = String::new();
    let mut count = 0;
    let mut failures = Vec::new();
    for run in all {
        count += 1;
        match solve_fe_minimizer(&run.form) {
            Ok(sol) => {
                let margin = run.report.final_loss - sol.energy;
                if margin < worst_margin {
                    worst_margin = margin;
                    worst_label = run.label.clone();
                }
            }
            Err(e) => failures.push(format!("{}: {e}", run.label)),
        }
    }
    outcome(
        failures.is_empty() && worst_margin >= -C11_SLACK,
        format!(
            "{count} trained runs, smallest loss − oracle minimum {worst_margin:.4e} ({worst_label}; need ≥ −{C11_SLACK:e}){}",
            if failures.is_empty() { String::new() } else { format!("; oracle failures: {}", failures.join("; ")) }
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "form equivalence", c1_form_equivalence),
        (2, "positive semidefinite", c2_psd),
        (3, "gradient fidelity", c3_gradients),
        (4, "jump and consistency rates", c4_rates),
        (5, "interpolation order", c5_interpolation),
        (6, "quadrature exactness", c6_quadrature),
        (7, "training accuracy", c7_training_accuracy),
        (8, "jump-term robustness", c8_jump_robustness),
        (9, "L-shape study", c9_lshape),
        (10, "epoch time vs collocation", c10_efficiency),
        (11, "oracle dominance", c11_oracle_dominance),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        println!(
            "{} criterion {id:>2} ({name}): {} [{:.1} s]",
            if result.passed { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
        if !result.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
