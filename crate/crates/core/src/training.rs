//! Adam and the two training loops.
//!
//! FE-interpolation training evaluates the network only at the P2 nodes and
//! differentiates the assembled quadratic form; collocation training evaluates
//! `Δu_θ` at volume quadrature points through forward jets.

use std::fmt::Write as _;
use std::time::Instant;

use crate::dg_energy::{assemble_terms, energy_components, EnergyComponents, EnergyTerms, ProblemSpec, QuadraticEnergyForm};
use crate::diagnostics::{ResourceMeter, ResourceUsage};
use crate::fe_space::{FESpace, NodalVector};
use crate::quadrature::{map_to_element, TriangleRule};
use crate::resnet::{forward, forward_cached, laplacian_vjp, ParamGradient, Real, ResNetParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    FEInterp,
    Collocation,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::FEInterp => "fe",
            TrainMode::Collocation => "collocation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub seed: u64,
    pub alpha: f64,
    pub volume_precision: usize,
    pub include_jump_terms: bool,
    pub mode: TrainMode,
    /// 32 or 64.
    pub precision_bits: u32,
    /// Energy components are recorded every this many epochs (and at the
    /// first and last epoch); other rows leave them empty.
    pub component_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 20_000,
            seed: 0,
            alpha: 60.0,
            volume_precision: 2,
            include_jump_terms: true,
            mode: TrainMode::FEInterp,
            precision_bits: 64,
            component_every: 100,
        }
    }
}

impl TrainConfig {
    /// Zero epochs are accepted by the trainers (the report then holds only
    /// the initial loss); experiment configs require at least one.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.precision_bits != 32 && self.precision_bits != 64 {
            return bad(format!("precision_bits must be 32 or 64, got {}", self.precision_bits));
        }
        if self.component_every == 0 {
            return bad("component_every must be at least 1".into());
        }
        Ok(())
    }
}

/// Adam moments, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f64> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![T::zero(); len], v: vec![T::zero(); len], t: 0 }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Real>(
    state: &mut AdamState<T>,
    params: &mut ResNetParams<T>,
    grads: &ParamGradient<T>,
    config: &TrainConfig,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Structural(format!(
            "Adam shapes differ: params {n}, grads {}, moments {}/{}",
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    state.t += 1;
    let c = |v: f64| T::from_f64(v).unwrap();
    let (b1, b2) = (c(config.beta1), c(config.beta2));
    let (one, lr, eps) = (T::one(), c(config.learning_rate), c(config.eps));
    let bc1 = c(1.0 - config.beta1.powi(state.t as i32));
    let bc2 = c(1.0 - config.beta2.powi(state.t as i32));
    for i in 0..n {
        let g = grads.data[i];
        let m = b1 * state.m[i] + (one - b1) * g;
        let v = b2 * state.v[i] + (one - b2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        params.data[i] = params.data[i] - lr * (m / bc1) / ((v / bc2).sqrt() + eps);
    }
    Ok(())
}

/// One row of the training history. `loss` is evaluated at the parameters
/// entering the epoch, before the update.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub components: Option<LossComponents>,
    pub wall_ms: f64,
}

/// Contributions to the loss. For FE training these are the volume term, the
/// consistency term, and the α-scaled jump and boundary penalties (they sum
/// to the loss when jumps are on; with jumps off the two jump columns are
/// still reported but excluded from the loss). Collocation fills only
/// `volume` and `boundary_pen`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub volume: f64,
    pub consistency: Option<f64>,
    pub jump_pen: Option<f64>,
    pub boundary_pen: f64,
}

impl LossComponents {
    fn from_energy(c: &EnergyComponents, alpha: f64) -> Self {
        LossComponents {
            volume: c.volume,
            consistency: Some(c.consistency),
            jump_pen: Some(alpha * c.interior_penalty),
            boundary_pen: alpha * c.boundary_penalty,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    /// Loss at the final parameters.
    pub final_loss: f64,
    pub final_components: LossComponents,
    pub final_params: ResNetParams<f64>,
    /// Filled by the caller once an exact solution is available.
    pub l2_error: Option<f64>,
    /// Points the network is evaluated at per epoch (DOFs for FE training,
    /// quadrature points plus boundary DOFs for collocation).
    pub training_points: usize,
    pub resources: ResourceUsage,
}

impl RunReport {
    pub fn epochs(&self) -> usize {
        self.history.len()
    }

    /// Mean wall time per epoch over `[from, to)`, clamped to the history.
    pub fn mean_epoch_ms(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.history.len());
        let from = from.min(to);
        let window = if to > from { &self.history[from..to] } else { &self.history[..] };
        if window.is_empty() {
            return 0.0;
        }
        window.iter().map(|r| r.wall_ms).sum::<f64>() / window.len() as f64
    }

    /// CSV with one row per epoch and `final` and `l2_error` footer rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,volume,consistency,jump_pen,boundary_pen,wall_ms\n");
        let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        let comp = |c: &Option<LossComponents>| match c {
            Some(c) => format!(
                "{:e},{},{},{:e}",
                c.volume,
                opt(c.consistency),
                opt(c.jump_pen),
                c.boundary_pen
            ),
            None => ",,,".to_string(),
        };
        for r in &self.history {
            let _ = writeln!(s, "{},{:e},{},{:.6}", r.epoch, r.loss, comp(&r.components), r.wall_ms);
        }
        let total: f64 = self.history.iter().map(|r| r.wall_ms).sum();
        let _ = writeln!(s, "final,{:e},{},{:.6}", self.final_loss, comp(&Some(self.final_components)), total);
        let _ = writeln!(s, "l2_error,{},,,,,", opt(self.l2_error));
        s
    }
}

fn to_real<T: Real>(v: f64) -> T {
    T::from_f64(v).unwrap()
}

fn nodal_values<T: Real>(params: &ResNetParams<T>, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    Ok(forward(params, points)?.iter().map(|v| v.to_f64().unwrap()).collect())
}

fn fe_components(space: &FESpace, form: &QuadraticEnergyForm, u: &[f64], rule: &TriangleRule) -> LossComponents {
    let c = energy_components(space, u, &form.f_nodal, &form.g_nodal, rule);
    LossComponents::from_energy(&c, form.alpha)
}

/// Minimise the assembled energy over networks: per epoch, `U = u_θ(nodes)`,
/// loss `UᵀAU + bᵀU + c`, cotangent `2AU + b`, one VJP and one Adam step.
pub fn train_fe(
    params: &ResNetParams<f64>,
    form: &QuadraticEnergyForm,
    space: &FESpace,
    config: &TrainConfig,
) -> Result<RunReport> {
    config.validate()?;
    if form.num_dofs() != space.num_dofs() {
        return Err(Error::Structural(format!(
            "form has {} DOFs, space has {}",
            form.num_dofs(),
            space.num_dofs()
        )));
    }
    match config.precision_bits {
        32 => train_fe_impl(params.cast::<f32>(), form, space, config),
        _ => train_fe_impl(params.clone(), form, space, config),
    }
}

fn train_fe_impl<T: Real>(
    mut params: ResNetParams<T>,
    form: &QuadraticEnergyForm,
    space: &FESpace,
    config: &TrainConfig,
) -> Result<RunReport> {
    let meter = ResourceMeter::start();
    let rule = crate::quadrature::triangle_rule(form.volume_precision)?;
    let points = &space.dof_coords;
    let mut adam = AdamState::<T>::new(params.len());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let start = Instant::now();
        let (u, cache) = forward_cached(&params, points)?;
        let u: Vec<f64> = u.iter().map(|v| v.to_f64().unwrap()).collect();
        let (loss, grad_u) = form.value_and_gradient(&u);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let cot: Vec<T> = grad_u.iter().map(|&g| to_real(g)).collect();
        let grad = cache.vjp(&params, &cot)?;
        adam_step(&mut adam, &mut params, &grad, config)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let components = (epoch % config.component_every == 0 || epoch + 1 == config.epochs)
            .then(|| fe_components(space, form, &u, &rule));
        history.push(EpochRecord { epoch, loss, components, wall_ms });
    }
    let u = nodal_values(&params, points)?;
    let final_loss = form.value(&u);
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: config.epochs });
    }
    Ok(RunReport {
        config: config.clone(),
        history,
        final_loss,
        final_components: fe_components(space, form, &u, &rule),
        final_params: params.cast(),
        l2_error: None,
        training_points: points.len(),
        resources: meter.finish(),
    })
}

/// Quadrature collocation data: physical points, weights and source values.
#[derive(Debug, Clone)]
pub struct CollocationSet {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub source: Vec<f64>,
}

impl CollocationSet {
    pub fn new(space: &FESpace, rule: &TriangleRule, problem: &ProblemSpec) -> Result<Self> {
        let mesh = space.mesh();
        let mut points = Vec::with_capacity(mesh.num_triangles() * rule.len());
        let mut weights = Vec::with_capacity(points.capacity());
        for k in 0..mesh.num_triangles() {
            let det = 2.0 * mesh.area(k);
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                points.push(map_to_element(mesh, k, *l));
                weights.push(det * w);
            }
        }
        let source: Vec<f64> = points.iter().map(|&p| (problem.f)(p)).collect();
        if let Some(i) = source.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteNode { node: i, x: points[i][0], y: points[i][1], value: source[i] });
        }
        Ok(CollocationSet { points, weights, source })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Boundary penalty `α Σ_e (1/h_e) ∫_e |I(u − g)|²` as a form in the
/// boundary nodal values only.
pub fn boundary_form(space: &FESpace, rule: &TriangleRule, alpha: f64, g_nodal: &NodalVector) -> Result<QuadraticEnergyForm> {
    let zero = NodalVector::zeros(space.num_dofs());
    let full = assemble_terms(space, rule, alpha, EnergyTerms::BOUNDARY_ONLY, &zero, g_nodal)?;
    Ok(full.restrict(&space.boundary_dofs))
}

/// Baseline: minimise `Σ_q w_q (Δu_θ(x_q) + f(x_q))²` plus the boundary
/// penalty on the interpolant of `u_θ` along the boundary.
pub fn train_collocation(
    params: &ResNetParams<f64>,
    space: &FESpace,
    volume_rule: &TriangleRule,
    problem: &ProblemSpec,
    config: &TrainConfig,
) -> Result<RunReport> {
    config.validate()?;
    let set = CollocationSet::new(space, volume_rule, problem)?;
    let g = problem.trace_nodal(space)?;
    let bform = boundary_form(space, volume_rule, config.alpha, &g)?;
    let bpoints: Vec<[f64; 2]> = space.boundary_dofs.iter().map(|&i| space.dof_coords[i]).collect();
    match config.precision_bits {
        32 => train_collocation_impl(params.cast::<f32>(), &set, &bform, &bpoints, config),
        _ => train_collocation_impl(params.clone(), &set, &bform, &bpoints, config),
    }
}

/// Collocation loss, split into its volume and boundary parts.
pub fn collocation_loss<T: Real>(
    params: &ResNetParams<T>,
    set: &CollocationSet,
    bform: &QuadraticEnergyForm,
    bpoints: &[[f64; 2]],
) -> Result<LossComponents> {
    let (_, laps) = crate::resnet::laplacian_batch(params, &set.points)?;
    let volume = laps
        .iter()
        .zip(&set.weights)
        .zip(&set.source)
        .map(|((l, w), f)| {
            let r = l.to_f64().unwrap() + f;
            w * r * r
        })
        .sum();
    let ub = nodal_values(params, bpoints)?;
    Ok(LossComponents { volume, consistency: None, jump_pen: None, boundary_pen: bform.value(&ub) })
}

fn train_collocation_impl<T: Real>(
    mut params: ResNetParams<T>,
    set: &CollocationSet,
    bform: &QuadraticEnergyForm,
    bpoints: &[[f64; 2]],
    config: &TrainConfig,
) -> Result<RunReport> {
    let meter = ResourceMeter::start();
    let mut adam = AdamState::<T>::new(params.len());
    let mut history = Vec::with_capacity(config.epochs);
    let two = to_real::<T>(2.0);
    let weights: Vec<T> = set.weights.iter().map(|&w| to_real(w)).collect();
    let source: Vec<T> = set.source.iter().map(|&f| to_real(f)).collect();
    for epoch in 0..config.epochs {
        let start = Instant::now();
        let (laps, mut grad) = laplacian_vjp(&params, &set.points, |i, l| two * weights[i] * (l + source[i]))?;
        let volume: f64 = laps
            .iter()
            .zip(&set.weights)
            .zip(&set.source)
            .map(|((l, w), f)| {
                let r = l.to_f64().unwrap() + f;
                w * r * r
            })
            .sum();
        let (ub, cache) = forward_cached(&params, bpoints)?;
        let ub: Vec<f64> = ub.iter().map(|v| v.to_f64().unwrap()).collect();
        let (boundary_pen, gb) = bform.value_and_gradient(&ub);
        let loss = volume + boundary_pen;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let cot: Vec<T> = gb.iter().map(|&g| to_real(g)).collect();
        grad.add_assign(&cache.vjp(&params, &cot)?);
        adam_step(&mut adam, &mut params, &grad, config)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let components = (epoch % config.component_every == 0 || epoch + 1 == config.epochs).then_some(LossComponents {
            volume,
            consistency: None,
            jump_pen: None,
            boundary_pen,
        });
        history.push(EpochRecord { epoch, loss, components, wall_ms });
    }
    let final_components = collocation_loss(&params, set, bform, bpoints)?;
    let final_loss = final_components.volume + final_components.boundary_pen;
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: config.epochs });
    }
    Ok(RunReport {
        config: TrainConfig { mode: TrainMode::Collocation, ..config.clone() },
        history,
        final_loss,
        final_components,
        final_params: params.cast(),
        l2_error: None,
        training_points: set.len() + bpoints.len(),
        resources: meter.finish(),
    })
}
