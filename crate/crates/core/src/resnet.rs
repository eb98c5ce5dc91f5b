//! Residual network
//!
//! ```text
//! u(x) = C_o ∘ bl_L ∘ … ∘ bl_1 ∘ σ ∘ C_i (x)
//! bl_k(z) = σ(W_2k σ(W_1k z + b_1k) + b_2k + z)
//! ```
//!
//! with `σ = tanh`, `C_i(x) = W_i x + b_i` and `C_o(z) = w_o·z + b_o`.
//! Evaluation is batched: a chunk of points is a `P × N` matrix and every
//! affine map is one GEMM. Reverse mode is written out for this architecture;
//! Laplacians come from second-order jets along each coordinate direction,
//! which have their own hand-written reverse pass for collocation training.
//!
//! Parameters are stored flat in this order: `W_i` (N×d, row-major), `b_i`,
//! then per block `W_1k` (N×N), `b_1k`, `W_2k` (N×N), `b_2k`, then `w_o`, `b_o`.

use std::fmt::{Debug, Write as _};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use num_traits::{Float, FromPrimitive};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{activation, par};
use crate::{Error, Result};

/// Floating-point type the network can run in (`f32` or `f64`).
pub trait Real:
    Float + FromPrimitive + std::ops::AddAssign + ndarray::LinalgScalar + ndarray::ScalarOperand + Send + Sync + Debug + Default + 'static
{
    /// In-place `tanh` over a contiguous slice.
    fn tanh_slice(v: &mut [Self]);
}

impl Real for f32 {
    fn tanh_slice(v: &mut [f32]) {
        activation::tanh_slice_f32(v);
    }
}

impl Real for f64 {
    fn tanh_slice(v: &mut [f64]) {
        activation::tanh_slice_f64(v);
    }
}

/// Points per GEMM chunk.
const CHUNK: usize = 512;
/// Jets stack `1 + 2d` rows per point, so their chunks are smaller.
const JET_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetDims {
    /// Input dimension `d`.
    pub input: usize,
    /// Hidden width `N`.
    pub width: usize,
    /// Number of residual blocks `L`.
    pub blocks: usize,
}

impl NetDims {
    pub fn new(input: usize, width: usize, blocks: usize) -> Result<Self> {
        if input == 0 || width == 0 || blocks == 0 {
            return Err(Error::InvalidArgument(format!(
                "network dimensions must be positive (d={input}, N={width}, L={blocks})"
            )));
        }
        Ok(NetDims { input, width, blocks })
    }

    pub fn param_count(&self) -> usize {
        let (d, n, l) = (self.input, self.width, self.blocks);
        n * d + n + l * (2 * n * n + 2 * n) + n + 1
    }

    fn block_offset(&self, k: usize) -> usize {
        let n = self.width;
        n * self.input + n + k * (2 * n * n + 2 * n)
    }

    fn output_offset(&self) -> usize {
        self.block_offset(self.blocks)
    }
}

/// All weights and biases, flat. [`ParamGradient`] shares the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ResNetParams<T = f64> {
    pub dims: NetDims,
    pub data: Vec<T>,
}

/// `∂loss/∂θ`, same layout as [`ResNetParams`].
pub type ParamGradient<T = f64> = ResNetParams<T>;

impl<T: Real> ResNetParams<T> {
    pub fn zeros(dims: NetDims) -> Self {
        ResNetParams { dims, data: vec![T::zero(); dims.param_count()] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Real>(&self) -> ResNetParams<U> {
        ResNetParams {
            dims: self.dims,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap()).collect(),
        }
    }

    pub fn w_in(&self) -> ArrayView2<'_, T> {
        let (d, n) = (self.dims.input, self.dims.width);
        ArrayView2::from_shape((n, d), &self.data[..n * d]).unwrap()
    }

    pub fn b_in(&self) -> ArrayView1<'_, T> {
        let (d, n) = (self.dims.input, self.dims.width);
        ArrayView1::from(&self.data[n * d..n * d + n])
    }

    /// `(W_1k, b_1k, W_2k, b_2k)`.
    pub fn block(&self, k: usize) -> (ArrayView2<'_, T>, ArrayView1<'_, T>, ArrayView2<'_, T>, ArrayView1<'_, T>) {
        let n = self.dims.width;
        let o = self.dims.block_offset(k);
        let w1 = ArrayView2::from_shape((n, n), &self.data[o..o + n * n]).unwrap();
        let b1 = ArrayView1::from(&self.data[o + n * n..o + n * n + n]);
        let o2 = o + n * n + n;
        let w2 = ArrayView2::from_shape((n, n), &self.data[o2..o2 + n * n]).unwrap();
        let b2 = ArrayView1::from(&self.data[o2 + n * n..o2 + n * n + n]);
        (w1, b1, w2, b2)
    }

    pub fn w_out(&self) -> ArrayView1<'_, T> {
        let o = self.dims.output_offset();
        ArrayView1::from(&self.data[o..o + self.dims.width])
    }

    pub fn b_out(&self) -> T {
        self.data[self.dims.output_offset() + self.dims.width]
    }

    fn parts_mut(&mut self) -> ParamsMut<'_, T> {
        let dims = self.dims;
        let (d, n) = (dims.input, dims.width);
        let (w_in, rest) = self.data.split_at_mut(n * d);
        let (b_in, mut rest) = rest.split_at_mut(n);
        let mut blocks = Vec::with_capacity(dims.blocks);
        for _ in 0..dims.blocks {
            let (w1, r) = rest.split_at_mut(n * n);
            let (b1, r) = r.split_at_mut(n);
            let (w2, r) = r.split_at_mut(n * n);
            let (b2, r) = r.split_at_mut(n);
            blocks.push((
                ArrayViewMut2::from_shape((n, n), w1).unwrap(),
                ArrayViewMut1::from(b1),
                ArrayViewMut2::from_shape((n, n), w2).unwrap(),
                ArrayViewMut1::from(b2),
            ));
            rest = r;
        }
        let (w_out, b_out) = rest.split_at_mut(n);
        ParamsMut {
            w_in: ArrayViewMut2::from_shape((n, d), w_in).unwrap(),
            b_in: ArrayViewMut1::from(b_in),
            blocks,
            w_out: ArrayViewMut1::from(w_out),
            b_out: &mut b_out[0],
        }
    }

    /// `self += other`, entrywise.
    pub fn add_assign(&mut self, other: &ResNetParams<T>) {
        assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Checkpoint text: a version line, the dims, then every parameter block in
    /// storage order, one value per line, under `#` section comments. Values
    /// are printed in shortest round-trip form so reading restores them bit
    /// for bit.
    pub fn to_checkpoint(&self) -> String {
        let d = self.dims;
        let mut s = String::new();
        let _ = writeln!(s, "dgnet-resnet 1");
        let _ = writeln!(s, "dims {} {} {}", d.input, d.width, d.blocks);
        let mut sections: Vec<(String, usize)> = vec![("w_in".into(), d.width * d.input), ("b_in".into(), d.width)];
        for k in 0..d.blocks {
            sections.push((format!("w1 {k}"), d.width * d.width));
            sections.push((format!("b1 {k}"), d.width));
            sections.push((format!("w2 {k}"), d.width * d.width));
            sections.push((format!("b2 {k}"), d.width));
        }
        sections.push(("w_out".into(), d.width));
        sections.push(("b_out".into(), 1));
        let mut i = 0;
        for (name, len) in sections {
            let _ = writeln!(s, "# {name}");
            for v in &self.data[i..i + len] {
                let _ = writeln!(s, "{}", fmt_real(*v));
            }
            i += len;
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some("dgnet-resnet 1") => {}
            other => return Err(Error::Parse(format!("unrecognised checkpoint header {other:?}"))),
        }
        let dims_line = lines.next().ok_or_else(|| Error::Parse("missing dims line".into()))?;
        let nums: Vec<usize> = dims_line
            .strip_prefix("dims ")
            .ok_or_else(|| Error::Parse(format!("bad dims line {dims_line:?}")))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad dimension {t:?}"))))
            .collect::<Result<_>>()?;
        if nums.len() != 3 {
            return Err(Error::Parse(format!("bad dims line {dims_line:?}")));
        }
        let dims = NetDims::new(nums[0], nums[1], nums[2])?;
        let data: Vec<T> = lines
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map(|v| T::from_f64(v).unwrap())
                    .map_err(|_| Error::Parse(format!("bad parameter value {l:?}")))
            })
            .collect::<Result<_>>()?;
        if data.len() != dims.param_count() {
            return Err(Error::Parse(format!(
                "expected {} parameters, found {}",
                dims.param_count(),
                data.len()
            )));
        }
        Ok(ResNetParams { dims, data })
    }
}

fn fmt_real<T: Real>(v: T) -> String {
    // f32 values print through f32's own shortest representation.
    if std::mem::size_of::<T>() == 4 {
        format!("{:?}", v.to_f32().unwrap())
    } else {
        format!("{:?}", v.to_f64().unwrap())
    }
}

struct ParamsMut<'a, T> {
    w_in: ArrayViewMut2<'a, T>,
    b_in: ArrayViewMut1<'a, T>,
    #[allow(clippy::type_complexity)]
    blocks: Vec<(ArrayViewMut2<'a, T>, ArrayViewMut1<'a, T>, ArrayViewMut2<'a, T>, ArrayViewMut1<'a, T>)>,
    w_out: ArrayViewMut1<'a, T>,
    b_out: &'a mut T,
}

/// Glorot-uniform weights, zero biases, from a seeded ChaCha generator.
pub fn init_params(dims: NetDims, seed: u64) -> ResNetParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ResNetParams::<f64>::zeros(dims);
    let glorot = |fan_in: usize, fan_out: usize| {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Uniform::new_inclusive(-a, a)
    };
    let n = dims.width;
    {
        let mut parts = p.parts_mut();
        let u = glorot(dims.input, n);
        parts.w_in.iter_mut().for_each(|w| *w = u.sample(&mut rng));
        let u = glorot(n, n);
        for (w1, _, w2, _) in parts.blocks.iter_mut() {
            w1.iter_mut().for_each(|w| *w = u.sample(&mut rng));
            w2.iter_mut().for_each(|w| *w = u.sample(&mut rng));
        }
        let u = glorot(n, 1);
        parts.w_out.iter_mut().for_each(|w| *w = u.sample(&mut rng));
    }
    p
}

fn points_matrix<T: Real>(points: &[[f64; 2]], d: usize) -> Result<Array2<T>> {
    if d != 2 {
        return Err(Error::InvalidArgument(format!("points are 2-D but the network expects d={d}")));
    }
    let mut x = Array2::zeros((points.len(), 2));
    for (i, p) in points.iter().enumerate() {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::NonFiniteLayer { layer: format!("input point {i}") });
        }
        x[[i, 0]] = T::from_f64(p[0]).unwrap();
        x[[i, 1]] = T::from_f64(p[1]).unwrap();
    }
    Ok(x)
}

fn check_finite<T: Real>(a: &Array2<T>, layer: impl FnOnce() -> String) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteLayer { layer: layer() })
    }
}

fn tanh_inplace<T: Real, S: ndarray::DataMut<Elem = T>>(a: &mut ndarray::ArrayBase<S, ndarray::Ix2>) {
    match a.as_slice_memory_order_mut() {
        Some(v) => T::tanh_slice(v),
        None => a.mapv_inplace(|v| v.tanh()),
    }
}

/// Activations of one chunk, kept for the reverse pass.
#[derive(Debug, Clone)]
struct ChunkActivations<T> {
    x: Array2<T>,
    /// `z_0 = σ(C_i x)` followed by `(a_k, z_k)` per block.
    z0: Array2<T>,
    blocks: Vec<(Array2<T>, Array2<T>)>,
}

fn forward_chunk<T: Real>(params: &ResNetParams<T>, x: Array2<T>) -> Result<(Array1<T>, ChunkActivations<T>)> {
    let mut z = x.dot(&params.w_in().t()) + &params.b_in();
    tanh_inplace(&mut z);
    check_finite(&z, || "input layer".into())?;
    let z0 = z.clone();
    let mut blocks = Vec::with_capacity(params.dims.blocks);
    for k in 0..params.dims.blocks {
        let (w1, b1, w2, b2) = params.block(k);
        let mut a = z.dot(&w1.t()) + &b1;
        tanh_inplace(&mut a);
        check_finite(&a, || format!("block {k} inner activation"))?;
        let mut zn = a.dot(&w2.t()) + &b2 + &z;
        tanh_inplace(&mut zn);
        check_finite(&zn, || format!("block {k} output"))?;
        blocks.push((a, zn.clone()));
        z = zn;
    }
    let out = z.dot(&params.w_out()) + params.b_out();
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteLayer { layer: "output layer".into() });
    }
    Ok((out, ChunkActivations { x, z0, blocks }))
}

fn backward_chunk<T: Real>(params: &ResNetParams<T>, act: &ChunkActivations<T>, cot: ArrayView1<'_, T>) -> ResNetParams<T> {
    let mut grad = ResNetParams::zeros(params.dims);
    let one = T::one();
    {
        let mut g = grad.parts_mut();
        let z_last = act.blocks.last().map_or(&act.z0, |b| &b.1);
        g.w_out.assign(&z_last.t().dot(&cot));
        *g.b_out = cot.sum();
        // dz = λ w_oᵀ
        let col = cot.view().insert_axis(Axis(1));
        let mut dz: Array2<T> = col.dot(&params.w_out().insert_axis(Axis(0)));
        for k in (0..params.dims.blocks).rev() {
            let (w1, _, w2, _) = params.block(k);
            let (a, zk) = &act.blocks[k];
            let z_prev = if k == 0 { &act.z0 } else { &act.blocks[k - 1].1 };
            let mut d2 = dz;
            Zip::from(&mut d2).and(zk).for_each(|d, &z| *d = *d * (one - z * z));
            let (gw1, gb1, gw2, gb2) = &mut g.blocks[k];
            gb2.assign(&d2.sum_axis(Axis(0)));
            gw2.assign(&d2.t().dot(a));
            let mut d1 = d2.dot(&w2);
            Zip::from(&mut d1).and(a).for_each(|d, &v| *d = *d * (one - v * v));
            gb1.assign(&d1.sum_axis(Axis(0)));
            gw1.assign(&d1.t().dot(z_prev));
            dz = d1.dot(&w1) + &d2;
        }
        Zip::from(&mut dz).and(&act.z0).for_each(|d, &z| *d = *d * (one - z * z));
        g.b_in.assign(&dz.sum_axis(Axis(0)));
        g.w_in.assign(&dz.t().dot(&act.x));
    }
    grad
}

/// Network values at every point.
pub fn forward<T: Real>(params: &ResNetParams<T>, points: &[[f64; 2]]) -> Result<Vec<T>> {
    let d = params.dims.input;
    let chunks = par::map_chunks(points, CHUNK, |_, c| {
        let x = points_matrix::<T>(c, d)?;
        forward_chunk(params, x).map(|(out, _)| out)
    });
    let mut out = Vec::with_capacity(points.len());
    for c in chunks {
        out.extend(c?.iter().copied());
    }
    Ok(out)
}

/// Forward pass that keeps the activations for a later [`ForwardCache::vjp`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    chunks: Vec<ChunkActivations<T>>,
    len: usize,
}

pub fn forward_cached<T: Real>(params: &ResNetParams<T>, points: &[[f64; 2]]) -> Result<(Vec<T>, ForwardCache<T>)> {
    let d = params.dims.input;
    let chunks = par::map_chunks(points, CHUNK, |_, c| {
        let x = points_matrix::<T>(c, d)?;
        forward_chunk(params, x)
    });
    let mut out = Vec::with_capacity(points.len());
    let mut acts = Vec::with_capacity(chunks.len());
    for c in chunks {
        let (o, a) = c?;
        out.extend(o.iter().copied());
        acts.push(a);
    }
    Ok((out, ForwardCache { chunks: acts, len: points.len() }))
}

impl<T: Real> ForwardCache<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `∂/∂θ Σ_i λ_i u(x_i)` for the cached points. Chunk gradients are summed
    /// in chunk order.
    pub fn vjp(&self, params: &ResNetParams<T>, cotangents: &[T]) -> Result<ParamGradient<T>> {
        if cotangents.len() != self.len {
            return Err(Error::Structural(format!(
                "{} cotangents for {} points",
                cotangents.len(),
                self.len
            )));
        }
        let starts: Vec<usize> = self
            .chunks
            .iter()
            .scan(0, |s, c| {
                let start = *s;
                *s += c.x.nrows();
                Some(start)
            })
            .collect();
        let parts = par::map_range(self.chunks.len(), |i| {
            let act = &self.chunks[i];
            let cot = ArrayView1::from(&cotangents[starts[i]..starts[i] + act.x.nrows()]);
            backward_chunk(params, act, cot)
        });
        let mut total = ResNetParams::zeros(params.dims);
        for p in &parts {
            total.add_assign(p);
        }
        Ok(total)
    }
}

/// Reverse-mode gradient of `Σ_i λ_i u(x_i)` with respect to every parameter.
pub fn vjp<T: Real>(params: &ResNetParams<T>, points: &[[f64; 2]], cotangents: &[T]) -> Result<ParamGradient<T>> {
    if cotangents.len() != points.len() {
        return Err(Error::Structural(format!(
            "{} cotangents for {} points",
            cotangents.len(),
            points.len()
        )));
    }
    let (_, cache) = forward_cached(params, points)?;
    cache.vjp(params, cotangents)
}

/// Second-order jets along each input direction for one chunk. Row block `0`
/// is the value; for direction `k`, row blocks `1 + 2k` and `2 + 2k` hold the
/// first and second directional derivatives.
struct JetLayer<T> {
    /// Outputs `σ(p)` with their jets.
    out: Array2<T>,
    /// Pre-activation tangents (the value block is unused).
    pre: Array2<T>,
}

struct JetActivations<T> {
    x: Array2<T>,
    z0: JetLayer<T>,
    blocks: Vec<(JetLayer<T>, JetLayer<T>)>,
}

/// Apply tanh to a stacked jet in place, returning the pre-activation copy.
fn tanh_jet<T: Real>(stack: &mut Array2<T>, p: usize, dirs: usize) -> Array2<T> {
    let pre = stack.clone();
    let two = T::from_f64(2.0).unwrap();
    let one = T::one();
    {
        let (val, mut rest) = stack.view_mut().split_at(Axis(0), p);
        let mut val = val;
        tanh_inplace(&mut val);
        for k in 0..dirs {
            let (mut d1, r) = rest.split_at(Axis(0), p);
            let (mut d2, r2) = r.split_at(Axis(0), p);
            Zip::from(&mut d1).and(&mut d2).and(&val).for_each(|t1v, t2v, &s| {
                let t1 = one - s * s;
                let t2 = -two * s * t1;
                let p1 = *t1v;
                let p2 = *t2v;
                *t1v = t1 * p1;
                *t2v = t1 * p2 + t2 * p1 * p1;
            });
            rest = r2;
            let _ = k;
        }
    }
    pre
}

fn jet_forward_chunk<T: Real>(params: &ResNetParams<T>, x: Array2<T>) -> Result<(Array1<T>, Array1<T>, JetActivations<T>)> {
    let p = x.nrows();
    let d = params.dims.input;
    let n = params.dims.width;
    let rows = (1 + 2 * d) * p;
    let w_in = params.w_in();
    let mut stack = Array2::<T>::zeros((rows, n));
    stack.slice_mut(s![0..p, ..]).assign(&(x.dot(&w_in.t()) + &params.b_in()));
    for k in 0..d {
        let col = w_in.column(k);
        let mut d1 = stack.slice_mut(s![(1 + 2 * k) * p..(2 + 2 * k) * p, ..]);
        d1.rows_mut().into_iter().for_each(|mut r| r.assign(&col));
    }
    let pre = tanh_jet(&mut stack, p, d);
    check_finite(&stack, || "input layer".into())?;
    let z0 = JetLayer { out: stack, pre };
    let mut blocks = Vec::with_capacity(params.dims.blocks);
    let mut z = &z0.out;
    let mut owned: Vec<(JetLayer<T>, JetLayer<T>)> = Vec::new();
    for k in 0..params.dims.blocks {
        let (w1, b1, w2, b2) = params.block(k);
        let mut a = z.dot(&w1.t());
        {
            let mut v = a.slice_mut(s![0..p, ..]);
            v += &b1;
        }
        let a_pre = tanh_jet(&mut a, p, d);
        check_finite(&a, || format!("block {k} inner activation"))?;
        let mut r = a.dot(&w2.t()) + z;
        {
            let mut v = r.slice_mut(s![0..p, ..]);
            v += &b2;
        }
        let r_pre = tanh_jet(&mut r, p, d);
        check_finite(&r, || format!("block {k} output"))?;
        owned.push((JetLayer { out: a, pre: a_pre }, JetLayer { out: r, pre: r_pre }));
        z = &owned.last().unwrap().1.out;
    }
    blocks.append(&mut owned);
    let z_last = blocks.last().map_or(&z0.out, |b| &b.1.out);
    let w_out = params.w_out();
    let all = z_last.dot(&w_out);
    let values = all.slice(s![0..p]).mapv(|v| v + params.b_out());
    let mut lap = Array1::<T>::zeros(p);
    for k in 0..d {
        lap += &all.slice(s![(2 + 2 * k) * p..(3 + 2 * k) * p]);
    }
    if !values.iter().chain(lap.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFiniteLayer { layer: "output layer".into() });
    }
    Ok((values, lap, JetActivations { x, z0, blocks }))
}

/// Reverse pass through a tanh jet: given cotangents of the outputs, return
/// cotangents of the pre-activations.
fn tanh_jet_backward<T: Real>(bar: &Array2<T>, layer: &JetLayer<T>, p: usize, dirs: usize) -> Array2<T> {
    let one = T::one();
    let two = T::from_f64(2.0).unwrap();
    let m = p * bar.ncols();
    let dim = bar.raw_dim();
    let (bar, out_s, pre) = (bar.as_standard_layout(), layer.out.as_standard_layout(), layer.pre.as_standard_layout());
    let (bar, out_s, pre) = (bar.as_slice().unwrap(), out_s.as_slice().unwrap(), pre.as_slice().unwrap());
    let mut res = vec![T::zero(); bar.len()];
    let (val, rest) = res.split_at_mut(m);
    for i in 0..m {
        let s = out_s[i];
        val[i] = bar[i] * (one - s * s);
    }
    for k in 0..dirs {
        let (o1, o2) = rest[2 * k * m..(2 * k + 2) * m].split_at_mut(m);
        let b1 = &bar[(1 + 2 * k) * m..(2 + 2 * k) * m];
        let b2 = &bar[(2 + 2 * k) * m..(3 + 2 * k) * m];
        let q1 = &pre[(1 + 2 * k) * m..(2 + 2 * k) * m];
        let q2 = &pre[(2 + 2 * k) * m..(3 + 2 * k) * m];
        for i in 0..m {
            let s = out_s[i];
            let t1 = one - s * s;
            let t2 = -two * s * t1;
            let t3 = -two * t1 * t1 - two * s * t2;
            o2[i] = b2[i] * t1;
            o1[i] = b1[i] * t1 + b2[i] * two * t2 * q1[i];
            val[i] = val[i] + b1[i] * t2 * q1[i] + b2[i] * (t2 * q2[i] + t3 * q1[i] * q1[i]);
        }
    }
    Array2::from_shape_vec(dim, res).unwrap()
}

fn jet_backward_chunk<T: Real>(
    params: &ResNetParams<T>,
    act: &JetActivations<T>,
    value_cot: ArrayView1<'_, T>,
    lap_cot: ArrayView1<'_, T>,
) -> ResNetParams<T> {
    let p = act.x.nrows();
    let d = params.dims.input;
    let n = params.dims.width;
    let rows = (1 + 2 * d) * p;
    let mut grad = ResNetParams::zeros(params.dims);
    {
        let mut g = grad.parts_mut();
        // output: u = z·w_o + b_o on the value rows, Δu = Σ_k z''_k·w_o
        let mut cot = Array1::<T>::zeros(rows);
        cot.slice_mut(s![0..p]).assign(&value_cot);
        for k in 0..d {
            cot.slice_mut(s![(2 + 2 * k) * p..(3 + 2 * k) * p]).assign(&lap_cot);
        }
        let z_last = act.blocks.last().map_or(&act.z0.out, |b| &b.1.out);
        g.w_out.assign(&z_last.t().dot(&cot));
        *g.b_out = value_cot.sum();
        let mut zbar: Array2<T> = cot.insert_axis(Axis(1)).dot(&params.w_out().insert_axis(Axis(0)));
        for k in (0..params.dims.blocks).rev() {
            let (w1, _, w2, _) = params.block(k);
            let (a_layer, r_layer) = &act.blocks[k];
            let z_prev = if k == 0 { &act.z0.out } else { &act.blocks[k - 1].1.out };
            let rbar = tanh_jet_backward(&zbar, r_layer, p, d);
            let (gw1, gb1, gw2, gb2) = &mut g.blocks[k];
            gb2.assign(&rbar.slice(s![0..p, ..]).sum_axis(Axis(0)));
            gw2.assign(&rbar.t().dot(&a_layer.out));
            let abar_out = rbar.dot(&w2);
            let abar = tanh_jet_backward(&abar_out, a_layer, p, d);
            gb1.assign(&abar.slice(s![0..p, ..]).sum_axis(Axis(0)));
            gw1.assign(&abar.t().dot(z_prev));
            zbar = abar.dot(&w1) + &rbar;
        }
        let pbar = tanh_jet_backward(&zbar, &act.z0, p, d);
        let val = pbar.slice(s![0..p, ..]);
        g.b_in.assign(&val.sum_axis(Axis(0)));
        let mut gw = val.t().dot(&act.x);
        for k in 0..d {
            let col = pbar.slice(s![(1 + 2 * k) * p..(2 + 2 * k) * p, ..]).sum_axis(Axis(0));
            gw.column_mut(k).zip_mut_with(&col, |g, &c| *g = *g + c);
        }
        g.w_in.assign(&gw);
        let _ = n;
    }
    grad
}

/// `(u(x), Δu(x))` via second-order forward jets along `e_1` and `e_2`.
pub fn laplacian_forward<T: Real>(params: &ResNetParams<T>, point: [f64; 2]) -> Result<(T, T)> {
    let (v, l) = laplacian_batch(params, &[point])?;
    Ok((v[0], l[0]))
}

/// Values and Laplacians at every point.
pub fn laplacian_batch<T: Real>(params: &ResNetParams<T>, points: &[[f64; 2]]) -> Result<(Vec<T>, Vec<T>)> {
    let d = params.dims.input;
    let chunks = par::map_chunks(points, JET_CHUNK, |_, c| {
        let x = points_matrix::<T>(c, d)?;
        jet_forward_chunk(params, x).map(|(v, l, _)| (v, l))
    });
    let mut values = Vec::with_capacity(points.len());
    let mut laps = Vec::with_capacity(points.len());
    for c in chunks {
        let (v, l) = c?;
        values.extend(v.iter().copied());
        laps.extend(l.iter().copied());
    }
    Ok((values, laps))
}

/// Laplacians at `points` together with the gradient of
/// `Σ_i c_i(Δu(x_i))`, where `cotangent(i, Δu_i)` returns `∂c_i/∂Δu`.
/// One jet forward and one reverse pass per chunk.
pub fn laplacian_vjp<T: Real, F>(
    params: &ResNetParams<T>,
    points: &[[f64; 2]],
    cotangent: F,
) -> Result<(Vec<T>, ParamGradient<T>)>
where
    F: Fn(usize, T) -> T + Send + Sync,
{
    let d = params.dims.input;
    let chunks = par::map_chunks(points, JET_CHUNK, |start, c| {
        let x = points_matrix::<T>(c, d)?;
        let (_, lap, act) = jet_forward_chunk(params, x)?;
        let cot: Array1<T> = lap.iter().enumerate().map(|(i, &l)| cotangent(start + i, l)).collect();
        let zeros = Array1::<T>::zeros(lap.len());
        let g = jet_backward_chunk(params, &act, zeros.view(), cot.view());
        Ok::<_, Error>((lap, g))
    });
    let mut laps = Vec::with_capacity(points.len());
    let mut total = ResNetParams::zeros(params.dims);
    for c in chunks {
        let (l, g) = c?;
        laps.extend(l.iter().copied());
        total.add_assign(&g);
    }
    Ok((laps, total))
}
