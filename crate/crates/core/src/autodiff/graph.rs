use std::collections::HashMap;
use std::sync::Arc;

use super::{ParamId, Parameters, Tensor};
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Backward rule for an op defined outside this module.
pub trait CustomBackward: Send + Sync {
    fn name(&self) -> &'static str;

    /// Gradients with respect to each input, given the output gradient.
    /// `None` leaves an input untouched.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>>;
}

/// How an operand's elements map onto a broadcast output.
enum Bcast {
    Same,
    /// Operand repeats every `n` output elements (trailing-dims match).
    Cycle(usize),
    /// Each operand element covers `n` consecutive outputs (trailing size-1 dims).
    Spread(usize),
    Map(Vec<usize>),
}

impl Bcast {
    fn new(shape: &[usize], out: &[usize]) -> Bcast {
        if shape == out {
            return Bcast::Same;
        }
        let lead = shape.iter().take_while(|&&d| d == 1).count();
        let core = &shape[lead..];
        if core.len() <= out.len() && *core == out[out.len() - core.len()..] {
            return Bcast::Cycle(core.iter().product());
        }
        if shape.len() == out.len() {
            let t = shape.iter().zip(out).take_while(|(a, b)| a == b).count();
            if shape[t..].iter().all(|&d| d == 1) {
                return Bcast::Spread(out[t..].iter().product());
            }
        }
        Bcast::Map(index_map(shape, out))
    }

    #[inline]
    fn at(&self, o: usize) -> usize {
        match self {
            Bcast::Same => o,
            Bcast::Cycle(n) => o % n,
            Bcast::Spread(n) => o / n,
            Bcast::Map(m) => m[o],
        }
    }
}

/// Operand offset of every output element under broadcasting.
fn index_map(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let n = out.len();
    let off = n - shape.len();
    let mut strides = vec![0usize; n];
    let mut s = 1;
    for i in (0..shape.len()).rev() {
        if shape[i] != 1 {
            strides[i + off] = s;
        }
        s *= shape[i];
    }
    odometer(out, &strides)
}

/// Offsets `sum_i idx_i * strides_i` for every multi-index of `dims`, row-major.
fn odometer(dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let total: usize = dims.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; dims.len()];
    let mut cur = 0usize;
    for _ in 0..total {
        map.push(cur);
        for d in (0..dims.len()).rev() {
            idx[d] += 1;
            cur += strides[d];
            if idx[d] < dims[d] {
                break;
            }
            cur -= strides[d] * dims[d];
            idx[d] = 0;
        }
    }
    map
}

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let dim = |s: &[usize], i: usize| {
        if i + s.len() >= n {
            s[i + s.len() - n]
        } else {
            1
        }
    };
    (0..n)
        .map(|i| {
            let (da, db) = (dim(a, i), dim(b, i));
            if da == db || db == 1 {
                Ok(da)
            } else if da == 1 {
                Ok(db)
            } else {
                Err(Error::shape(op, a, b))
            }
        })
        .collect()
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// `C (+)= A B` for strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass buffers holding the full m x k, k x n and m x n
    // operands under the given strides; `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            if accumulate { 1.0 } else { 0.0 },
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Matmul(Var, Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Slice {
        a: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    GatherRows(Var, Vec<usize>),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    Sigmoid(Var),
    Abs(Var),
    Sum(Var),
    SumLast(Var),
    Mse(Var, Var),
    Custom(Vec<Var>, Arc<dyn CustomBackward>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a valid reverse topological order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    params: HashMap<ParamId, Var>,
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Result<Var> {
        if cfg!(debug_assertions) && value.has_non_finite() {
            return Err(Error::NonFinite(format!("output of {}", op_name(&op))));
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Input that takes no gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, false)
    }

    /// Input that collects a gradient.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf for a parameter; repeated calls return the same node.
    pub fn param(&mut self, params: &Parameters, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let v = self.leaf(params.get(id).clone())?;
        self.params.insert(id, v);
        Ok(v)
    }

    pub fn param_named(&mut self, params: &Parameters, name: &str) -> Result<Var> {
        let id = params.id(name)?;
        self.param(params, id)
    }

    /// Node of parameter `id`, if it was used.
    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.params.get(&id).copied()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient of parameter `id`, if it took part in the last backward pass.
    pub fn param_grad(&self, id: ParamId) -> Option<&[f64]> {
        self.param_var(id).and_then(|v| self.grad(v))
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    // ----- elementwise -----

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, bool)> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(op, ta.shape(), tb.shape())?;
        let n: usize = shape.iter().product();
        let (ma, mb) = (
            Bcast::new(ta.shape(), &shape),
            Bcast::new(tb.shape(), &shape),
        );
        let (da, db) = (ta.data(), tb.data());
        let data = match (&ma, &mb) {
            (Bcast::Same, Bcast::Same) => da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect(),
            _ => (0..n).map(|o| f(da[ma.at(o)], db[mb.at(o)])).collect(),
        };
        Ok((Tensor::new(&shape, data)?, self.needs(&[a, b])))
    }

    /// Broadcasting `a + b`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, g) = self.binary("add", a, b, |x, y| x + y)?;
        self.push(t, Op::Add(a, b), g)
    }

    /// Broadcasting `a - b`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, g) = self.binary("sub", a, b, |x, y| x - y)?;
        self.push(t, Op::Sub(a, b), g)
    }

    /// Broadcasting elementwise `a * b`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, g) = self.binary("mul", a, b, |x, y| x * y)?;
        self.push(t, Op::Mul(a, b), g)
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let ta = self.value(a);
        let t = Tensor::new(
            ta.shape(),
            ta.data().iter().map(|&x| scale * x + shift).collect(),
        )?;
        let g = self.needs(&[a]);
        self.push(t, Op::Affine(a, scale), g)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.affine(a, s, 0.0)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape(), ta.data().iter().map(|&x| f(x)).collect())?;
        let g = self.needs(&[a]);
        self.push(t, op, g)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.unary(
            a,
            |x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()),
            Op::Gelu(a),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    // ----- linear algebra -----

    /// `a @ b` over the last two axes. `b` is either a matrix shared by every
    /// leading index of `a`, or has the same leading axes as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() < 2 || sa[sa.len() - 1] != sb[sb.len() - 2] {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let (m, k, n) = (sa[sa.len() - 2], sa[sa.len() - 1], sb[sb.len() - 1]);
        let mut shape = sa[..sa.len() - 1].to_vec();
        shape.push(n);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; shape.iter().product()];
        if sb.len() == 2 {
            let rows = da.len() / k.max(1);
            if k == 0 {
                // empty inner dimension: product is zero
            } else {
                gemm(
                    rows, k, n, da, k as isize, 1, db, n as isize, 1, &mut out, false,
                );
            }
        } else {
            if sa[..sa.len() - 2] != sb[..sb.len() - 2] {
                return Err(Error::shape("matmul", &sa, &sb));
            }
            let batches = da.len() / (m * k).max(1);
            for i in 0..batches {
                gemm(
                    m,
                    k,
                    n,
                    &da[i * m * k..],
                    k as isize,
                    1,
                    &db[i * k * n..],
                    n as isize,
                    1,
                    &mut out[i * m * n..],
                    false,
                );
            }
        }
        let t = Tensor::new(&shape, out)?;
        let g = self.needs(&[a, b]);
        self.push(t, Op::Matmul(a, b), g)
    }

    // ----- shape ops -----

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshape(shape)?;
        let g = self.needs(&[a]);
        self.push(t, Op::Reshape(a), g)
    }

    /// Axis permutation: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let mut seen = vec![false; sa.len()];
        if axes.len() != sa.len()
            || axes
                .iter()
                .any(|&x| x >= sa.len() || std::mem::replace(&mut seen[x], true))
        {
            return Err(Error::shape("permute", &sa, axes));
        }
        let shape: Vec<usize> = axes.iter().map(|&x| sa[x]).collect();
        let st = strides_of(&sa);
        let perm_strides: Vec<usize> = axes.iter().map(|&x| st[x]).collect();
        let map = odometer(&shape, &perm_strides);
        let da = self.value(a).data();
        let t = Tensor::new(&shape, map.iter().map(|&i| da[i]).collect())?;
        let g = self.needs(&[a]);
        self.push(t, Op::Permute(a, axes.to_vec()), g)
    }

    /// Swap the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let n = self.shape(a).len();
        if n < 2 {
            return Err(Error::shape("transpose", self.shape(a), &[]));
        }
        let mut axes: Vec<usize> = (0..n).collect();
        axes.swap(n - 2, n - 1);
        self.permute(a, &axes)
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        if axis >= sa.len() || start + len > sa[axis] {
            return Err(Error::shape("slice", &sa, &[axis, start, len]));
        }
        let outer: usize = sa[..axis].iter().product();
        let inner: usize = sa[axis + 1..].iter().product();
        let da = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * sa[axis] + start) * inner;
            out.extend_from_slice(&da[base..base + len * inner]);
        }
        let mut shape = sa;
        shape[axis] = len;
        let t = Tensor::new(&shape, out)?;
        let g = self.needs(&[a]);
        self.push(t, Op::Slice { a, axis, start }, g)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(
                *parts
                    .first()
                    .ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?,
            )
            .to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", &first, &[axis]));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len()
                || s.iter()
                    .enumerate()
                    .any(|(i, &d)| i != axis && d != first[i])
            {
                return Err(Error::shape("concat", &first, s));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let w = self.shape(p)[axis] * inner;
                out.extend_from_slice(&self.value(p).data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let t = Tensor::new(&shape, out)?;
        let g = self.needs(parts);
        self.push(
            t,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            g,
        )
    }

    /// Rows `idx` of a matrix.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        if sa.len() != 2 {
            return Err(Error::shape("gather_rows", &sa, &[idx.len()]));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= sa[0]) {
            return Err(Error::shape("gather_rows", &sa, &[bad]));
        }
        let d = sa[1];
        let da = self.value(a).data();
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            out.extend_from_slice(&da[i * d..(i + 1) * d]);
        }
        let t = Tensor::new(&[idx.len(), d], out)?;
        let g = self.needs(&[a]);
        self.push(t, Op::GatherRows(a, idx.to_vec()), g)
    }

    // ----- normalization -----

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let d = *ta
            .shape()
            .last()
            .ok_or_else(|| Error::shape("softmax", ta.shape(), &[]))?;
        let mut out = ta.data().to_vec();
        for row in out.chunks_mut(d.max(1)) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - mx).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        let t = Tensor::new(ta.shape(), out)?;
        let g = self.needs(&[a]);
        self.push(t, Op::Softmax(a), g)
    }

    /// Layer norm over the last axis with learned `gamma`, `beta` of that length.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let tx = self.value(x);
        let d = *tx
            .shape()
            .last()
            .ok_or_else(|| Error::shape("layer_norm", tx.shape(), &[]))?;
        let (tg, tb) = (self.value(gamma), self.value(beta));
        if tg.shape() != [d] || tb.shape() != [d] {
            return Err(Error::shape("layer_norm", tx.shape(), tg.shape()));
        }
        let rows = tx.len() / d.max(1);
        let mut xhat = vec![0.0; tx.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; tx.len()];
        let (gd, bd) = (tg.data(), tb.data());
        for r in 0..rows {
            let row = &tx.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let s = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = s;
            for j in 0..d {
                let h = (row[j] - mean) * s;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gd[j] + bd[j];
            }
        }
        let t = Tensor::new(tx.shape(), out)?;
        let g = self.needs(&[x, gamma, beta]);
        self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            g,
        )
    }

    // ----- reductions -----

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let g = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::shape("mean", self.shape(a), &[]));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Sum over the last axis.
    pub fn sum_last(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let sa = ta.shape();
        let d = *sa.last().ok_or_else(|| Error::shape("sum_last", sa, &[]))?;
        let shape = sa[..sa.len() - 1].to_vec();
        let out: Vec<f64> = if d == 0 {
            vec![0.0; shape.iter().product()]
        } else {
            ta.data().chunks(d).map(|c| c.iter().sum()).collect()
        };
        let t = Tensor::new(&shape, out)?;
        let g = self.needs(&[a]);
        self.push(t, Op::SumLast(a), g)
    }

    /// Mean squared difference, a scalar.
    pub fn mse_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() || ta.is_empty() {
            return Err(Error::shape("mse_loss", ta.shape(), tb.shape()));
        }
        let s: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let t = Tensor::scalar(s / ta.len() as f64);
        let g = self.needs(&[a, b]);
        self.push(t, Op::Mse(a, b), g)
    }

    /// Register an externally computed value with its backward rule.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        value: Tensor,
        op: Arc<dyn CustomBackward>,
    ) -> Result<Var> {
        let g = self.needs(inputs);
        self.push(value, Op::Custom(inputs.to_vec(), op), g)
    }

    // ----- backward -----

    /// Accumulate `d loss / d node` into every leaf that needs a gradient.
    /// Calling again without [`Graph::zero_grad`] adds to the leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", self.shape(loss), &[]));
        }
        let mut local: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        local[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = local[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                match &mut self.grads[i] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(g),
                }
                continue;
            }
            for (v, contrib) in self.backward_node(i, &g) {
                if !self.nodes[v.0].needs_grad {
                    continue;
                }
                match &mut local[v.0] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    fn reduce_to(&self, v: Var, out_shape: &[usize], g: &[f64]) -> Vec<f64> {
        let shape = self.shape(v);
        let map = Bcast::new(shape, out_shape);
        if let Bcast::Same = map {
            return g.to_vec();
        }
        let mut r = vec![0.0; self.value(v).len()];
        for (o, &x) in g.iter().enumerate() {
            r[map.at(o)] += x;
        }
        r
    }

    fn bcast_mul_grad(&self, v: Var, other: Var, out_shape: &[usize], g: &[f64]) -> Vec<f64> {
        let od = self.value(other).data();
        let om = Bcast::new(self.shape(other), out_shape);
        let prod: Vec<f64> = g
            .iter()
            .enumerate()
            .map(|(o, &x)| x * od[om.at(o)])
            .collect();
        self.reduce_to(v, out_shape, &prod)
    }

    fn backward_node(&self, i: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[i];
        let out = &node.value;
        let wants = |v: &Var| self.nodes[v.0].needs_grad;
        let mut res = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [a, b] {
                    if wants(v) {
                        res.push((*v, self.reduce_to(*v, out.shape(), g)));
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    res.push((*a, self.reduce_to(*a, out.shape(), g)));
                }
                if wants(b) {
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    res.push((*b, self.reduce_to(*b, out.shape(), &neg)));
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    res.push((*a, self.bcast_mul_grad(*a, *b, out.shape(), g)));
                }
                if wants(b) {
                    res.push((*b, self.bcast_mul_grad(*b, *a, out.shape(), g)));
                }
            }
            Op::Affine(a, s) => res.push((*a, g.iter().map(|x| s * x).collect())),
            Op::Matmul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[sa.len() - 2], sa[sa.len() - 1], sb[sb.len() - 1]);
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                if sb.len() == 2 {
                    let rows = da.len() / k.max(1);
                    if wants(a) {
                        // dA = G B^T
                        let mut ga = vec![0.0; da.len()];
                        gemm(
                            rows, n, k, g, n as isize, 1, db, 1, n as isize, &mut ga, false,
                        );
                        res.push((*a, ga));
                    }
                    if wants(b) {
                        // dB = A^T G
                        let mut gb = vec![0.0; db.len()];
                        gemm(
                            k, rows, n, da, 1, k as isize, g, n as isize, 1, &mut gb, false,
                        );
                        res.push((*b, gb));
                    }
                } else {
                    let batches = da.len() / (m * k).max(1);
                    if wants(a) {
                        let mut ga = vec![0.0; da.len()];
                        for t in 0..batches {
                            gemm(
                                m,
                                n,
                                k,
                                &g[t * m * n..],
                                n as isize,
                                1,
                                &db[t * k * n..],
                                1,
                                n as isize,
                                &mut ga[t * m * k..],
                                false,
                            );
                        }
                        res.push((*a, ga));
                    }
                    if wants(b) {
                        let mut gb = vec![0.0; db.len()];
                        for t in 0..batches {
                            gemm(
                                k,
                                m,
                                n,
                                &da[t * m * k..],
                                1,
                                k as isize,
                                &g[t * m * n..],
                                n as isize,
                                1,
                                &mut gb[t * k * n..],
                                false,
                            );
                        }
                        res.push((*b, gb));
                    }
                }
            }
            Op::Reshape(a) => res.push((*a, g.to_vec())),
            Op::Permute(a, axes) => {
                let sa = self.shape(*a);
                let st = strides_of(sa);
                let perm_strides: Vec<usize> = axes.iter().map(|&x| st[x]).collect();
                let map = odometer(out.shape(), &perm_strides);
                let mut ga = vec![0.0; g.len()];
                for (o, &src) in map.iter().enumerate() {
                    ga[src] = g[o];
                }
                res.push((*a, ga));
            }
            Op::Slice { a, axis, start } => {
                let sa = self.shape(*a);
                let len = out.shape()[*axis];
                let outer: usize = sa[..*axis].iter().product();
                let inner: usize = sa[axis + 1..].iter().product();
                let mut ga = vec![0.0; self.value(*a).len()];
                for o in 0..outer {
                    let base = (o * sa[*axis] + start) * inner;
                    ga[base..base + len * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                res.push((*a, ga));
            }
            Op::Concat { parts, axis } => {
                let so = out.shape();
                let outer: usize = so[..*axis].iter().product();
                let inner: usize = so[axis + 1..].iter().product();
                let total = so[*axis] * inner;
                let mut offset = 0;
                for p in parts {
                    let w = self.shape(*p)[*axis] * inner;
                    if wants(p) {
                        let mut gp = Vec::with_capacity(outer * w);
                        for o in 0..outer {
                            gp.extend_from_slice(&g[o * total + offset..o * total + offset + w]);
                        }
                        res.push((*p, gp));
                    }
                    offset += w;
                }
            }
            Op::GatherRows(a, idx) => {
                let d = self.shape(*a)[1];
                let mut ga = vec![0.0; self.value(*a).len()];
                for (r, &src) in idx.iter().enumerate() {
                    for j in 0..d {
                        ga[src * d + j] += g[r * d + j];
                    }
                }
                res.push((*a, ga));
            }
            Op::Softmax(a) => {
                let d = *out.shape().last().unwrap();
                let y = out.data();
                let mut ga = vec![0.0; g.len()];
                for r in 0..g.len() / d.max(1) {
                    let s = r * d;
                    let dot: f64 = (0..d).map(|j| g[s + j] * y[s + j]).sum();
                    for j in 0..d {
                        ga[s + j] = y[s + j] * (g[s + j] - dot);
                    }
                }
                res.push((*a, ga));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = *out.shape().last().unwrap();
                let gd = self.value(*gamma).data();
                let rows = g.len() / d.max(1);
                if wants(x) {
                    let mut gx = vec![0.0; g.len()];
                    for r in 0..rows {
                        let s = r * d;
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for j in 0..d {
                            let dh = g[s + j] * gd[j];
                            m1 += dh;
                            m2 += dh * xhat[s + j];
                        }
                        m1 /= d as f64;
                        m2 /= d as f64;
                        for j in 0..d {
                            let dh = g[s + j] * gd[j];
                            gx[s + j] = rstd[r] * (dh - m1 - xhat[s + j] * m2);
                        }
                    }
                    res.push((*x, gx));
                }
                if wants(gamma) {
                    let mut gg = vec![0.0; d];
                    for (o, &v) in g.iter().enumerate() {
                        gg[o % d] += v * xhat[o];
                    }
                    res.push((*gamma, gg));
                }
                if wants(beta) {
                    let mut gb = vec![0.0; d];
                    for (o, &v) in g.iter().enumerate() {
                        gb[o % d] += v;
                    }
                    res.push((*beta, gb));
                }
            }
            Op::Gelu(a) => {
                let xa = self.value(*a).data();
                let ga = xa
                    .iter()
                    .zip(g)
                    .map(|(&x, &gy)| {
                        let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                        gy * (0.5 * (1.0 + t) + 0.5 * x * dt)
                    })
                    .collect();
                res.push((*a, ga));
            }
            Op::Sigmoid(a) => {
                let ga = out
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&y, &gy)| gy * y * (1.0 - y))
                    .collect();
                res.push((*a, ga));
            }
            Op::Abs(a) => {
                let xa = self.value(*a).data();
                let ga = xa.iter().zip(g).map(|(&x, &gy)| gy * sign(x)).collect();
                res.push((*a, ga));
            }
            Op::Sum(a) => res.push((*a, vec![g[0]; self.value(*a).len()])),
            Op::SumLast(a) => {
                let d = *self.shape(*a).last().unwrap();
                let mut ga = Vec::with_capacity(self.value(*a).len());
                for &x in g {
                    ga.extend(std::iter::repeat_n(x, d));
                }
                res.push((*a, ga));
            }
            Op::Mse(a, b) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                let c = 2.0 * g[0] / da.len() as f64;
                let diff: Vec<f64> = da.iter().zip(db).map(|(x, y)| c * (x - y)).collect();
                if wants(b) {
                    res.push((*b, diff.iter().map(|x| -x).collect()));
                }
                if wants(a) {
                    res.push((*a, diff));
                }
            }
            Op::Custom(inputs, op) => {
                let vals: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                for (v, gi) in inputs.iter().zip(op.backward(&vals, out, g)) {
                    if let Some(gi) = gi {
                        if wants(v) {
                            res.push((*v, gi));
                        }
                    }
                }
            }
        }
        res
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Affine(..) => "affine",
        Op::Matmul(..) => "matmul",
        Op::Reshape(..) => "reshape",
        Op::Permute(..) => "permute",
        Op::Slice { .. } => "slice",
        Op::Concat { .. } => "concat",
        Op::GatherRows(..) => "gather_rows",
        Op::Softmax(..) => "softmax",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Gelu(..) => "gelu",
        Op::Sigmoid(..) => "sigmoid",
        Op::Abs(..) => "abs",
        Op::Sum(..) => "sum",
        Op::SumLast(..) => "sum_last",
        Op::Mse(..) => "mse_loss",
        Op::Custom(_, op) => op.name(),
    }
}
