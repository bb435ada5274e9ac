//! Eager reverse-mode differentiation over whole tensors.
//!
//! Every operation computes its forward value immediately and appends a
//! node to the [`Tape`]. [`Tape::gradients`] then walks the tape in strict
//! reverse order, so a node's parents always precede it and the graph is
//! acyclic by construction.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::numerics::fft::idft3_real_part;
use crate::numerics::{dft3, gemm_into, ComplexTensor, LowpassMask, Scalar, Tensor};

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation recorded by a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    MatMul,
    Add,
    Sub,
    Scale,
    Mul,
    Softmax,
    LayerNorm,
    Gelu,
    Reshape,
    Permute,
    Dft3,
    Lowpass,
    SquaredNorm,
    Sum,
    Embedding,
    Slice,
    Concat,
}

#[derive(Clone, Debug)]
enum Op<T: Scalar> {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add { a: Var, b: Var },
    AddRow { x: Var, bias: Var },
    Sub { a: Var, b: Var },
    Scale { x: Var, c: T },
    Mul { a: Var, b: Var },
    Softmax { x: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Gelu { x: Var, dy: Vec<T> },
    Reshape { x: Var },
    Permute { x: Var, axes: Vec<usize> },
    Dft3 { x: Var },
    Lowpass { x: Var, flags: Vec<bool> },
    SquaredNorm { x: Var },
    Sum { x: Var },
    Embedding { table: Var, ids: Vec<usize> },
    Slice { x: Var, axis: usize, range: Range<usize> },
    SliceRect { x: Var, rows: Range<usize>, cols: Range<usize> },
    Concat { parts: Vec<Var>, axis: usize },
}

impl<T: Scalar> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul { .. } => OpKind::MatMul,
            Op::Add { .. } | Op::AddRow { .. } => OpKind::Add,
            Op::Sub { .. } => OpKind::Sub,
            Op::Scale { .. } => OpKind::Scale,
            Op::Mul { .. } => OpKind::Mul,
            Op::Softmax { .. } => OpKind::Softmax,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::Gelu { .. } => OpKind::Gelu,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Permute { .. } => OpKind::Permute,
            Op::Dft3 { .. } => OpKind::Dft3,
            Op::Lowpass { .. } => OpKind::Lowpass,
            Op::SquaredNorm { .. } => OpKind::SquaredNorm,
            Op::Sum { .. } => OpKind::Sum,
            Op::Embedding { .. } => OpKind::Embedding,
            Op::Slice { .. } | Op::SliceRect { .. } => OpKind::Slice,
            Op::Concat { .. } => OpKind::Concat,
        }
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } | Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => {
                vec![*a, *b]
            }
            Op::AddRow { x, bias } => vec![*x, *bias],
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Scale { x, .. }
            | Op::Softmax { x }
            | Op::Gelu { x, .. }
            | Op::Reshape { x }
            | Op::Permute { x, .. }
            | Op::Dft3 { x }
            | Op::Lowpass { x, .. }
            | Op::SquaredNorm { x }
            | Op::Sum { x }
            | Op::Slice { x, .. }
            | Op::SliceRect { x, .. } => vec![*x],
            Op::Embedding { table, .. } => vec![*table],
            Op::Concat { parts, .. } => parts.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T: Scalar> {
    op: Op<T>,
    value: Tensor<T>,
    needs_grad: bool,
}

/// Ordered record of eagerly evaluated operations.
#[derive(Clone, Debug, Default)]
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.044_715;

/// GELU value and derivative (tanh approximation).
fn gelu_parts<T: Scalar>(x: T) -> (T, T) {
    let half = T::from_f64_lossy(0.5);
    let one = T::one();
    let k = T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt());
    let c = T::from_f64_lossy(GELU_C);
    let u = k * (x + c * x * x * x);
    // tanh(u) through one exp; saturates correctly at ±∞.
    let th = one - (one + one) / (one + (u + u).exp());
    let y = half * x * (one + th);
    let dy = half * (one + th) + half * x * (one - th * th) * k * (one + T::from_f64_lossy(3.0) * c * x * x);
    (y, dy)
}

fn last_axis(t: &Tensor<impl Scalar>) -> (usize, usize) {
    let d = *t.shape().last().expect("rank ≥ 1");
    (t.len() / d, d)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    pub fn parents(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.parents()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> Var {
        let needs_grad = op.parents().iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 >= self.nodes.len() {
            return Err(Error::Contract(format!("variable {} is not on this tape", v.0)));
        }
        Ok(())
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input treated as a constant: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = Tensor::matmul(self.value(a), self.value(b), ta, tb)?;
        Ok(self.push(Op::MatMul { a, b, ta, tb }, value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add { a, b }, value))
    }

    /// `x + bias` with `bias` broadcast over all leading axes of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, d) = last_axis(self.value(x));
        let b = self.value(bias);
        if b.len() != d {
            return Err(Error::Dimension(format!(
                "bias of {} elements for trailing extent {d}",
                b.len()
            )));
        }
        let mut value = self.value(x).clone();
        let bd = b.data().to_vec();
        for r in 0..rows {
            for (v, &bb) in value.data_mut()[r * d..(r + 1) * d].iter_mut().zip(&bd) {
                *v += bb;
            }
        }
        Ok(self.push(Op::AddRow { x, bias }, value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub { a, b }, value))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).scale(c);
        Ok(self.push(Op::Scale { x, c }, value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        Ok(self.push(Op::Mul { a, b }, value))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let xv = self.value(x);
        let (rows, d) = last_axis(xv);
        let mut out = xv.clone();
        for row in out.data_mut().chunks_exact_mut(d).take(rows) {
            let m = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut s = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        Ok(self.push(Op::Softmax { x }, out))
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        self.check(x)?;
        let xv = self.value(x);
        let (rows, d) = last_axis(xv);
        let (g, b) = (self.value(gamma), self.value(beta));
        if g.len() != d || b.len() != d {
            return Err(Error::Dimension(format!(
                "layer norm affine params of {}/{} elements for width {d}",
                g.len(),
                b.len()
            )));
        }
        let eps = T::from_f64_lossy(LN_EPS);
        let dn = T::from_usize(d).expect("width");
        let mut xhat = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks_exact(d) {
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(h * g.data()[j] + b.data()[j]);
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            value,
        ))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let xv = self.value(x);
        let mut dy = Vec::with_capacity(xv.len());
        let mut out = Vec::with_capacity(xv.len());
        for &v in xv.data() {
            let (y, d) = gelu_parts(v);
            out.push(y);
            dy.push(d);
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(Op::Gelu { x, dy }, value))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(Op::Reshape { x }, value))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).permute(axes)?;
        Ok(self.push(
            Op::Permute {
                x,
                axes: axes.to_vec(),
            },
            value,
        ))
    }

    /// Unitary 3-D DFT of a real `h × w × τ × c` tensor; the result is
    /// stored as real `h × w × τ × c × 2` (re, im) pairs.
    pub fn dft3(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = dft3(self.value(x))?.to_interleaved();
        Ok(self.push(Op::Dft3 { x }, value))
    }

    /// Applies a binary low-pass mask to an interleaved spectrum.
    pub fn lowpass(&mut self, x: Var, mask: &LowpassMask) -> Result<Var> {
        self.check(x)?;
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() != 5 || s[4] != 2 {
            return Err(Error::Dimension(format!(
                "lowpass on tape expects h×w×τ×c×2, got {s:?}"
            )));
        }
        let channels = mask.check_shape(&s[..4])?;
        let flags: Vec<bool> = mask
            .flags(channels)
            .into_iter()
            .flat_map(|k| [k, k])
            .collect();
        let mut value = xv.clone();
        for (v, &k) in value.data_mut().iter_mut().zip(&flags) {
            if !k {
                *v = T::zero();
            }
        }
        Ok(self.push(Op::Lowpass { x, flags }, value))
    }

    pub fn squared_norm(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = Tensor::scalar(self.value(x).sq_norm());
        Ok(self.push(Op::SquaredNorm { x }, value))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = Tensor::scalar(self.value(x).sum());
        Ok(self.push(Op::Sum { x }, value))
    }

    /// Gathers rows of a 2-D `table`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.check(table)?;
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(Error::Dimension(format!(
                "embedding table must be 2-D, got {:?}",
                t.shape()
            )));
        }
        let (n, d) = (t.shape()[0], t.shape()[1]);
        if ids.is_empty() {
            return Err(Error::Dimension("embedding lookup with no ids".into()));
        }
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if i >= n {
                return Err(Error::Dimension(format!("embedding id {i} outside table of {n}")));
            }
            out.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
        }
        let value = Tensor::new(vec![ids.len(), d], out)?;
        Ok(self.push(
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            value,
        ))
    }

    pub fn slice(&mut self, x: Var, axis: usize, range: Range<usize>) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).slice_axis(axis, range.clone())?;
        Ok(self.push(Op::Slice { x, axis, range }, value))
    }

    /// Rectangular block of a 2-D tensor.
    pub fn slice_rect(&mut self, x: Var, rows: Range<usize>, cols: Range<usize>) -> Result<Var> {
        self.check(x)?;
        let xv = self.value(x);
        if xv.rank() != 2
            || rows.start >= rows.end
            || cols.start >= cols.end
            || rows.end > xv.shape()[0]
            || cols.end > xv.shape()[1]
        {
            return Err(Error::Dimension(format!(
                "rect slice {rows:?}×{cols:?} of {:?}",
                xv.shape()
            )));
        }
        let width = xv.shape()[1];
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for r in rows.clone() {
            out.extend_from_slice(&xv.data()[r * width + cols.start..r * width + cols.end]);
        }
        let value = Tensor::new(vec![rows.len(), cols.len()], out)?;
        Ok(self.push(Op::SliceRect { x, rows, cols }, value))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        for &p in parts {
            self.check(p)?;
        }
        let refs: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat(&refs, axis)?;
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            value,
        ))
    }

    /// Gradients of the scalar `loss` with respect to every node on a path.
    pub fn gradients(&self, loss: Var) -> Result<Gradients<T>> {
        self.check(loss)?;
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// `d loss / d wrt`; zero when `wrt` does not influence `loss`.
    pub fn backward(&self, loss: Var, wrt: Var) -> Result<Tensor<T>> {
        self.check(wrt)?;
        let g = self.gradients(loss)?;
        Ok(g.get(wrt)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.shape(wrt))))
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) -> Result<()> {
        if !self.wants(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Tensor<T>>], v: Var) -> &'a mut Tensor<T> {
        grads[v.0].get_or_insert_with(|| Tensor::zeros(self.nodes[v.0].value.shape()))
    }

    /// Accumulates `op(x) · op(y)` into the gradient of `target`.
    #[allow(clippy::too_many_arguments)]
    fn acc_matmul(
        &self,
        grads: &mut [Option<Tensor<T>>],
        target: Var,
        x: &Tensor<T>,
        y: &Tensor<T>,
        tx: bool,
        ty: bool,
    ) {
        if !self.wants(target) {
            return;
        }
        let m = if tx { x.shape()[1] } else { x.shape()[0] };
        let k = if tx { x.shape()[0] } else { x.shape()[1] };
        let n = if ty { y.shape()[0] } else { y.shape()[1] };
        let beta = if grads[target.0].is_some() { T::one() } else { T::zero() };
        let slot = self.slot(grads, target);
        gemm_into(x, y, tx, ty, T::one(), beta, slot.data_mut(), m, k, n);
    }

    fn backprop_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if *ta {
                    self.acc_matmul(grads, *a, bv, g, *tb, true);
                } else {
                    self.acc_matmul(grads, *a, g, bv, false, !*tb);
                }
                if *tb {
                    self.acc_matmul(grads, *b, g, av, true, *ta);
                } else {
                    self.acc_matmul(grads, *b, av, g, !*ta, false);
                }
            }
            Op::Add { a, b } => {
                self.acc(grads, *a, g.clone())?;
                self.acc(grads, *b, g.clone())?;
            }
            Op::AddRow { x, bias } => {
                self.acc(grads, *x, g.clone())?;
                if self.wants(*bias) {
                    let (_, d) = last_axis(g);
                    let mut col = vec![T::zero(); d];
                    for row in g.data().chunks_exact(d) {
                        for (c, &v) in col.iter_mut().zip(row) {
                            *c += v;
                        }
                    }
                    let shape = self.shape(*bias).to_vec();
                    self.acc(grads, *bias, Tensor::new(shape, col)?)?;
                }
            }
            Op::Sub { a, b } => {
                self.acc(grads, *a, g.clone())?;
                if self.wants(*b) {
                    self.acc(grads, *b, g.scale(-T::one()))?;
                }
            }
            Op::Scale { x, c } => self.acc(grads, *x, g.scale(*c))?,
            Op::Mul { a, b } => {
                if self.wants(*a) {
                    self.acc(grads, *a, g.mul(self.value(*b))?)?;
                }
                if self.wants(*b) {
                    self.acc(grads, *b, g.mul(self.value(*a))?)?;
                }
            }
            Op::Softmax { x } => {
                let y = &node.value;
                let (_, d) = last_axis(y);
                let mut dx = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks_exact(d).zip(g.data().chunks_exact(d)) {
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    dx.extend(yr.iter().zip(gr).map(|(&yy, &gg)| yy * (gg - dot)));
                }
                self.acc(grads, *x, Tensor::new(y.shape().to_vec(), dx)?)?;
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (_, d) = last_axis(g);
                let gam = self.value(*gamma).data();
                let dn = T::from_usize(d).expect("width");
                if self.wants(*gamma) || self.wants(*beta) {
                    let mut dg = vec![T::zero(); d];
                    let mut db = vec![T::zero(); d];
                    for (gr, hr) in g.data().chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            dg[j] += gr[j] * hr[j];
                            db[j] += gr[j];
                        }
                    }
                    let gs = self.shape(*gamma).to_vec();
                    let bs = self.shape(*beta).to_vec();
                    self.acc(grads, *gamma, Tensor::new(gs, dg)?)?;
                    self.acc(grads, *beta, Tensor::new(bs, db)?)?;
                }
                if self.wants(*x) {
                    let mut dx = Vec::with_capacity(g.len());
                    let mut dh = vec![T::zero(); d];
                    for ((gr, hr), &is) in g.data().chunks_exact(d).zip(xhat.chunks_exact(d)).zip(inv_std) {
                        let mut s1 = T::zero();
                        let mut s2 = T::zero();
                        for j in 0..d {
                            dh[j] = gr[j] * gam[j];
                            s1 += dh[j];
                            s2 += dh[j] * hr[j];
                        }
                        for j in 0..d {
                            dx.push(is / dn * (dn * dh[j] - s1 - hr[j] * s2));
                        }
                    }
                    self.acc(grads, *x, Tensor::new(g.shape().to_vec(), dx)?)?;
                }
            }
            Op::Gelu { x, dy } => {
                let data = dy.iter().zip(g.data()).map(|(&d, &gg)| d * gg).collect();
                let dx = Tensor::new(g.shape().to_vec(), data)?;
                self.acc(grads, *x, dx)?;
            }
            Op::Reshape { x } => {
                let shape = self.shape(*x).to_vec();
                self.acc(grads, *x, g.reshape(&shape)?)?;
            }
            Op::Permute { x, axes } => {
                let mut inv = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inv[a] = i;
                }
                self.acc(grads, *x, g.permute(&inv)?)?;
            }
            Op::Dft3 { x } => {
                // Unitary transform: the adjoint is the inverse, keeping the real part.
                let spec = ComplexTensor::from_interleaved(g)?;
                self.acc(grads, *x, idft3_real_part(&spec)?)?;
            }
            Op::Lowpass { x, flags } => {
                let mut dx = g.clone();
                for (v, &k) in dx.data_mut().iter_mut().zip(flags) {
                    if !k {
                        *v = T::zero();
                    }
                }
                self.acc(grads, *x, dx)?;
            }
            Op::SquaredNorm { x } => {
                let two_g = g.data()[0] + g.data()[0];
                self.acc(grads, *x, self.value(*x).scale(two_g))?;
            }
            Op::Sum { x } => {
                self.acc(grads, *x, Tensor::full(self.shape(*x), g.data()[0]))?;
            }
            Op::Embedding { table, ids } => {
                if self.wants(*table) {
                    let d = self.shape(*table)[1];
                    let slot = self.slot(grads, *table);
                    let buf = slot.data_mut();
                    for (r, &i) in ids.iter().enumerate() {
                        for j in 0..d {
                            buf[i * d + j] += g.data()[r * d + j];
                        }
                    }
                }
            }
            Op::Slice { x, axis, range } => {
                if self.wants(*x) {
                    let shape = self.shape(*x).to_vec();
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[*axis + 1..].iter().product();
                    let span = shape[*axis];
                    let w = range.len() * inner;
                    let slot = self.slot(grads, *x);
                    let buf = slot.data_mut();
                    for o in 0..outer {
                        let base = (o * span + range.start) * inner;
                        for (dst, &src) in buf[base..base + w].iter_mut().zip(&g.data()[o * w..(o + 1) * w]) {
                            *dst += src;
                        }
                    }
                }
            }
            Op::SliceRect { x, rows, cols } => {
                if self.wants(*x) {
                    let width = self.shape(*x)[1];
                    let cw = cols.len();
                    let slot = self.slot(grads, *x);
                    let buf = slot.data_mut();
                    for (i, r) in rows.clone().enumerate() {
                        let dst = &mut buf[r * width + cols.start..r * width + cols.end];
                        for (d, &s) in dst.iter_mut().zip(&g.data()[i * cw..(i + 1) * cw]) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[*axis];
                    if self.wants(p) {
                        self.acc(grads, p, g.slice_axis(*axis, offset..offset + w)?)?;
                    }
                    offset += w;
                }
            }
        }
        Ok(())
    }
}

/// Gradients produced by one backward pass.
#[derive(Clone, Debug)]
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Complex spectrum of a tape value produced by [`Tape::dft3`].
pub fn spectrum_of<T: Scalar>(tape: &Tape<T>, v: Var) -> Result<ComplexTensor<T>> {
    ComplexTensor::from_interleaved(tape.value(v))
}
