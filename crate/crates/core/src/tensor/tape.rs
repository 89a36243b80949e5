//! Wengert-list reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value and whatever it
//! needs for the backward sweep. Node inputs always precede the node, so the
//! reverse sweep is a single pass from the loss down to index 0.

use crate::error::{Error, Result};

use super::fft::{self, grid_dims, half_len};
use super::linalg::gemm;
use super::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    ColNorms(Var),
    Reshape(Var),
    LayerNorm { x: Var, groups: Vec<usize>, inv_std: Vec<f64> },
    Rfft2 { x: Var, n1: usize, n2: usize, c: usize },
    Irfft2 { x: Var, n1: usize, n2: usize, c: usize },
    SpectralMul { x: Var, r: Var, rows: Vec<usize>, cols: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of a scalar with respect to the trainable leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    pub fn len(&self) -> usize {
        self.grads.iter().filter(|g| g.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// `op(a) · op(b)` with optional transposes on either operand.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let value = super::linalg::matmul_t(self.value(a), ta, self.value(b), tb)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul { a, b, ta, tb }, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// `aᵀ b`.
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, true, b, false)
    }

    /// `a bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, true)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.len().max(1) as f64);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    /// Euclidean norm of every column of a matrix, as a vector.
    pub fn col_norms(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2()?;
        let mut sq = vec![0.0; c];
        for i in 0..r {
            for (j, s) in sq.iter_mut().enumerate() {
                *s += t.data()[i * c + j].powi(2);
            }
        }
        let value = Tensor::new(&[c], sq.into_iter().map(f64::sqrt).collect())?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::ColNorms(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// `(x - mean) / sqrt(var + eps)` with moments taken jointly over `axes`;
    /// no affine parameters.
    pub fn layer_norm(&mut self, x: Var, axes: &[usize], eps: f64) -> Result<Var> {
        let t = self.value(x);
        let shape = t.shape().to_vec();
        if axes.is_empty() || axes.iter().any(|&a| a >= shape.len()) {
            return Err(Error::dim(format!("invalid normalization axes {axes:?} for shape {shape:?}")));
        }
        let mut kept_extent = vec![1usize; shape.len()];
        let mut n_groups = 1;
        for (ax, &e) in shape.iter().enumerate() {
            if !axes.contains(&ax) {
                kept_extent[ax] = e;
                n_groups *= e;
            }
        }
        let groups: Vec<usize> = (0..t.len())
            .map(|mut flat| {
                let mut key = 0;
                let mut coords = vec![0; shape.len()];
                for ax in (0..shape.len()).rev() {
                    coords[ax] = flat % shape[ax];
                    flat /= shape[ax];
                }
                for ax in 0..shape.len() {
                    let c = if axes.contains(&ax) { 0 } else { coords[ax] };
                    key = key * kept_extent[ax] + c;
                }
                key
            })
            .collect();
        let count = (t.len() / n_groups.max(1)) as f64;
        let mut mean = vec![0.0; n_groups];
        for (v, &g) in t.data().iter().zip(&groups) {
            mean[g] += v;
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; n_groups];
        for (v, &g) in t.data().iter().zip(&groups) {
            var[g] += (v - mean[g]).powi(2);
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v / count + eps).sqrt()).collect();
        let data = t.data().iter().zip(&groups).map(|(v, &g)| (v - mean[g]) * inv_std[g]).collect();
        let value = Tensor::new(&shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::LayerNorm { x, groups, inv_std }, rg))
    }

    /// Real forward transform of an `n1 × n2 × c` field; see [`fft`].
    pub fn rfft2(&mut self, x: Var) -> Result<Var> {
        let (n1, n2, c) = grid_dims(self.value(x).shape())?;
        let data = fft::rfft2_raw(self.value(x).data(), n1, n2, c);
        let value = Tensor::new(&[n1, half_len(n2), c, 2], data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Rfft2 { x, n1, n2, c }, rg))
    }

    /// Inverse real transform of an `n1 × (⌊n2/2⌋+1) × c × 2` half spectrum.
    pub fn irfft2(&mut self, x: Var, n2: usize) -> Result<Var> {
        let (n1, h, c) = match *self.value(x).shape() {
            [n1, h, c, 2] => (n1, h, c),
            ref s => return Err(Error::dim(format!("irfft2 expects n1×h×c×2, got {s:?}"))),
        };
        if n2 == 0 || half_len(n2) != h {
            return Err(Error::dim(format!("target extent {n2} inconsistent with {h} spectral columns")));
        }
        let data = fft::irfft2_raw(self.value(x).data(), n1, n2, c);
        let value = Tensor::new(&[n1, n2, c], data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Irfft2 { x, n1, n2, c }, rg))
    }

    /// Multiplies retained modes of a half spectrum `x` (`n1 × h × c × 2`) by
    /// the per-channel complex weights `r` (`rows.len() × m2 × c × 2`); weight
    /// row `q` applies to spectrum row `rows[q]`, weight column `k` to
    /// spectrum column `k`. Modes outside the retained set are zeroed.
    pub fn spectral_mul(&mut self, x: Var, r: Var, rows: &[usize]) -> Result<Var> {
        let (n1, h, c) = match *self.value(x).shape() {
            [n1, h, c, 2] => (n1, h, c),
            ref s => return Err(Error::dim(format!("spectrum must be n1×h×c×2, got {s:?}"))),
        };
        let (m1, m2) = match *self.value(r).shape() {
            [m1, m2, rc, 2] if rc == c => (m1, m2),
            ref s => return Err(Error::dim(format!("weights {s:?} incompatible with {c} channels"))),
        };
        if m1 != rows.len() || m2 > h || rows.iter().any(|&q| q >= n1) {
            return Err(Error::Config(format!(
                "retained modes {m1}×{m2} exceed spectrum {n1}×{h}"
            )));
        }
        let xs = self.value(x).data();
        let rs = self.value(r).data();
        let mut out = vec![0.0; xs.len()];
        for (q, &row) in rows.iter().enumerate() {
            for k in 0..m2 {
                for ch in 0..c {
                    let xo = ((row * h + k) * c + ch) * 2;
                    let ro = ((q * m2 + k) * c + ch) * 2;
                    let (a, b) = (xs[xo], xs[xo + 1]);
                    let (p, s) = (rs[ro], rs[ro + 1]);
                    out[xo] = a * p - b * s;
                    out[xo + 1] = a * s + b * p;
                }
            }
        }
        let value = Tensor::new(&[n1, h, c, 2], out)?;
        let rg = self.rg(x) || self.rg(r);
        Ok(self.push(value, Op::SpectralMul { x, r, rows: rows.to_vec(), cols: m2 }, rg))
    }

    /// Allows another [`backward`](Self::backward) on the same tape.
    pub fn reset_backward(&mut self) {
        self.backward_done = false;
    }

    /// Gradients of the scalar `loss` with respect to every trainable leaf.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::contract("backward already ran on this tape; call reset_backward first"));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.rg(loss) {
            return Err(Error::DetachedGraph);
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
        }

        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if !(node.requires_grad && matches!(node.op, Op::Leaf)) {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.data_mut().iter_mut().zip(delta.data()).for_each(|(a, d)| *a += d),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, ta, tb } => {
                let av = self.value(a);
                let bv = self.value(b);
                let gd = g.dims2()?;
                if self.rg(a) {
                    // C = op(A) op(B): dop(A) = G op(B)ᵀ; transposed back when ta.
                    let mut out = vec![0.0; av.len()];
                    if ta {
                        gemm(1.0, bv.data(), bv.dims2()?, tb, g.data(), gd, true, 0.0, &mut out)?;
                    } else {
                        gemm(1.0, g.data(), gd, false, bv.data(), bv.dims2()?, !tb, 0.0, &mut out)?;
                    }
                    self.accumulate(grads, a, Tensor::new(av.shape(), out)?);
                }
                if self.rg(b) {
                    let mut out = vec![0.0; bv.len()];
                    if tb {
                        gemm(1.0, g.data(), gd, true, av.data(), av.dims2()?, ta, 0.0, &mut out)?;
                    } else {
                        gemm(1.0, av.data(), av.dims2()?, !ta, g.data(), gd, false, 0.0, &mut out)?;
                    }
                    self.accumulate(grads, b, Tensor::new(bv.shape(), out)?);
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.scale(-1.0));
            }
            &Op::Mul(a, b) => {
                if self.rg(a) {
                    self.accumulate(grads, a, g.zip_map(self.value(b), |x, y| x * y)?);
                }
                if self.rg(b) {
                    self.accumulate(grads, b, g.zip_map(self.value(a), |x, y| x * y)?);
                }
            }
            &Op::Scale(a, s) => self.accumulate(grads, a, g.scale(s)),
            &Op::Sum(a) => {
                let s = g.item()?;
                self.accumulate(grads, a, Tensor::full(self.value(a).shape(), s));
            }
            &Op::Mean(a) => {
                let n = self.value(a).len().max(1) as f64;
                let s = g.item()? / n;
                self.accumulate(grads, a, Tensor::full(self.value(a).shape(), s));
            }
            &Op::ColNorms(a) => {
                let av = self.value(a);
                let (r, c) = av.dims2()?;
                let norms = node.value.data();
                let scale: Vec<f64> =
                    (0..c).map(|j| if norms[j] > 0.0 { g.data()[j] / norms[j] } else { 0.0 }).collect();
                let d = Tensor::from_fn(&[r, c], |k| av.data()[k] * scale[k % c]);
                self.accumulate(grads, a, d);
            }
            &Op::Reshape(a) => {
                let d = g.clone().reshape(self.value(a).shape())?;
                self.accumulate(grads, a, d);
            }
            Op::LayerNorm { x, groups, inv_std } => {
                let y = node.value.data();
                let n_groups = inv_std.len();
                let count = (y.len() / n_groups) as f64;
                let mut mean_g = vec![0.0; n_groups];
                let mut mean_gy = vec![0.0; n_groups];
                for ((gv, yv), &grp) in g.data().iter().zip(y).zip(groups) {
                    mean_g[grp] += gv;
                    mean_gy[grp] += gv * yv;
                }
                mean_g.iter_mut().for_each(|m| *m /= count);
                mean_gy.iter_mut().for_each(|m| *m /= count);
                let d = Tensor::from_fn(node.value.shape(), |k| {
                    let grp = groups[k];
                    inv_std[grp] * (g.data()[k] - mean_g[grp] - y[k] * mean_gy[grp])
                });
                self.accumulate(grads, *x, d);
            }
            &Op::Rfft2 { x, n1, n2, c } => {
                let d = fft::rfft2_vjp(g.data(), n1, n2, c);
                self.accumulate(grads, x, Tensor::new(self.value(x).shape(), d)?);
            }
            &Op::Irfft2 { x, n1, n2, c } => {
                let d = fft::irfft2_vjp(g.data(), n1, n2, c);
                self.accumulate(grads, x, Tensor::new(self.value(x).shape(), d)?);
            }
            Op::SpectralMul { x, r, rows, cols } => {
                let (x, r, m2) = (*x, *r, *cols);
                let xv = self.value(x);
                let rv = self.value(r);
                let (h, c) = (xv.shape()[1], xv.shape()[2]);
                let gs = g.data();
                let mut dx = self.rg(x).then(|| vec![0.0; xv.len()]);
                let mut dr = self.rg(r).then(|| vec![0.0; rv.len()]);
                for (q, &row) in rows.iter().enumerate() {
                    for k in 0..m2 {
                        for ch in 0..c {
                            let xo = ((row * h + k) * c + ch) * 2;
                            let ro = ((q * m2 + k) * c + ch) * 2;
                            let (gr, gi) = (gs[xo], gs[xo + 1]);
                            if let Some(dx) = dx.as_mut() {
                                let (p, s) = (rv.data()[ro], rv.data()[ro + 1]);
                                dx[xo] += gr * p + gi * s;
                                dx[xo + 1] += gi * p - gr * s;
                            }
                            if let Some(dr) = dr.as_mut() {
                                let (a, b) = (xv.data()[xo], xv.data()[xo + 1]);
                                dr[ro] += gr * a + gi * b;
                                dr[ro + 1] += gi * a - gr * b;
                            }
                        }
                    }
                }
                if let Some(dx) = dx {
                    self.accumulate(grads, x, Tensor::new(xv.shape(), dx)?);
                }
                if let Some(dr) = dr {
                    self.accumulate(grads, r, Tensor::new(rv.shape(), dr)?);
                }
            }
        }
        Ok(())
    }
}

/// Central finite-difference check of a scalar function of one tensor.
///
/// `f` builds the scalar on a fresh tape from the supplied input leaf. Returns
/// the relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`
/// over the probed coordinates (all of them when `probe` is `None`).
pub fn gradcheck(
    f: impl Fn(&mut Tape, Var) -> Result<Var>,
    x: &Tensor,
    step: f64,
    probe: Option<&[usize]>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let loss = f(&mut tape, xv)?;
    let grads = tape.backward(loss)?;
    let analytic = grads.get(xv).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |t: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(t);
        let out = f(&mut tape, v)?;
        tape.value(out).item()
    };
    let all: Vec<usize> = (0..x.len()).collect();
    let coords = probe.unwrap_or(&all);
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for &k in coords {
        let mut plus = x.clone();
        plus.data_mut()[k] += step;
        let mut minus = x.clone();
        minus.data_mut()[k] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let a = analytic.data()[k];
        diff += (a - numeric).powi(2);
        na += a * a;
        nn += numeric * numeric;
    }
    let denom = na.sqrt().max(nn.sqrt());
    Ok(if denom == 0.0 { diff.sqrt() } else { diff.sqrt() / denom })
}
