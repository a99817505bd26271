use std::cell::RefCell;
use std::rc::Rc;

use super::kernels::{self, ConvGeom, ResizeAxis};
use super::Tensor;
use crate::error::{Error, Result};

/// Divisors with magnitude below this are rejected.
const MIN_DIVISOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

/// Elementwise nonlinearities with registered backward rules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Sigmoid,
    Exp,
    Log,
    Sqrt,
    Softplus,
    Abs,
}

/// One output element of a [`GatherMap`]: `scale * x[src] + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GatherEntry {
    pub src: usize,
    pub scale: f64,
    pub offset: f64,
}

/// A sparse affine re-indexing of a tensor. Output elements without an
/// entry are zero and receive no gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct GatherMap {
    out_shape: Vec<usize>,
    entries: Vec<Option<GatherEntry>>,
}

impl GatherMap {
    pub fn new(out_shape: Vec<usize>, entries: Vec<Option<GatherEntry>>) -> Result<Self> {
        let n: usize = out_shape.iter().product();
        if out_shape.is_empty() || n != entries.len() {
            return Err(Error::shape(format!(
                "gather map with shape {out_shape:?} has {} entries",
                entries.len()
            )));
        }
        Ok(GatherMap { out_shape, entries })
    }

    pub fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub fn entries(&self) -> &[Option<GatherEntry>] {
        &self.entries
    }

    /// Applies the map to plain values, outside any tape.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| e.map_or(0.0, |e| e.scale * x[e.src] + e.offset))
            .collect()
    }
}

enum Op {
    Leaf,
    Binary {
        kind: BinaryKind,
        a: usize,
        b: usize,
        bmap: Option<Vec<usize>>,
    },
    Affine {
        x: usize,
        scale: f64,
    },
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Transpose {
        x: usize,
    },
    Conv {
        x: usize,
        w: usize,
        b: usize,
        geom: ConvGeom,
    },
    Unary {
        kind: Activation,
        x: usize,
    },
    Softmax {
        x: usize,
        axis: usize,
    },
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Slice {
        x: usize,
        axis: usize,
        start: usize,
    },
    Resize {
        x: usize,
        ay: ResizeAxis,
        ax: ResizeAxis,
    },
    Sum {
        x: usize,
    },
    SumAxis {
        x: usize,
        axis: usize,
    },
    Reshape {
        x: usize,
    },
    Gather {
        x: usize,
        map: Rc<GatherMap>,
    },
    ClampMin {
        x: usize,
        floor: f64,
    },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a differentiable computation.
///
/// Node ids are assigned in creation order, so inputs always precede the
/// nodes that consume them.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Option<Vec<Option<Vec<f64>>>>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers an input tensor.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Registers an input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn rg(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn check_owner(&self, v: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self, v.tape) {
            Ok(())
        } else {
            Err(Error::Autodiff("variable belongs to another tape".into()))
        }
    }

    /// Concatenates `parts` along `axis`.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let shape0 = first.shape();
        if axis >= shape0.len() {
            return Err(Error::shape(format!("concat axis {axis} out of range")));
        }
        let values: Vec<Rc<Tensor>> = parts
            .iter()
            .map(|p| {
                self.check_owner(p)?;
                Ok(self.value_of(p.id))
            })
            .collect::<Result<_>>()?;
        let mut out_shape = shape0.clone();
        out_shape[axis] = 0;
        for v in &values {
            let s = v.shape();
            let compatible = s.len() == shape0.len()
                && s.iter()
                    .zip(&shape0)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::shape(format!(
                    "concat along axis {axis}: {s:?} vs {shape0:?}"
                )));
            }
            out_shape[axis] += s[axis];
        }
        let (outer, total, inner) = kernels::split_axis(&out_shape, axis);
        let mut data = vec![0.0; outer * total * inner];
        let mut offset = 0;
        for v in &values {
            let len = v.shape()[axis];
            for o in 0..outer {
                let src = &v.data()[o * len * inner..(o + 1) * len * inner];
                let dst = (o * total + offset) * inner;
                data[dst..dst + len * inner].copy_from_slice(src);
            }
            offset += len;
        }
        let rg = parts.iter().any(|p| self.rg(p.id));
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.iter().map(|p| p.id).collect(),
                axis,
            },
            rg,
        ))
    }

    /// Gradient of the last [`backward`](Tape::backward) call with respect to
    /// a leaf that requires grad.
    pub fn grad(&self, v: Var<'_>) -> Option<Tensor> {
        let grads = self.grads.borrow();
        let g = grads.as_ref()?.get(v.id)?.as_ref()?;
        let shape = self.nodes.borrow()[v.id].value.shape().to_vec();
        Tensor::new(shape, g.clone()).ok()
    }

    /// Clears stored gradients so that `backward` may run again.
    pub fn reset_grads(&self) {
        *self.grads.borrow_mut() = None;
    }

    /// Reverse sweep from a one-element output. Gradients accumulate across
    /// fan-out and are stored for every leaf with `requires_grad`.
    pub fn backward(&self, output: Var<'_>) -> Result<()> {
        self.check_owner(&output)?;
        if self.grads.borrow().is_some() {
            return Err(Error::Autodiff(
                "backward called twice without reset_grads".into(),
            ));
        }
        let nodes = self.nodes.borrow();
        if nodes[output.id].value.numel() != 1 {
            return Err(Error::Autodiff(format!(
                "backward needs a scalar output, got shape {:?}",
                nodes[output.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if nodes[output.id].requires_grad {
            grads[output.id] = Some(vec![1.0]);
        }
        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop_node(&nodes, node, &g, &mut grads);
        }
        for (id, node) in nodes.iter().enumerate() {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) {
                grads[id] = None;
            } else if grads[id].is_none() && id <= output.id {
                grads[id] = Some(vec![0.0; node.value.numel()]);
            }
        }
        *self.grads.borrow_mut() = Some(grads);
        Ok(())
    }
}

fn accumulate<'g>(
    nodes: &[Node],
    grads: &'g mut [Option<Vec<f64>>],
    id: usize,
) -> Option<&'g mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    let n = nodes[id].value.numel();
    Some(grads[id].get_or_insert_with(|| vec![0.0; n]))
}

fn backprop_node(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let val = |id: usize| -> &Tensor { &nodes[id].value };
    match &node.op {
        Op::Leaf => {}
        Op::Binary { kind, a, b, bmap } => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            let bi = |i: usize| bmap.as_ref().map_or(i, |m| m[i]);
            if let Some(da) = accumulate(nodes, grads, *a) {
                match kind {
                    BinaryKind::Add | BinaryKind::Sub => {
                        da.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi)
                    }
                    BinaryKind::Mul => {
                        for (i, d) in da.iter_mut().enumerate() {
                            *d += g[i] * bv[bi(i)];
                        }
                    }
                    BinaryKind::Div => {
                        for (i, d) in da.iter_mut().enumerate() {
                            *d += g[i] / bv[bi(i)];
                        }
                    }
                }
            }
            if let Some(db) = accumulate(nodes, grads, *b) {
                for (i, &gi) in g.iter().enumerate() {
                    let j = bi(i);
                    db[j] += match kind {
                        BinaryKind::Add => gi,
                        BinaryKind::Sub => -gi,
                        BinaryKind::Mul => gi * av[i],
                        BinaryKind::Div => -gi * av[i] / (bv[j] * bv[j]),
                    };
                }
            }
        }
        Op::Affine { x, scale } => {
            if let Some(dx) = accumulate(nodes, grads, *x) {
                dx.iter_mut().zip(g).for_each(|(d, &gi)| *d += scale * gi);
            }
        }
        Op::MatMul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            let (ad, bd) = (val(*a).data(), val(*b).data());
            if let Some(da) = accumulate(nodes, grads, *a) {
                // dA = dC · Bᵀ
                kernels::gemm(m, n, k, g, (n as isize, 1), bd, (1, n as isize), 1.0, da);
            }
            if let Some(db) = accumulate(nodes, grads, *b) {
                // dB = Aᵀ · dC
                kernels::gemm(k, m, n, ad, (1, k as isize), g, (n as isize, 1), 1.0, db);
            }
        }
        Op::Transpose { x } => {
            let s = val(*x).shape();
            let (r, c) = (s[0], s[1]);
            if let Some(dx) = accumulate(nodes, grads, *x) {
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] += g[j * r + i];
                    }
                }
            }
        }
        Op::Conv { x, w, b, geom } => {
            let c_out = node.value.shape()[0];
            let p = geom.out_len();
            if let Some(dbias) = accumulate(nodes, grads, *b) {
                for (co, d) in dbias.iter_mut().enumerate() {
                    *d += g[co * p..(co + 1) * p].iter().sum::<f64>();
                }
            }
            if let Some(dw) = accumulate(nodes, grads, *w) {
                kernels::conv_backward_kernel(g, val(*x).data(), geom, c_out, dw);
            }
            if let Some(dx) = accumulate(nodes, grads, *x) {
                kernels::conv_backward_input(g, val(*w).data(), geom, c_out, dx);
            }
        }
        Op::Unary { kind, x } => {
            let xv = val(*x).data();
            let yv = node.value.data();
            if let Some(dx) = accumulate(nodes, grads, *x) {
                for i in 0..dx.len() {
                    let local = match kind {
                        Activation::LeakyRelu(s) => {
                            if xv[i] > 0.0 {
                                1.0
                            } else {
                                *s
                            }
                        }
                        Activation::Sigmoid => yv[i] * (1.0 - yv[i]),
                        Activation::Exp => yv[i],
                        Activation::Log => 1.0 / xv[i],
                        Activation::Sqrt => 0.5 / yv[i],
                        Activation::Softplus => stable_sigmoid(xv[i]),
                        Activation::Abs => {
                            if xv[i] > 0.0 {
                                1.0
                            } else if xv[i] < 0.0 {
                                -1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    dx[i] += g[i] * local;
                }
            }
        }
        Op::Softmax { x, axis } => {
            let y = node.value.data();
            let (outer, len, inner) = kernels::split_axis(node.value.shape(), *axis);
            if let Some(dx) = accumulate(nodes, grads, *x) {
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * len + k) * inner + i;
                        let dot: f64 = (0..len).map(|k| g[at(k)] * y[at(k)]).sum();
                        for k in 0..len {
                            dx[at(k)] += y[at(k)] * (g[at(k)] - dot);
                        }
                    }
                }
            }
        }
        Op::Concat { parts, axis } => {
            let (outer, total, inner) = kernels::split_axis(node.value.shape(), *axis);
            let mut offset = 0;
            for &p in parts {
                let len = val(p).shape()[*axis];
                if let Some(dp) = accumulate(nodes, grads, p) {
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        dp[o * len * inner..(o + 1) * len * inner]
                            .iter_mut()
                            .zip(&g[src..src + len * inner])
                            .for_each(|(d, &gi)| *d += gi);
                    }
                }
                offset += len;
            }
        }
        Op::Slice { x, axis, start } => {
            let (outer, total, inner) = kernels::split_axis(val(*x).shape(), *axis);
            let len = node.value.shape()[*axis];
            if let Some(dx) = accumulate(nodes, grads, *x) {
                for o in 0..outer {
                    let dst = (o * total + start) * inner;
                    dx[dst..dst + len * inner]
                        .iter_mut()
                        .zip(&g[o * len * inner..(o + 1) * len * inner])
                        .for_each(|(d, &gi)| *d += gi);
                }
            }
        }
        Op::Resize { x, ay, ax } => {
            let s = val(*x).shape();
            if let Some(dx) = accumulate(nodes, grads, *x) {
                kernels::resize_backward_add(g, s[0], (s[1], s[2]), ay, ax, dx);
            }
        }
        Op::Sum { x } => {
            if let Some(dx) = accumulate(nodes, grads, *x) {
                dx.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::SumAxis { x, axis } => {
            let (outer, len, inner) = kernels::split_axis(val(*x).shape(), *axis);
            if let Some(dx) = accumulate(nodes, grads, *x) {
                for o in 0..outer {
                    for k in 0..len {
                        for i in 0..inner {
                            dx[(o * len + k) * inner + i] += g[o * inner + i];
                        }
                    }
                }
            }
        }
        Op::Reshape { x } => {
            if let Some(dx) = accumulate(nodes, grads, *x) {
                dx.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi);
            }
        }
        Op::Gather { x, map } => {
            if let Some(dx) = accumulate(nodes, grads, *x) {
                for (e, &gi) in map.entries.iter().zip(g) {
                    if let Some(e) = e {
                        dx[e.src] += e.scale * gi;
                    }
                }
            }
        }
        Op::ClampMin { x, floor } => {
            let xv = val(*x).data();
            if let Some(dx) = accumulate(nodes, grads, *x) {
                for i in 0..dx.len() {
                    if xv[i] >= *floor {
                        dx[i] += g[i];
                    }
                }
            }
        }
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.rg(self.id)
    }

    /// Scalar value of a one-element node.
    pub fn item(&self) -> Option<f64> {
        self.value().item()
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.tape.grad(*self)
    }

    /// A gradient-free copy of this node's value.
    pub fn detach(&self) -> Var<'t> {
        self.tape.constant((*self.value()).clone())
    }

    fn unary_op(&self, value: Tensor, op: Op) -> Var<'t> {
        self.tape.push(value, op, self.requires_grad())
    }

    pub fn binary(&self, kind: BinaryKind, other: &Var<'t>) -> Result<Var<'t>> {
        self.tape.check_owner(other)?;
        let (a, b) = (self.value(), other.value());
        let bmap = if a.shape() == b.shape() {
            None
        } else {
            let ok = a.rank() == b.rank()
                && a.shape()
                    .iter()
                    .zip(b.shape())
                    .all(|(&da, &db)| db == da || db == 1);
            if !ok {
                return Err(Error::shape(format!(
                    "{:?} is not broadcastable to {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
            Some(kernels::broadcast_map(a.shape(), b.shape()))
        };
        let bi = |i: usize| bmap.as_ref().map_or(i, |m| m[i]);
        let (ad, bd) = (a.data(), b.data());
        if kind == BinaryKind::Div {
            if let Some(&bad) = bd.iter().find(|v| v.abs() < MIN_DIVISOR) {
                return Err(Error::DivisionByZero(bad));
            }
        }
        let data: Vec<f64> = (0..ad.len())
            .map(|i| {
                let (x, y) = (ad[i], bd[bi(i)]);
                match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                    BinaryKind::Div => x / y,
                }
            })
            .collect();
        let rg = self.requires_grad() || other.requires_grad();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.tape.push(
            out,
            Op::Binary {
                kind,
                a: self.id,
                b: other.id,
                bmap,
            },
            rg,
        ))
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Add, other)
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Sub, other)
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Mul, other)
    }

    pub fn div(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Div, other)
    }

    /// `scale * self + offset`.
    pub fn affine(&self, scale: f64, offset: f64) -> Var<'t> {
        let out = self.value().map(|v| scale * v + offset);
        self.unary_op(out, Op::Affine { x: self.id, scale })
    }

    pub fn scale(&self, factor: f64) -> Var<'t> {
        self.affine(factor, 0.0)
    }

    pub fn add_scalar(&self, offset: f64) -> Var<'t> {
        self.affine(1.0, offset)
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.tape.check_owner(other)?;
        let (a, b) = (self.value(), other.value());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::shape(format!(
                "matmul {:?} x {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut c = vec![0.0; m * n];
        kernels::gemm(
            m,
            k,
            n,
            a.data(),
            (k as isize, 1),
            b.data(),
            (n as isize, 1),
            0.0,
            &mut c,
        );
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(
            Tensor::new(vec![m, n], c)?,
            Op::MatMul {
                a: self.id,
                b: other.id,
                m,
                k,
                n,
            },
            rg,
        ))
    }

    pub fn transpose(&self) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 2 {
            return Err(Error::shape(format!("transpose of {:?}", x.shape())));
        }
        let (r, c) = (x.shape()[0], x.shape()[1]);
        let d = x.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        Ok(self.unary_op(Tensor::new(vec![c, r], out)?, Op::Transpose { x: self.id }))
    }

    /// Zero-padded cross-correlation of a `[C_in, H, W]` input with
    /// `[C_out, C_in, kh, kw]` kernels. Output extents follow
    /// `floor((H + 2·pad − kh) / stride) + 1`.
    pub fn conv2d(
        &self,
        kernels: &Var<'t>,
        bias: &Var<'t>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'t>> {
        self.tape.check_owner(kernels)?;
        self.tape.check_owner(bias)?;
        let (x, w, b) = (self.value(), kernels.value(), bias.value());
        let (xs, ws) = (x.shape(), w.shape());
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] {
            return Err(Error::shape(format!("conv2d input {xs:?} kernels {ws:?}")));
        }
        if b.shape() != [ws[0]] {
            return Err(Error::shape(format!(
                "conv2d bias {:?} for {} outputs",
                b.shape(),
                ws[0]
            )));
        }
        let (kh, kw) = (ws[2], ws[3]);
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid(format!(
                "kernel extents must be odd, got {kh}x{kw}"
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        let (h, wd) = (xs[1], xs[2]);
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::shape(format!(
                "kernel {kh}x{kw} larger than padded input {h}x{wd} (pad {pad})"
            )));
        }
        let geom = ConvGeom {
            c_in: xs[0],
            h,
            w: wd,
            kh,
            kw,
            stride,
            pad,
            out_h: (h + 2 * pad - kh) / stride + 1,
            out_w: (wd + 2 * pad - kw) / stride + 1,
        };
        let c_out = ws[0];
        let out = kernels::conv_forward(x.data(), w.data(), b.data(), &geom);
        let rg = self.requires_grad() || kernels.requires_grad() || bias.requires_grad();
        Ok(self.tape.push(
            Tensor::new(vec![c_out, geom.out_h, geom.out_w], out)?,
            Op::Conv {
                x: self.id,
                w: kernels.id,
                b: bias.id,
                geom,
            },
            rg,
        ))
    }

    pub fn activation(&self, kind: Activation) -> Result<Var<'t>> {
        let x = self.value();
        match kind {
            Activation::Log | Activation::Sqrt => {
                if let Some(&bad) = x.data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
                    return Err(Error::Domain(format!(
                        "{kind:?} requires strictly positive input, got {bad}"
                    )));
                }
            }
            _ => {}
        }
        let out = x.map(|v| match kind {
            Activation::LeakyRelu(s) => {
                if v > 0.0 {
                    v
                } else {
                    s * v
                }
            }
            Activation::Sigmoid => stable_sigmoid(v),
            Activation::Exp => v.exp(),
            Activation::Log => v.ln(),
            Activation::Sqrt => v.sqrt(),
            Activation::Softplus => v.max(0.0) + (-v.abs()).exp().ln_1p(),
            Activation::Abs => v.abs(),
        });
        Ok(self.unary_op(out, Op::Unary { kind, x: self.id }))
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'t> {
        self.activation(Activation::LeakyRelu(slope))
            .expect("leaky relu is total")
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.activation(Activation::Sigmoid)
            .expect("sigmoid is total")
    }

    pub fn exp(&self) -> Var<'t> {
        self.activation(Activation::Exp).expect("exp is total")
    }

    pub fn abs(&self) -> Var<'t> {
        self.activation(Activation::Abs).expect("abs is total")
    }

    pub fn softplus(&self) -> Var<'t> {
        self.activation(Activation::Softplus)
            .expect("softplus is total")
    }

    pub fn log(&self) -> Result<Var<'t>> {
        self.activation(Activation::Log)
    }

    pub fn sqrt(&self) -> Result<Var<'t>> {
        self.activation(Activation::Sqrt)
    }

    pub fn square(&self) -> Var<'t> {
        self.mul(self).expect("same shape")
    }

    /// Normalized exponentials along `axis`, computed with max subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        if axis >= x.rank() {
            return Err(Error::shape(format!(
                "softmax axis {axis} for rank {}",
                x.rank()
            )));
        }
        let (outer, len, inner) = kernels::split_axis(x.shape(), axis);
        let d = x.data();
        let mut out = vec![0.0; d.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| d[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for k in 0..len {
                    let e = (d[at(k)] - max).exp();
                    out[at(k)] = e;
                    sum += e;
                }
                for k in 0..len {
                    out[at(k)] /= sum;
                }
            }
        }
        Ok(self.unary_op(
            Tensor::new(x.shape().to_vec(), out)?,
            Op::Softmax { x: self.id, axis },
        ))
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let x = self.value();
        if axis >= x.rank() || len == 0 || start + len > x.shape()[axis] {
            return Err(Error::shape(format!(
                "slice [{start}, {}) on axis {axis} of {:?}",
                start + len,
                x.shape()
            )));
        }
        let (outer, total, inner) = kernels::split_axis(x.shape(), axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let src = (o * total + start) * inner;
            out.extend_from_slice(&x.data()[src..src + len * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        Ok(self.unary_op(
            Tensor::new(shape, out)?,
            Op::Slice {
                x: self.id,
                axis,
                start,
            },
        ))
    }

    /// Align-corners-false bilinear resampling of a `[C, H, W]` tensor.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 3 {
            return Err(Error::shape(format!(
                "resize expects [C,H,W], got {:?}",
                x.shape()
            )));
        }
        if out_h == 0 || out_w == 0 {
            return Err(Error::invalid("resize target must be at least 1x1"));
        }
        let s = x.shape();
        let ay = ResizeAxis::new(s[1], out_h);
        let ax = ResizeAxis::new(s[2], out_w);
        let out = kernels::resize_forward(x.data(), s[0], (s[1], s[2]), &ay, &ax);
        Ok(self.unary_op(
            Tensor::new(vec![s[0], out_h, out_w], out)?,
            Op::Resize { x: self.id, ay, ax },
        ))
    }

    pub fn sum(&self) -> Var<'t> {
        let s = self.value().data().iter().sum();
        self.unary_op(Tensor::scalar(s), Op::Sum { x: self.id })
    }

    pub fn mean(&self) -> Var<'t> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum along `axis`, keeping it as a singleton dimension.
    pub fn sum_axis(&self, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        if axis >= x.rank() {
            return Err(Error::shape(format!(
                "sum axis {axis} for rank {}",
                x.rank()
            )));
        }
        let (outer, len, inner) = kernels::split_axis(x.shape(), axis);
        let d = x.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += d[(o * len + k) * inner + i];
                }
            }
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = 1;
        Ok(self.unary_op(Tensor::new(shape, out)?, Op::SumAxis { x: self.id, axis }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let out = self.value().reshape(shape.to_vec())?;
        Ok(self.unary_op(out, Op::Reshape { x: self.id }))
    }

    pub fn gather(&self, map: Rc<GatherMap>) -> Result<Var<'t>> {
        let x = self.value();
        if let Some(bad) = map.entries.iter().flatten().find(|e| e.src >= x.numel()) {
            return Err(Error::shape(format!(
                "gather source {} out of range for {} elements",
                bad.src,
                x.numel()
            )));
        }
        let out = Tensor::new(map.out_shape.clone(), map.apply(x.data()))?;
        Ok(self.unary_op(out, Op::Gather { x: self.id, map }))
    }

    /// `max(self, floor)` elementwise; gradient passes where `self >= floor`.
    pub fn clamp_min(&self, floor: f64) -> Var<'t> {
        let out = self.value().map(|v| v.max(floor));
        self.unary_op(out, Op::ClampMin { x: self.id, floor })
    }
}
