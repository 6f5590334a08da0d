//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation of one forward pass together with its
//! output. [`Graph::backward`] walks the tape in reverse from a scalar root.
//! Parameters are read from a borrowed [`ParameterSet`]; only groups named in
//! the graph's [`GroupMask`] receive gradients.

mod conv;

use alloc::vec;
use alloc::vec::Vec;

pub use conv::{conv2d, conv2d_backward, ConvSpec};

use crate::error::{dim_err, Result};
use crate::math::sigmoid;
use crate::nets::{
    BnSlots, ConvSlots, GroupMask, LinearSlots, ParamGrads, ParamSlot, ParameterSet,
};
use crate::tensor::{gemm, MatRef, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// How a normalization layer gets its statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Per-batch statistics; running estimates are recorded for the trainer.
    Batch,
    /// Stored running statistics, treated as constants.
    Frozen,
}

/// Batch statistics seen by one normalization layer, for running-average
/// updates. Variance is unbiased.
#[derive(Clone, Debug)]
pub struct BnRecord {
    pub slots: BnSlots,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

enum Op {
    Input,
    Param(ParamSlot),
    Conv {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        spec: ConvSpec,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Tensor,
        inv_std: Vec<f64>,
        batch: bool,
    },
    PRelu {
        x: NodeId,
        slope: NodeId,
    },
    LeakyRelu {
        x: NodeId,
        slope: f64,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    PixelShuffle {
        x: NodeId,
        r: usize,
    },
    Upsample {
        x: NodeId,
        r: usize,
    },
    Concat(NodeId, NodeId),
    External {
        x: NodeId,
        grad: Tensor,
    },
    WeightedSum(Vec<(NodeId, f64)>),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

pub struct Graph<'p> {
    params: &'p ParameterSet,
    mask: GroupMask,
    nodes: Vec<Node>,
    bn_records: Vec<BnRecord>,
}

/// Gradients of a scalar root with respect to every node that needed one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }
}

impl<'p> Graph<'p> {
    /// A graph reading from `params` and differentiating the groups in `mask`.
    pub fn new(params: &'p ParameterSet, mask: GroupMask) -> Self {
        Graph {
            params,
            mask,
            nodes: Vec::new(),
            bn_records: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParameterSet {
        self.params
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn bn_records(&self) -> &[BnRecord] {
        &self.bn_records
    }

    pub fn take_bn_records(&mut self) -> Vec<BnRecord> {
        core::mem::take(&mut self.bn_records)
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn input(&mut self, t: Tensor, requires_grad: bool) -> NodeId {
        self.push(Op::Input, t, requires_grad)
    }

    pub fn param(&mut self, slot: ParamSlot) -> NodeId {
        let t = self.params.tensor(&slot);
        let ng = self.mask.contains(slot.group);
        self.push(Op::Param(slot), t, ng)
    }

    pub fn conv(&mut self, x: NodeId, slots: &ConvSlots) -> Result<NodeId> {
        let w = self.param(slots.weight);
        let b = slots.bias.map(|s| self.param(s));
        let y = conv2d(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            slots.spec,
        )?;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(
            Op::Conv {
                x,
                w,
                b,
                spec: slots.spec,
            },
            y,
            ng,
        ))
    }

    /// Dense layer over each sample's flattened features.
    pub fn linear(&mut self, x: NodeId, slots: &LinearSlots) -> Result<NodeId> {
        let w = self.param(slots.weight);
        let b = self.param(slots.bias);
        let xs = self.value(x).shape();
        let ws = self.value(w).shape();
        let fin = xs.sample_len();
        if ws.c != fin {
            return Err(dim_err!(
                "linear layer expects {} features, got {}",
                ws.c,
                fin
            ));
        }
        let fout = ws.n;
        let mut y = Tensor::zeros(Shape::new(xs.n, fout, 1, 1));
        for row in y.data_mut().chunks_mut(fout) {
            row.copy_from_slice(self.nodes[b.0].value.data());
        }
        gemm(
            MatRef::new(self.value(x).data(), xs.n, fin),
            MatRef::t(self.value(w).data(), fout, fin),
            1.0,
            y.data_mut(),
        );
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(Op::Linear { x, w, b }, y, ng))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(dim_err!(
                "add shape mismatch {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Op::Add(a, b), y, ng))
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        let y = self.value(x).scaled(k);
        let ng = self.ng(x);
        self.push(Op::Scale(x, k), y, ng)
    }

    pub fn batch_norm(
        &mut self,
        x: NodeId,
        slots: &BnSlots,
        mode: NormMode,
        eps: f64,
    ) -> Result<NodeId> {
        let gamma = self.param(slots.gamma);
        let beta = self.param(slots.beta);
        let xv = self.value(x);
        let s = xv.shape();
        if slots.gamma.shape.c != s.c {
            return Err(dim_err!(
                "normalization over {} channels applied to {:?}",
                slots.gamma.shape.c,
                s
            ));
        }
        let m = (s.n * s.h * s.w) as f64;
        let plane = s.plane();
        let (mean, var) = match mode {
            NormMode::Batch => {
                let mut mean = vec![0.0; s.c];
                let mut var = vec![0.0; s.c];
                for n in 0..s.n {
                    for (c, chunk) in xv.sample(n).chunks(plane).enumerate() {
                        mean[c] += chunk.iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|v| *v /= m);
                for n in 0..s.n {
                    for (c, chunk) in xv.sample(n).chunks(plane).enumerate() {
                        var[c] += chunk
                            .iter()
                            .map(|v| (v - mean[c]) * (v - mean[c]))
                            .sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= m);
                (mean, var)
            }
            NormMode::Frozen => (
                self.params.buffer(&slots.running_mean).to_vec(),
                self.params.buffer(&slots.running_var).to_vec(),
            ),
        };
        let inv_std: Vec<f64> = var
            .iter()
            .map(|v| 1.0 / crate::math::sqrt(v + eps))
            .collect();
        let mut xhat = xv.clone();
        for n in 0..s.n {
            for (c, chunk) in xhat.sample_mut(n).chunks_mut(plane).enumerate() {
                chunk
                    .iter_mut()
                    .for_each(|v| *v = (*v - mean[c]) * inv_std[c]);
            }
        }
        let g = self.value(gamma).data().to_vec();
        let bt = self.value(beta).data().to_vec();
        let mut y = xhat.clone();
        for n in 0..s.n {
            for (c, chunk) in y.sample_mut(n).chunks_mut(plane).enumerate() {
                chunk.iter_mut().for_each(|v| *v = *v * g[c] + bt[c]);
            }
        }
        if mode == NormMode::Batch {
            let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            self.bn_records.push(BnRecord {
                slots: *slots,
                mean,
                var: var.iter().map(|v| v * unbias).collect(),
            });
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch: mode == NormMode::Batch,
            },
            y,
            ng,
        ))
    }

    /// Leaky rectification with one learned slope per channel.
    pub fn prelu(&mut self, x: NodeId, slot: ParamSlot) -> Result<NodeId> {
        let slope = self.param(slot);
        let s = self.value(x).shape();
        if slot.shape.c != s.c {
            return Err(dim_err!(
                "prelu over {} channels applied to {:?}",
                slot.shape.c,
                s
            ));
        }
        let a = self.value(slope).data().to_vec();
        let mut y = self.value(x).clone();
        let plane = s.plane();
        for n in 0..s.n {
            for (c, chunk) in y.sample_mut(n).chunks_mut(plane).enumerate() {
                chunk.iter_mut().for_each(|v| {
                    if *v < 0.0 {
                        *v *= a[c]
                    }
                });
            }
        }
        let ng = self.ng(x) || self.ng(slope);
        Ok(self.push(Op::PRelu { x, slope }, y, ng))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let y = self.value(x).map(|v| if v < 0.0 { slope * v } else { v });
        let ng = self.ng(x);
        self.push(Op::LeakyRelu { x, slope }, y, ng)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let y = self.value(x).map(|v| v.max(0.0));
        let ng = self.ng(x);
        self.push(Op::Relu(x), y, ng)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y = self.value(x).map(sigmoid);
        let ng = self.ng(x);
        self.push(Op::Sigmoid(x), y, ng)
    }

    pub fn pixel_shuffle(&mut self, x: NodeId, r: usize) -> Result<NodeId> {
        let y = pixel_shuffle(self.value(x), r)?;
        let ng = self.ng(x);
        Ok(self.push(Op::PixelShuffle { x, r }, y, ng))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample(&mut self, x: NodeId, r: usize) -> NodeId {
        let xv = self.value(x);
        let s = xv.shape();
        let y = Tensor::from_fn(Shape::new(s.n, s.c, s.h * r, s.w * r), |n, c, yy, xx| {
            xv.at(n, c, yy / r, xx / r)
        });
        let ng = self.ng(x);
        self.push(Op::Upsample { x, r }, y, ng)
    }

    /// Channel concatenation.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
            return Err(dim_err!("concat shape mismatch {:?} vs {:?}", sa, sb));
        }
        let mut data = Vec::with_capacity(sa.len() + sb.len());
        for n in 0..sa.n {
            data.extend_from_slice(self.value(a).sample(n));
            data.extend_from_slice(self.value(b).sample(n));
        }
        let y = Tensor::from_vec(Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Op::Concat(a, b), y, ng))
    }

    /// A scalar computed outside the graph from `x`, with its gradient.
    pub fn external(&mut self, x: NodeId, value: f64, grad: Tensor) -> Result<NodeId> {
        if grad.shape() != self.value(x).shape() {
            return Err(dim_err!(
                "external gradient {:?} does not match node {:?}",
                grad.shape(),
                self.value(x).shape()
            ));
        }
        let ng = self.ng(x);
        Ok(self.push(Op::External { x, grad }, Tensor::scalar(value), ng))
    }

    /// `sum_i k_i * s_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let mut total = 0.0;
        for &(id, k) in terms {
            let v = self.value(id);
            if v.len() != 1 {
                return Err(dim_err!("weighted sum over non-scalar {:?}", v.shape()));
            }
            total += k * v.data()[0];
        }
        let ng = terms.iter().any(|&(id, _)| self.ng(id));
        Ok(self.push(Op::WeightedSum(terms.to_vec()), Tensor::scalar(total), ng))
    }

    /// Reverse pass from `root`, seeded with `seed` (same shape as the root).
    pub fn backward_with(&self, root: NodeId, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.value(root).shape() {
            return Err(dim_err!(
                "seed {:?} does not match root {:?}",
                seed.shape(),
                self.value(root).shape()
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backward_node(node, &dy, &mut grads)?;
            grads[i] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        self.backward_with(root, Tensor::filled(self.value(root).shape(), 1.0))
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.ng(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(t) => t.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backward_node(&self, node: &Node, dy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Conv { x, w, b, spec } => {
                let (dx, dw, db) = conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    dy,
                    *spec,
                    self.ng(*x),
                    self.ng(*w),
                    b.is_some_and(|b| self.ng(b)),
                )?;
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    let shape = self.value(*b).shape();
                    self.accumulate(grads, *b, Tensor::from_vec(shape, db)?);
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.value(*x).shape();
                let ws = self.value(*w).shape();
                let (fin, fout) = (ws.c, ws.n);
                if self.ng(*x) {
                    let mut dx = Tensor::zeros(xs);
                    gemm(
                        MatRef::new(dy.data(), xs.n, fout),
                        MatRef::new(self.value(*w).data(), fout, fin),
                        0.0,
                        dx.data_mut(),
                    );
                    self.accumulate(grads, *x, dx);
                }
                if self.ng(*w) {
                    let mut dw = Tensor::zeros(ws);
                    gemm(
                        MatRef::t(dy.data(), xs.n, fout),
                        MatRef::new(self.value(*x).data(), xs.n, fin),
                        0.0,
                        dw.data_mut(),
                    );
                    self.accumulate(grads, *w, dw);
                }
                if self.ng(*b) {
                    let mut db = Tensor::zeros(self.value(*b).shape());
                    for row in dy.data().chunks(fout) {
                        for (d, g) in db.data_mut().iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, dy.clone());
                self.accumulate(grads, *b, dy.clone());
            }
            Op::Scale(x, k) => self.accumulate(grads, *x, dy.scaled(*k)),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch,
            } => {
                let s = xhat.shape();
                let plane = s.plane();
                let m = (s.n * plane) as f64;
                let mut sum_dy = vec![0.0; s.c];
                let mut sum_dy_xhat = vec![0.0; s.c];
                for n in 0..s.n {
                    for c in 0..s.c {
                        let d = &dy.sample(n)[c * plane..(c + 1) * plane];
                        let xh = &xhat.sample(n)[c * plane..(c + 1) * plane];
                        sum_dy[c] += d.iter().sum::<f64>();
                        sum_dy_xhat[c] += d.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                let g = self.value(*gamma).data();
                if self.ng(*x) {
                    let mut dx = Tensor::zeros(s);
                    for n in 0..s.n {
                        for c in 0..s.c {
                            let d = &dy.sample(n)[c * plane..(c + 1) * plane];
                            let xh = &xhat.sample(n)[c * plane..(c + 1) * plane];
                            let out = &mut dx.sample_mut(n)[c * plane..(c + 1) * plane];
                            let k = g[c] * inv_std[c];
                            if *batch {
                                let (mdy, mdyx) = (sum_dy[c] / m, sum_dy_xhat[c] / m);
                                for ((o, d), xh) in out.iter_mut().zip(d).zip(xh) {
                                    *o = k * (d - mdy - xh * mdyx);
                                }
                            } else {
                                for (o, d) in out.iter_mut().zip(d) {
                                    *o = k * d;
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                let cshape = Shape::new(1, s.c, 1, 1);
                self.accumulate(grads, *gamma, Tensor::from_vec(cshape, sum_dy_xhat)?);
                self.accumulate(grads, *beta, Tensor::from_vec(cshape, sum_dy)?);
            }
            Op::PRelu { x, slope } => {
                let xv = self.value(*x);
                let s = xv.shape();
                let plane = s.plane();
                let a = self.value(*slope).data();
                let mut dx = dy.clone();
                let mut da = vec![0.0; s.c];
                for n in 0..s.n {
                    for c in 0..s.c {
                        let xs = &xv.sample(n)[c * plane..(c + 1) * plane];
                        let d = &mut dx.sample_mut(n)[c * plane..(c + 1) * plane];
                        for (g, &xv) in d.iter_mut().zip(xs) {
                            if xv < 0.0 {
                                da[c] += *g * xv;
                                *g *= a[c];
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, dx);
                self.accumulate(
                    grads,
                    *slope,
                    Tensor::from_vec(Shape::new(1, s.c, 1, 1), da)?,
                );
            }
            Op::LeakyRelu { x, slope } => {
                let mut dx = dy.clone();
                for (g, &v) in dx.data_mut().iter_mut().zip(self.value(*x).data()) {
                    if v < 0.0 {
                        *g *= slope;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Relu(x) => {
                let mut dx = dy.clone();
                for (g, &v) in dx.data_mut().iter_mut().zip(self.value(*x).data()) {
                    if v <= 0.0 {
                        *g = 0.0;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Sigmoid(x) => {
                let mut dx = dy.clone();
                for (g, &y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                    *g *= y * (1.0 - y);
                }
                self.accumulate(grads, *x, dx);
            }
            Op::PixelShuffle { x, r } => {
                let dx = pixel_unshuffle(dy, *r)?;
                self.accumulate(grads, *x, dx);
            }
            Op::Upsample { x, r } => {
                let s = self.value(*x).shape();
                let mut dx = Tensor::zeros(s);
                let ds = dy.shape();
                for n in 0..ds.n {
                    for c in 0..ds.c {
                        for yy in 0..ds.h {
                            for xx in 0..ds.w {
                                let i = dx.index(n, c, yy / r, xx / r);
                                dx.data_mut()[i] += dy.at(n, c, yy, xx);
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Concat(a, b) => {
                let (sa, sb) = (self.value(*a).shape(), self.value(*b).shape());
                let la = sa.sample_len();
                let mut da = Vec::with_capacity(sa.len());
                let mut db = Vec::with_capacity(sb.len());
                for n in 0..sa.n {
                    let d = dy.sample(n);
                    da.extend_from_slice(&d[..la]);
                    db.extend_from_slice(&d[la..]);
                }
                self.accumulate(grads, *a, Tensor::from_vec(sa, da)?);
                self.accumulate(grads, *b, Tensor::from_vec(sb, db)?);
            }
            Op::External { x, grad } => self.accumulate(grads, *x, grad.scaled(dy.data()[0])),
            Op::WeightedSum(terms) => {
                for &(id, k) in terms {
                    self.accumulate(grads, id, Tensor::scalar(k * dy.data()[0]));
                }
            }
        }
        Ok(())
    }

    /// Parameter gradients gathered into per-group flat vectors.
    pub fn param_grads(&self, grads: &Gradients) -> ParamGrads {
        let mut out = ParamGrads::default();
        for g in self.mask.iter() {
            out.ensure(g, self.params.group(g).values.len());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(slot), Some(g)) = (&node.op, &grads.grads[i]) {
                if let Some(dst) = out.get_mut(slot.group) {
                    for (d, v) in dst[slot.range()].iter_mut().zip(g.data()) {
                        *d += v;
                    }
                }
            }
        }
        out
    }
}

/// `(C r^2, H, W) -> (C, rH, rW)`: output `(c, y, x)` reads input channel
/// `c r^2 + r (y mod r) + (x mod r)` at `(y / r, x / r)`.
pub fn pixel_shuffle(t: &Tensor, r: usize) -> Result<Tensor> {
    let s = t.shape();
    if r == 0 || s.c % (r * r) != 0 {
        return Err(dim_err!(
            "pixel shuffle: {} channels not divisible by {}",
            s.c,
            r * r
        ));
    }
    let c_out = s.c / (r * r);
    Ok(Tensor::from_fn(
        Shape::new(s.n, c_out, s.h * r, s.w * r),
        |n, c, y, x| t.at(n, c * r * r + r * (y % r) + (x % r), y / r, x / r),
    ))
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(t: &Tensor, r: usize) -> Result<Tensor> {
    let s = t.shape();
    if r == 0 || s.h % r != 0 || s.w % r != 0 {
        return Err(dim_err!("pixel unshuffle: {:?} not divisible by {}", s, r));
    }
    Ok(Tensor::from_fn(
        Shape::new(s.n, s.c * r * r, s.h / r, s.w / r),
        |n, c, y, x| {
            let base = c / (r * r);
            let k = c % (r * r);
            t.at(n, base, y * r + k / r, x * r + k % r)
        },
    ))
}
