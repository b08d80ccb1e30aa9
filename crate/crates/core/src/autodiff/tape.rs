use super::ops::{
    self, axis_extents, check_labels, gelu, gelu_grad, logsumexp_rows, matmul_nt, matmul_raw,
    matmul_tn,
};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ScaleRows(Var, Vec<f64>),
    Gelu(Var),
    Transpose(Var),
    Reshape(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
        reduction: Reduction,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        seq: usize,
        scale: f64,
        probs: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    InterleaveRows(Vec<Var>),
    GroupMeanRows {
        x: Var,
        group: usize,
    },
    SumAll(Var),
    L2NormalizeRows {
        x: Var,
        norms: Vec<f64>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::ScaleRows(..) => "scale_rows",
            Op::Gelu(..) => "gelu",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::Softmax { .. } => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Attention { .. } => "attention",
            Op::ConcatCols(..) => "concat_cols",
            Op::InterleaveRows(..) => "interleave_rows",
            Op::GroupMeanRows { .. } => "group_mean_rows",
            Op::SumAll(..) => "sum",
            Op::L2NormalizeRows { .. } => "l2_normalize_rows",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order of the computation graph.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

type Contribs = Vec<(Var, Vec<f64>)>;

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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match self.value(v).shape() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::dim(op, format!("expected a 2-D tensor, got {s:?}"))),
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::dim(op, format!("shapes differ: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Mul(a, b), &[a, b])
    }

    /// `x[.., n] + bias[n]` broadcast over every row.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = self.value(x).last_dim();
        if self.value(bias).shape() != [n] {
            return Err(Error::dim(
                "add_row",
                format!(
                    "bias {:?} does not match last axis of {:?}",
                    self.value(bias).shape(),
                    self.value(x).shape()
                ),
            ));
        }
        let b = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(v, bv)| v + bv))
            .collect();
        let shape = self.value(x).shape().to_vec();
        self.push(
            Tensor::from_parts(shape, data),
            Op::AddRow(x, bias),
            &[x, bias],
        )
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c), &[x])
    }

    /// Multiply row `i` of a 2-D tensor by the constant `factors[i]`.
    pub fn scale_rows(&mut self, x: Var, factors: Vec<f64>) -> Result<Var> {
        let (r, c) = self.dims2("scale_rows", x)?;
        if factors.len() != r {
            return Err(Error::dim(
                "scale_rows",
                format!("{} factors for {r} rows", factors.len()),
            ));
        }
        let data = self
            .value(x)
            .data()
            .chunks(c)
            .zip(&factors)
            .flat_map(|(row, &f)| row.iter().map(move |v| v * f))
            .collect();
        self.push(
            Tensor::from_parts(vec![r, c], data),
            Op::ScaleRows(x, factors),
            &[x],
        )
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(gelu);
        self.push(out, Op::Gelu(x), &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2("transpose", x)?;
        let src = self.value(x).data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        self.push(Tensor::from_parts(vec![c, r], data), Op::Transpose(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        self.push(out, Op::Reshape(x), &[x])
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = ops::softmax(self.value(x), axis)?;
        self.push(out, Op::Softmax { x, axis }, &[x])
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (y, xhat, inv_std) =
            ops::layer_norm_parts(self.value(x), self.value(gamma), self.value(beta), eps)?;
        self.push(
            y,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// Softmax cross-entropy of `logits[b, n]` against class indices.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        reduction: Reduction,
    ) -> Result<Var> {
        let (b, n) = self.dims2("cross_entropy", logits)?;
        check_labels(b, n, labels)?;
        let x = self.value(logits).data();
        let lse = logsumexp_rows(x, n);
        let mut probs = vec![0.0; b * n];
        let mut total = 0.0;
        for i in 0..b {
            for j in 0..n {
                probs[i * n + j] = (x[i * n + j] - lse[i]).exp();
            }
            total += lse[i] - x[i * n + labels[i]];
        }
        if reduction == Reduction::Mean {
            total /= b as f64;
        }
        self.push(
            Tensor::scalar(total),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
                reduction,
            },
            &[logits],
        )
    }

    /// Scaled dot-product attention applied independently to consecutive
    /// groups of `seq` rows of `q`, `k`, `v` (each `[groups * seq, d]`).
    pub fn attention(&mut self, q: Var, k: Var, v: Var, seq: usize, scale: f64) -> Result<Var> {
        let (nq, d) = self.dims2("attention", q)?;
        let (nk, dk) = self.dims2("attention", k)?;
        let (nv, dv) = self.dims2("attention", v)?;
        if seq == 0 || nq % seq != 0 || nk != nq || nv != nq || dk != d {
            return Err(Error::dim(
                "attention",
                format!(
                    "q {:?}, k {:?}, v {:?} incompatible with sequence length {seq}",
                    self.value(q).shape(),
                    self.value(k).shape(),
                    self.value(v).shape()
                ),
            ));
        }
        let groups = nq / seq;
        let (qd, kd, vd) = (
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
        );
        let mut probs = vec![0.0; groups * seq * seq];
        let mut out = vec![0.0; nq * dv];
        for g in 0..groups {
            let base = g * seq;
            let qg = &qd[base * d..(base + seq) * d];
            let kg = &kd[base * d..(base + seq) * d];
            let vg = &vd[base * dv..(base + seq) * dv];
            let mut scores = matmul_nt(qg, kg, seq, d, seq);
            scores.iter_mut().for_each(|s| *s *= scale);
            let p = ops::softmax(&Tensor::from_parts(vec![seq, seq], scores), 1)?.into_data();
            let o = matmul_raw(&p, vg, seq, seq, dv);
            out[base * dv..(base + seq) * dv].copy_from_slice(&o);
            probs[g * seq * seq..(g + 1) * seq * seq].copy_from_slice(&p);
        }
        self.push(
            Tensor::from_parts(vec![nq, dv], out),
            Op::Attention {
                q,
                k,
                v,
                seq,
                scale,
                probs,
            },
            &[q, k, v],
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let dims = parts
            .iter()
            .map(|&p| self.dims2("concat_cols", p))
            .collect::<Result<Vec<_>>>()?;
        let rows = match dims.first() {
            Some(&(r, _)) => r,
            None => return Err(Error::dim("concat_cols", "no inputs")),
        };
        if dims.iter().any(|&(r, _)| r != rows) {
            return Err(Error::dim(
                "concat_cols",
                format!("row counts differ: {dims:?}"),
            ));
        }
        let total: usize = dims.iter().map(|&(_, c)| c).sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &(_, c)) in parts.iter().zip(&dims) {
                data.extend_from_slice(&self.value(p).data()[i * c..(i + 1) * c]);
            }
        }
        self.push(
            Tensor::from_parts(vec![rows, total], data),
            Op::ConcatCols(parts.to_vec()),
            parts,
        )
    }

    /// Interleave rows of equally shaped inputs: with inputs `x0, x1` of
    /// shape `[b, d]` the output is `[2b, d]` ordered `x0[0], x1[0], x0[1], ...`.
    /// Rank-1 inputs are treated as single rows, so stacking vectors into a
    /// sequence is the `b = 1` case.
    pub fn interleave_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let dims = parts
            .iter()
            .map(|&p| {
                self.value(p)
                    .matrix_dims()
                    .ok_or_else(|| Error::dim("interleave_rows", "inputs must be 1-D or 2-D"))
            })
            .collect::<Result<Vec<_>>>()?;
        let (b, d) = match dims.first() {
            Some(&first) => first,
            None => return Err(Error::dim("interleave_rows", "no inputs")),
        };
        if dims.iter().any(|&x| x != (b, d)) {
            return Err(Error::dim(
                "interleave_rows",
                format!("shapes differ: {dims:?}"),
            ));
        }
        let k = parts.len();
        let mut data = Vec::with_capacity(b * k * d);
        for i in 0..b {
            for &p in parts {
                data.extend_from_slice(&self.value(p).data()[i * d..(i + 1) * d]);
            }
        }
        self.push(
            Tensor::from_parts(vec![b * k, d], data),
            Op::InterleaveRows(parts.to_vec()),
            parts,
        )
    }

    /// Mean of each consecutive block of `group` rows: `[b * group, d] -> [b, d]`.
    pub fn group_mean_rows(&mut self, x: Var, group: usize) -> Result<Var> {
        let (r, c) = self.dims2("group_mean_rows", x)?;
        if group == 0 || r % group != 0 {
            return Err(Error::dim(
                "group_mean_rows",
                format!("{r} rows not divisible into groups of {group}"),
            ));
        }
        let b = r / group;
        let src = self.value(x).data();
        let mut data = vec![0.0; b * c];
        for i in 0..r {
            let dst = &mut data[(i / group) * c..(i / group + 1) * c];
            for (o, v) in dst.iter_mut().zip(&src[i * c..(i + 1) * c]) {
                *o += v;
            }
        }
        data.iter_mut().for_each(|v| *v /= group as f64);
        self.push(
            Tensor::from_parts(vec![b, c], data),
            Op::GroupMeanRows { x, group },
            &[x],
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::SumAll(x), &[x])
    }

    /// `Σ x ⊙ w` for a constant weight tensor; handy for reducing a tensor
    /// output to a scalar with non-trivial gradients.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor) -> Result<Var> {
        let w = self.constant(weights);
        let p = self.mul(x, w)?;
        self.sum(p)
    }

    /// Divide each row by its Euclidean norm.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t
            .matrix_dims()
            .ok_or_else(|| Error::dim("l2_normalize_rows", "input must be 1-D or 2-D"))?;
        let norms: Vec<f64> = t
            .data()
            .chunks(c)
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        if norms.iter().any(|&n| n == 0.0) {
            return Err(Error::InvalidParameter(
                "cannot normalize a zero-norm row".into(),
            ));
        }
        let data = t
            .data()
            .chunks(c)
            .zip(&norms)
            .flat_map(|(row, &n)| row.iter().map(move |v| v / n))
            .collect();
        let shape = t.shape().to_vec();
        debug_assert_eq!(r * c, t.numel());
        self.push(
            Tensor::from_parts(shape, data),
            Op::L2NormalizeRows { x, norms },
            &[x],
        )
    }

    /// Reverse sweep from a single-element `loss`. Gradients accumulate into
    /// every node that requires them; call [`Tape::zero_grad`] before reusing
    /// the tape for another sweep.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::dim(
                "backward",
                format!("loss must be a scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        let seed = Tensor::from_parts(self.value(loss).shape().to_vec(), vec![1.0]);
        self.accumulate(loss, seed.into_data());
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let contribs = match self.nodes[i].grad.as_ref() {
                Some(g) => self.backward_op(i, g.data())?,
                None => continue,
            };
            for (v, g) in contribs {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite {
                        op: self.nodes[i].op.name(),
                    });
                }
                if self.nodes[v.0].requires_grad {
                    self.accumulate(v, g);
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Vec<f64>) {
        let node = &mut self.nodes[v.0];
        match node.grad.as_mut() {
            Some(existing) => {
                for (e, x) in existing.data_mut().iter_mut().zip(g) {
                    *e += x;
                }
            }
            None => node.grad = Some(Tensor::from_parts(node.value.shape().to_vec(), g)),
        }
    }

    fn backward_op(&self, i: usize, g: &[f64]) -> Result<Contribs> {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.data();
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let mut out: Contribs = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims2("matmul", *a)?;
                let n = self.value(*b).shape()[1];
                if needs(*a) {
                    out.push((*a, matmul_nt(g, val(*b), m, n, k)));
                }
                if needs(*b) {
                    out.push((*b, matmul_tn(val(*a), g, m, k, n)));
                }
            }
            Op::Add(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.to_vec()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.iter().map(|x| -x).collect()));
            }
            Op::Mul(a, b) => {
                out.push((*a, g.iter().zip(val(*b)).map(|(x, y)| x * y).collect()));
                out.push((*b, g.iter().zip(val(*a)).map(|(x, y)| x * y).collect()));
            }
            Op::AddRow(x, bias) => {
                let n = self.value(*bias).numel();
                let mut gb = vec![0.0; n];
                for row in g.chunks(n) {
                    for (o, v) in gb.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                out.push((*x, g.to_vec()));
                out.push((*bias, gb));
            }
            Op::Scale(x, c) => out.push((*x, g.iter().map(|v| v * c).collect())),
            Op::ScaleRows(x, factors) => {
                let c = self.value(*x).last_dim();
                let gx = g
                    .chunks(c)
                    .zip(factors)
                    .flat_map(|(row, &f)| row.iter().map(move |v| v * f))
                    .collect();
                out.push((*x, gx));
            }
            Op::Gelu(x) => out.push((
                *x,
                g.iter()
                    .zip(val(*x))
                    .map(|(gv, &xv)| gv * gelu_grad(xv))
                    .collect(),
            )),
            Op::Transpose(x) => {
                let (r, c) = self.dims2("transpose", *x)?;
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        gx[i * c + j] = g[j * r + i];
                    }
                }
                out.push((*x, gx));
            }
            Op::Reshape(x) => out.push((*x, g.to_vec())),
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, n, inner) = axis_extents(node.value.shape(), *axis);
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for ii in 0..inner {
                        let at = |j: usize| o * n * inner + j * inner + ii;
                        let dot: f64 = (0..n).map(|j| g[at(j)] * y[at(j)]).sum();
                        for j in 0..n {
                            gx[at(j)] = y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
                out.push((*x, gx));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = self.value(*gamma).numel();
                let gam = val(*gamma);
                let mut gg = vec![0.0; d];
                let mut gbeta = vec![0.0; d];
                let mut gx = vec![0.0; g.len()];
                for (r, &is) in inv_std.iter().enumerate() {
                    let gr = &g[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..d {
                        gg[j] += gr[j] * hr[j];
                        gbeta[j] += gr[j];
                        let dh = gr[j] * gam[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hr[j];
                    }
                    for j in 0..d {
                        let dh = gr[j] * gam[j];
                        gx[r * d + j] = is / d as f64 * (d as f64 * dh - sum_dh - hr[j] * sum_dh_h);
                    }
                }
                out.push((*x, gx));
                out.push((*gamma, gg));
                out.push((*beta, gbeta));
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
                reduction,
            } => {
                let n = self.value(*logits).shape()[1];
                let scale = match reduction {
                    Reduction::Mean => g[0] / labels.len() as f64,
                    Reduction::Sum => g[0],
                };
                let mut gx: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (i, &y) in labels.iter().enumerate() {
                    gx[i * n + y] -= scale;
                }
                out.push((*logits, gx));
            }
            Op::Attention {
                q,
                k,
                v,
                seq,
                scale,
                probs,
            } => {
                let s = *seq;
                let (nq, d) = self.dims2("attention", *q)?;
                let dv = self.value(*v).shape()[1];
                let (qd, kd, vd) = (val(*q), val(*k), val(*v));
                let mut gq = vec![0.0; nq * d];
                let mut gk = vec![0.0; nq * d];
                let mut gv = vec![0.0; nq * dv];
                for grp in 0..nq / s {
                    let base = grp * s;
                    let p = &probs[grp * s * s..(grp + 1) * s * s];
                    let go = &g[base * dv..(base + s) * dv];
                    let vg = &vd[base * dv..(base + s) * dv];
                    let qg = &qd[base * d..(base + s) * d];
                    let kg = &kd[base * d..(base + s) * d];
                    // dV = Pᵀ dO
                    let gvg = matmul_tn(p, go, s, s, dv);
                    // dP = dO Vᵀ, dS = P ⊙ (dP - rowsum(dP ⊙ P)) * scale
                    let dp = matmul_nt(go, vg, s, dv, s);
                    let mut ds = vec![0.0; s * s];
                    for r in 0..s {
                        let dot: f64 = (0..s).map(|c| dp[r * s + c] * p[r * s + c]).sum();
                        for c in 0..s {
                            ds[r * s + c] = p[r * s + c] * (dp[r * s + c] - dot) * scale;
                        }
                    }
                    let gqg = matmul_raw(&ds, kg, s, s, d);
                    let gkg = matmul_tn(&ds, qg, s, s, d);
                    gq[base * d..(base + s) * d].copy_from_slice(&gqg);
                    gk[base * d..(base + s) * d].copy_from_slice(&gkg);
                    gv[base * dv..(base + s) * dv].copy_from_slice(&gvg);
                }
                out.push((*q, gq));
                out.push((*k, gk));
                out.push((*v, gv));
            }
            Op::ConcatCols(parts) => {
                let total = node.value.shape()[1];
                let rows = node.value.shape()[0];
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).shape()[1];
                    let mut gp = Vec::with_capacity(rows * c);
                    for r in 0..rows {
                        gp.extend_from_slice(&g[r * total + offset..r * total + offset + c]);
                    }
                    offset += c;
                    out.push((p, gp));
                }
            }
            Op::InterleaveRows(parts) => {
                let k = parts.len();
                let d = node.value.shape()[1];
                let b = node.value.shape()[0] / k;
                for (idx, &p) in parts.iter().enumerate() {
                    let mut gp = Vec::with_capacity(b * d);
                    for r in 0..b {
                        let src = (r * k + idx) * d;
                        gp.extend_from_slice(&g[src..src + d]);
                    }
                    out.push((p, gp));
                }
            }
            Op::GroupMeanRows { x, group } => {
                let (r, c) = self.dims2("group_mean_rows", *x)?;
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    let src = &g[(i / group) * c..(i / group + 1) * c];
                    for (o, v) in gx[i * c..(i + 1) * c].iter_mut().zip(src) {
                        *o = v / *group as f64;
                    }
                }
                out.push((*x, gx));
            }
            Op::SumAll(x) => out.push((*x, vec![g[0]; self.value(*x).numel()])),
            Op::L2NormalizeRows { x, norms } => {
                let y = node.value.data();
                let c = node.value.last_dim();
                let mut gx = vec![0.0; y.len()];
                for (r, &n) in norms.iter().enumerate() {
                    let yr = &y[r * c..(r + 1) * c];
                    let gr = &g[r * c..(r + 1) * c];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        gx[r * c + j] = (gr[j] - yr[j] * dot) / n;
                    }
                }
                out.push((*x, gx));
            }
        }
        Ok(out)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect()
}
