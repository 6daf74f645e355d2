//! Define-by-run reverse-mode differentiation over whole tensors.
//!
//! Every operation appends a node holding its forward value, so node ids are
//! a topological order by construction. [`Tape::backward`] walks the nodes in
//! reverse and accumulates adjoints into every node that requires a gradient.
//! A tape is rebuilt for each forward pass and owned by a single thread.

use std::sync::Arc;

use crate::error::{Error, Result};

use super::kernels::{self, Mask};
use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    AddScalar(f64),
    Scale(f64),
    Square,
    Sqrt,
    Sum,
    Mean,
    MatMul,
    Transpose,
    Reshape(Vec<usize>),
    MaskedSoftmax(Arc<Mask>),
    Gather(Arc<Vec<Option<usize>>>, Vec<usize>),
    PadRows(usize),
    /// Optional support pattern: the map gradient is only formed on it.
    TimeMap(Option<Arc<Mask>>),
    ConcatChannels,
    CausalConv,
    Readout,
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of a scalar loss with respect to the nodes of one tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of the right shape when the loss does not
    /// depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn eval(op: &Op, x: &[&Tensor]) -> Result<Tensor> {
    let elementwise = |name: &'static str, f: fn(f64, f64) -> f64| -> Result<Tensor> {
        kernels::same_shape(name, x[0], x[1])?;
        let data = x[0].data().iter().zip(x[1].data()).map(|(&a, &b)| f(a, b)).collect();
        Tensor::new(x[0].shape().to_vec(), data)
    };
    match op {
        Op::Leaf => unreachable!("leaves are never re-evaluated"),
        Op::Add => elementwise("add", |a, b| a + b),
        Op::Sub => elementwise("sub", |a, b| a - b),
        Op::Mul => elementwise("mul", |a, b| a * b),
        Op::Div => elementwise("div", |a, b| a / b),
        Op::AddScalar(s) => Ok(x[0].map(|v| v + s)),
        Op::Scale(s) => Ok(x[0].map(|v| v * s)),
        Op::Square => Ok(x[0].map(|v| v * v)),
        Op::Sqrt => Ok(x[0].map(f64::sqrt)),
        Op::Sum => Ok(Tensor::scalar(x[0].sum())),
        Op::Mean => {
            if x[0].is_empty() {
                return Err(Error::Invalid("mean of an empty tensor".into()));
            }
            Ok(Tensor::scalar(x[0].sum() / x[0].len() as f64))
        }
        Op::MatMul => kernels::matmul(x[0], x[1]),
        Op::Transpose => kernels::transpose(x[0]),
        Op::Reshape(shape) => x[0].reshaped(shape),
        Op::MaskedSoftmax(mask) => kernels::masked_row_softmax(x[0], mask),
        Op::Gather(index, shape) => kernels::gather(x[0], index, shape),
        Op::PadRows(rows) => kernels::pad_rows(x[0], *rows),
        Op::TimeMap(_) => kernels::time_map(x[0], x[1]),
        Op::ConcatChannels => kernels::concat_channels(x),
        Op::CausalConv => kernels::causal_conv1d(x[0], x[1], x[2]),
        Op::Readout => kernels::readout(x[0], x[1], x[2]),
    }
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
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

    fn push(&mut self, op: Op, inputs: Vec<Var>) -> Result<Var> {
        let value = {
            let args: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            eval(&op, &args)?
        };
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add, vec![a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub, vec![a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul, vec![a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Div, vec![a, b])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.push(Op::AddScalar(s), vec![a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.push(Op::Scale(s), vec![a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Square, vec![a])
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sqrt, vec![a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sum, vec![a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Mean, vec![a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul, vec![a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Transpose, vec![a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.push(Op::Reshape(shape.to_vec()), vec![a])
    }

    pub fn masked_row_softmax(&mut self, logits: Var, mask: Arc<Mask>) -> Result<Var> {
        self.push(Op::MaskedSoftmax(mask), vec![logits])
    }

    pub fn gather(&mut self, src: Var, index: Arc<Vec<Option<usize>>>, shape: &[usize]) -> Result<Var> {
        self.push(Op::Gather(index, shape.to_vec()), vec![src])
    }

    pub fn pad_rows(&mut self, a: Var, total_rows: usize) -> Result<Var> {
        self.push(Op::PadRows(total_rows), vec![a])
    }

    /// Applies a `(t_out, t_in)` map along the step axis of `x`.
    ///
    /// With `support`, the gradient of the map is formed only on supported
    /// entries; this is exact when the map is itself produced by a masked
    /// softmax over the same support.
    pub fn time_map(&mut self, map: Var, x: Var, support: Option<Arc<Mask>>) -> Result<Var> {
        self.push(Op::TimeMap(support), vec![map, x])
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        self.push(Op::ConcatChannels, parts.to_vec())
    }

    pub fn causal_conv1d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        self.push(Op::CausalConv, vec![x, kernel, bias])
    }

    pub fn readout(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.push(Op::Readout, vec![x, w, b])
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let t = self.constant(target.clone());
        let diff = self.sub(pred, t)?;
        let sq = self.square(diff)?;
        self.mean(sq)
    }

    /// Re-evaluates every recorded operation from its recorded inputs.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                _ => {
                    let args: Vec<&Tensor> = node.inputs.iter().map(|v| &values[v.0]).collect();
                    eval(&node.op, &args)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(Error::Invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if loss_node.requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let wants: Vec<bool> = node
                .inputs
                .iter()
                .map(|v| self.nodes[v.0].requires_grad)
                .collect();
            let deltas = self.node_backward(node, &g, &wants)?;
            for ((input, want), delta) in node.inputs.iter().zip(&wants).zip(deltas) {
                if !want {
                    continue;
                }
                if let Some(d) = delta {
                    accumulate(&mut grads[input.0], d);
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| {
                g.filter(|_| matches!(n.op, Op::Leaf))
                    .map(|d| Tensor::new(n.value.shape().to_vec(), d).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn node_backward(&self, node: &Node, g: &[f64], wants: &[bool]) -> Result<Vec<Option<Vec<f64>>>> {
        let x = |i: usize| &self.nodes[node.inputs[i].0].value;
        let out = &node.value;
        let zip_map = |a: &[f64], f: &dyn Fn(usize, f64) -> f64| -> Vec<f64> {
            a.iter().enumerate().map(|(i, &v)| f(i, v)).collect()
        };
        let res = match &node.op {
            Op::Leaf => Vec::new(),
            Op::Add => vec![Some(g.to_vec()), Some(g.to_vec())],
            Op::Sub => vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
            Op::Mul => {
                let (a, b) = (x(0).data(), x(1).data());
                vec![
                    wants[0].then(|| zip_map(g, &|i, gv| gv * b[i])),
                    wants[1].then(|| zip_map(g, &|i, gv| gv * a[i])),
                ]
            }
            Op::Div => {
                let b = x(1).data();
                let o = out.data();
                vec![
                    wants[0].then(|| zip_map(g, &|i, gv| gv / b[i])),
                    wants[1].then(|| zip_map(g, &|i, gv| -gv * o[i] / b[i])),
                ]
            }
            Op::AddScalar(_) => vec![Some(g.to_vec())],
            Op::Scale(s) => vec![Some(g.iter().map(|v| v * s).collect())],
            Op::Square => {
                let a = x(0).data();
                vec![Some(zip_map(g, &|i, gv| 2.0 * a[i] * gv))]
            }
            Op::Sqrt => {
                let o = out.data();
                vec![Some(zip_map(g, &|i, gv| gv / (2.0 * o[i])))]
            }
            Op::Sum => vec![Some(vec![g[0]; x(0).len()])],
            Op::Mean => {
                let n = x(0).len();
                vec![Some(vec![g[0] / n as f64; n])]
            }
            Op::MatMul => {
                let gt = Tensor::new(out.shape().to_vec(), g.to_vec())?;
                let da = if wants[0] {
                    Some(kernels::matmul(&gt, &kernels::transpose(x(1))?)?.into_data())
                } else {
                    None
                };
                let db = if wants[1] {
                    Some(kernels::matmul(&kernels::transpose(x(0))?, &gt)?.into_data())
                } else {
                    None
                };
                vec![da, db]
            }
            Op::Transpose => {
                let gt = Tensor::new(out.shape().to_vec(), g.to_vec())?;
                vec![Some(kernels::transpose(&gt)?.into_data())]
            }
            Op::Reshape(_) => vec![Some(g.to_vec())],
            Op::MaskedSoftmax(mask) => {
                let (rows, cols) = out.dims2()?;
                let y = out.data();
                let mut d = vec![0.0; rows * cols];
                for i in 0..rows {
                    let r = i * cols..(i + 1) * cols;
                    let dot: f64 = y[r.clone()].iter().zip(&g[r.clone()]).map(|(a, b)| a * b).sum();
                    for j in r {
                        if mask.bits()[j] {
                            d[j] = y[j] * (g[j] - dot);
                        }
                    }
                }
                vec![Some(d)]
            }
            Op::Gather(index, _) => {
                let mut d = vec![0.0; x(0).len()];
                for (ix, gv) in index.iter().zip(g) {
                    if let Some(i) = ix {
                        d[*i] += gv;
                    }
                }
                vec![Some(d)]
            }
            Op::PadRows(_) => vec![Some(g[..x(0).len()].to_vec())],
            Op::TimeMap(support) => time_map_backward(x(0), x(1), g, wants, support.as_deref())?,
            Op::ConcatChannels => {
                let (n, t, total) = out.dims3()?;
                let widths: Vec<usize> = node
                    .inputs
                    .iter()
                    .map(|v| self.nodes[v.0].value.shape()[2])
                    .collect();
                let mut parts: Vec<Vec<f64>> =
                    widths.iter().map(|w| Vec::with_capacity(n * t * w)).collect();
                for row in 0..n * t {
                    let mut off = row * total;
                    for (p, &w) in parts.iter_mut().zip(&widths) {
                        p.extend_from_slice(&g[off..off + w]);
                        off += w;
                    }
                }
                parts.into_iter().map(Some).collect()
            }
            Op::CausalConv => conv_backward(x(0), x(1), g, wants)?,
            Op::Readout => {
                let (n, t, c) = x(0).dims3()?;
                let (xd, wd) = (x(0).data(), x(1).data());
                let mut dx = vec![0.0; n * t * c];
                let mut dw = vec![0.0; t * c];
                let mut db = vec![0.0; t];
                for s in 0..n {
                    for step in 0..t {
                        let gv = g[s * t + step];
                        db[step] += gv;
                        let base = (s * t + step) * c;
                        for ch in 0..c {
                            dx[base + ch] += wd[step * c + ch] * gv;
                            dw[step * c + ch] += xd[base + ch] * gv;
                        }
                    }
                }
                vec![Some(dx), Some(dw), Some(db)]
            }
        };
        Ok(res)
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: Vec<f64>) {
    match slot {
        Some(acc) => {
            for (a, d) in acc.iter_mut().zip(delta) {
                *a += d;
            }
        }
        None => *slot = Some(delta),
    }
}

fn time_map_backward(
    m: &Tensor,
    x: &Tensor,
    g: &[f64],
    wants: &[bool],
    support: Option<&Mask>,
) -> Result<Vec<Option<Vec<f64>>>> {
    let (to, ti) = m.dims2()?;
    let (n, t, c) = x.dims3()?;
    let (md, xd) = (m.data(), x.data());
    let dm = wants[0].then(|| {
        let mut dm = vec![0.0; to * ti];
        for i in 0..to {
            for j in 0..ti {
                if support.is_some_and(|s| !s.get(i, j)) {
                    continue;
                }
                let mut acc = 0.0;
                for s in 0..n {
                    let gr = &g[(s * to + i) * c..(s * to + i + 1) * c];
                    let xr = &xd[(s * t + j) * c..(s * t + j + 1) * c];
                    acc += gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                }
                dm[i * ti + j] = acc;
            }
        }
        dm
    });
    let dx = wants[1].then(|| {
        let mut dx = vec![0.0; n * t * c];
        for s in 0..n {
            for i in 0..to {
                let gr = &g[(s * to + i) * c..(s * to + i + 1) * c];
                for j in 0..ti {
                    let w = md[i * ti + j];
                    if w == 0.0 {
                        continue;
                    }
                    let dr = &mut dx[(s * t + j) * c..(s * t + j + 1) * c];
                    for (d, &gv) in dr.iter_mut().zip(gr) {
                        *d += w * gv;
                    }
                }
            }
        }
        dx
    });
    Ok(vec![dm, dx])
}

fn conv_backward(x: &Tensor, kernel: &Tensor, g: &[f64], wants: &[bool]) -> Result<Vec<Option<Vec<f64>>>> {
    let (n, t, cin) = x.dims3()?;
    let (k, _, cout) = kernel.dims3()?;
    let (xd, kd) = (x.data(), kernel.data());
    let mut dx = wants[0].then(|| vec![0.0; n * t * cin]);
    let mut dk = wants[1].then(|| vec![0.0; k * cin * cout]);
    let mut db = wants[2].then(|| vec![0.0; cout]);
    for s in 0..n {
        for step in 0..t {
            let grow = &g[(s * t + step) * cout..(s * t + step + 1) * cout];
            if let Some(db) = db.as_mut() {
                for (d, &gv) in db.iter_mut().zip(grow) {
                    *d += gv;
                }
            }
            for j in 0..k {
                let Some(src) = (step + j).checked_sub(k - 1) else {
                    continue;
                };
                for c in 0..cin {
                    let kr = (j * cin + c) * cout..(j * cin + c + 1) * cout;
                    let xi = (s * t + src) * cin + c;
                    if let Some(dx) = dx.as_mut() {
                        dx[xi] += kd[kr.clone()].iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    if let Some(dk) = dk.as_mut() {
                        let xv = xd[xi];
                        for (d, &gv) in dk[kr].iter_mut().zip(grow) {
                            *d += xv * gv;
                        }
                    }
                }
            }
        }
    }
    Ok(vec![dx, dk, db])
}
