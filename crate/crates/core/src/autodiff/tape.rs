use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operations the tape can record. Every operation works on the matrix view
/// of its inputs (leading dimensions collapse into rows).
///
/// Binary element-wise ops broadcast their second operand when it is a
/// `1 x n` row, an `m x 1` column or a `1 x 1` scalar.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Concat { axis: usize },
    /// `out[k] = input[indices[k]]` over flat storage.
    Take { indices: Vec<usize>, shape: Vec<usize> },
    Sum,
    /// Mean over rows (`axis = 0`, gives `1 x n`) or columns (`axis = 1`, gives `m x 1`).
    Mean { axis: usize },
    /// Row-wise softmax; `mask[k] == false` entries get probability exactly 0.
    Softmax { mask: Option<Vec<bool>> },
    LogSoftmax,
    LeakyRelu { slope: f64 },
    Tanh,
    Sigmoid,
    LogSigmoid,
    Gelu,
    /// Row-wise standardization without affine parameters.
    LayerNorm { eps: f64 },
    Dropout { p: f64 },
}

impl OpKind {
    fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale(_) => "scale",
            OpKind::Concat { .. } => "concat",
            OpKind::Take { .. } => "take",
            OpKind::Sum => "sum",
            OpKind::Mean { .. } => "mean",
            OpKind::Softmax { .. } => "softmax",
            OpKind::LogSoftmax => "log_softmax",
            OpKind::LeakyRelu { .. } => "leaky_relu",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::LogSigmoid => "log_sigmoid",
            OpKind::Gelu => "gelu",
            OpKind::LayerNorm { .. } => "layer_norm",
            OpKind::Dropout { .. } => "dropout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Col,
    Scalar,
}

impl Broadcast {
    fn of(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Self> {
        let (m, n) = (a.rows(), a.cols());
        let (bm, bn) = (b.rows(), b.cols());
        Ok(if (bm, bn) == (m, n) {
            Broadcast::Same
        } else if (bm, bn) == (1, 1) {
            Broadcast::Scalar
        } else if bm == 1 && bn == n {
            Broadcast::Row
        } else if bm == m && bn == 1 {
            Broadcast::Col
        } else {
            return Err(Error::shape(
                op,
                format!("cannot broadcast {bm}x{bn} onto {m}x{n}"),
            ));
        })
    }

    #[inline]
    fn index(self, r: usize, c: usize, cols: usize) -> usize {
        match self {
            Broadcast::Same => r * cols + c,
            Broadcast::Row => c,
            Broadcast::Col => r,
            Broadcast::Scalar => 0,
        }
    }
}

struct Node {
    value: Tensor,
    kind: Option<OpKind>,
    inputs: Vec<Var>,
    /// Per-op saved state: dropout mask, layer-norm inverse std.
    cache: Vec<f64>,
    requires_grad: bool,
}

/// Records operations in execution order for reverse-mode differentiation.
pub struct Tape {
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
    training: bool,
    stochastic: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

impl Tape {
    /// An inference tape: dropout is the identity.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            training: false,
            stochastic: false,
        }
    }

    /// A training tape; dropout draws from a generator seeded with `seed`.
    pub fn training(seed: u64) -> Self {
        Tape {
            rng: ChaCha8Rng::seed_from_u64(seed),
            training: true,
            ..Tape::new()
        }
    }

    /// Switches dropout on, seeding its generator.
    pub fn set_training(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.training = true;
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Whether any recorded op consumed randomness.
    pub fn is_stochastic(&self) -> bool {
        self.stochastic
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
            kind: None,
            inputs: Vec::new(),
            cache: Vec::new(),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, kind: OpKind, inputs: Vec<Var>, cache: Vec<f64>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            kind: Some(kind),
            inputs,
            cache,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn arity(kind: &OpKind, inputs: &[Var]) -> Result<()> {
        let want = match kind {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::Mul => Some(2),
            OpKind::Concat { .. } => None,
            _ => Some(1),
        };
        match want {
            Some(n) if inputs.len() != n => Err(Error::shape(
                kind.name(),
                format!("expected {n} inputs, got {}", inputs.len()),
            )),
            None if inputs.is_empty() => Err(Error::shape(kind.name(), "no inputs")),
            _ => Ok(()),
        }
    }

    /// Computes `kind` on `inputs` and records it.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        Self::arity(&kind, inputs)?;
        let op = kind.name();
        let a = &self.nodes[inputs[0].0].value;
        let (m, n) = (a.rows(), a.cols());
        let mut cache = Vec::new();
        let value = match &kind {
            OpKind::MatMul => {
                let b = &self.nodes[inputs[1].0].value;
                if b.rows() != n {
                    return Err(Error::shape(
                        op,
                        format!("{m}x{n} times {}x{}", b.rows(), b.cols()),
                    ));
                }
                let p = b.cols();
                let mut out = vec![0.0; m * p];
                let (ad, bd) = (a.data(), b.data());
                for i in 0..m {
                    let orow = &mut out[i * p..(i + 1) * p];
                    for k in 0..n {
                        let aik = ad[i * n + k];
                        if aik == 0.0 {
                            continue;
                        }
                        let brow = &bd[k * p..(k + 1) * p];
                        for (o, &bv) in orow.iter_mut().zip(brow) {
                            *o += aik * bv;
                        }
                    }
                }
                Tensor::matrix(m, p, out)?
            }
            OpKind::Transpose => {
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        out[j * m + i] = a.data()[i * n + j];
                    }
                }
                Tensor::matrix(n, m, out)?
            }
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                let b = &self.nodes[inputs[1].0].value;
                let bc = Broadcast::of(op, a, b)?;
                let f: fn(f64, f64) -> f64 = match kind {
                    OpKind::Add => |x, y| x + y,
                    OpKind::Sub => |x, y| x - y,
                    _ => |x, y| x * y,
                };
                let mut out = Vec::with_capacity(m * n);
                for r in 0..m {
                    for c in 0..n {
                        out.push(f(a.data()[r * n + c], b.data()[bc.index(r, c, n)]));
                    }
                }
                Tensor::new(a.shape().to_vec(), out)?
            }
            OpKind::Scale(s) => {
                Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| x * s).collect())?
            }
            OpKind::Concat { axis } => {
                let parts: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                match axis {
                    0 => {
                        if let Some(bad) = parts.iter().find(|t| t.cols() != n) {
                            return Err(Error::shape(
                                op,
                                format!("row concat of widths {n} and {}", bad.cols()),
                            ));
                        }
                        let rows: usize = parts.iter().map(|t| t.rows()).sum();
                        let data = parts.iter().flat_map(|t| t.data().iter().copied()).collect();
                        Tensor::matrix(rows, n, data)?
                    }
                    1 => {
                        if let Some(bad) = parts.iter().find(|t| t.rows() != m) {
                            return Err(Error::shape(
                                op,
                                format!("column concat of heights {m} and {}", bad.rows()),
                            ));
                        }
                        let cols: usize = parts.iter().map(|t| t.cols()).sum();
                        let mut data = Vec::with_capacity(m * cols);
                        for r in 0..m {
                            for t in &parts {
                                data.extend_from_slice(t.row_slice(r));
                            }
                        }
                        Tensor::matrix(m, cols, data)?
                    }
                    _ => return Err(Error::shape(op, format!("axis {axis} not in {{0, 1}}"))),
                }
            }
            OpKind::Take { indices, shape } => {
                let numel: usize = shape.iter().product();
                if numel != indices.len() {
                    return Err(Error::shape(
                        op,
                        format!("{} indices for shape {shape:?}", indices.len()),
                    ));
                }
                if let Some(&bad) = indices.iter().find(|&&i| i >= a.numel()) {
                    return Err(Error::shape(
                        op,
                        format!("index {bad} out of range for {} values", a.numel()),
                    ));
                }
                Tensor::new(shape.clone(), indices.iter().map(|&i| a.data()[i]).collect())?
            }
            OpKind::Sum => Tensor::scalar(a.data().iter().sum()),
            OpKind::Mean { axis } => match axis {
                0 => {
                    let mut out = vec![0.0; n];
                    for r in 0..m {
                        for (o, x) in out.iter_mut().zip(a.row_slice(r)) {
                            *o += x;
                        }
                    }
                    out.iter_mut().for_each(|o| *o /= m as f64);
                    Tensor::matrix(1, n, out)?
                }
                1 => {
                    let out = (0..m)
                        .map(|r| a.row_slice(r).iter().sum::<f64>() / n as f64)
                        .collect();
                    Tensor::matrix(m, 1, out)?
                }
                _ => return Err(Error::shape(op, format!("axis {axis} not in {{0, 1}}"))),
            },
            OpKind::Softmax { mask } => {
                if let Some(mask) = mask {
                    if mask.len() != m * n {
                        return Err(Error::shape(
                            op,
                            format!("mask of {} for {m}x{n}", mask.len()),
                        ));
                    }
                }
                let mut out = vec![0.0; m * n];
                for r in 0..m {
                    let allowed = |c: usize| mask.as_ref().is_none_or(|mk| mk[r * n + c]);
                    let row = a.row_slice(r);
                    let max = (0..n)
                        .filter(|&c| allowed(c))
                        .map(|c| row[c])
                        .fold(f64::NEG_INFINITY, f64::max);
                    if max == f64::NEG_INFINITY {
                        return Err(Error::shape(op, format!("row {r} is fully masked")));
                    }
                    let mut total = 0.0;
                    for c in 0..n {
                        if allowed(c) {
                            let e = (row[c] - max).exp();
                            out[r * n + c] = e;
                            total += e;
                        }
                    }
                    for c in 0..n {
                        out[r * n + c] /= total;
                    }
                }
                Tensor::new(a.shape().to_vec(), out)?
            }
            OpKind::LogSoftmax => {
                let mut out = vec![0.0; m * n];
                for r in 0..m {
                    let row = a.row_slice(r);
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                    for c in 0..n {
                        out[r * n + c] = row[c] - lse;
                    }
                }
                Tensor::new(a.shape().to_vec(), out)?
            }
            OpKind::LeakyRelu { slope } => Tensor::new(
                a.shape().to_vec(),
                a.data()
                    .iter()
                    .map(|&x| if x > 0.0 { x } else { slope * x })
                    .collect(),
            )?,
            OpKind::Tanh => Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| x.tanh()).collect())?,
            OpKind::Sigmoid => {
                Tensor::new(a.shape().to_vec(), a.data().iter().map(|&x| sigmoid(x)).collect())?
            }
            OpKind::LogSigmoid => Tensor::new(
                a.shape().to_vec(),
                a.data().iter().map(|&x| log_sigmoid(x)).collect(),
            )?,
            OpKind::Gelu => Tensor::new(
                a.shape().to_vec(),
                a.data()
                    .iter()
                    .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()))
                    .collect(),
            )?,
            OpKind::LayerNorm { eps } => {
                let mut out = vec![0.0; m * n];
                cache.reserve(m);
                for r in 0..m {
                    let row = a.row_slice(r);
                    let mean = row.iter().sum::<f64>() / n as f64;
                    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    for c in 0..n {
                        out[r * n + c] = (row[c] - mean) * inv;
                    }
                    cache.push(inv);
                }
                Tensor::new(a.shape().to_vec(), out)?
            }
            OpKind::Dropout { p } => {
                if !(0.0..1.0).contains(p) {
                    return Err(Error::shape(op, format!("probability {p} outside [0, 1)")));
                }
                if !self.training || *p == 0.0 {
                    return Ok(inputs[0]);
                }
                self.stochastic = true;
                let keep = 1.0 / (1.0 - p);
                let data = a.data().to_vec();
                let shape = a.shape().to_vec();
                cache = (0..data.len())
                    .map(|_| if self.rng.gen::<f64>() < *p { 0.0 } else { keep })
                    .collect();
                let out = data.iter().zip(&cache).map(|(x, k)| x * k).collect();
                Tensor::new(shape, out)?
            }
        };
        Ok(self.push(value, kind, inputs.to_vec(), cache))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Transpose, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.apply(OpKind::Scale(s), &[a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        self.apply(OpKind::Concat { axis }, parts)
    }

    pub fn take(&mut self, a: Var, indices: Vec<usize>, shape: Vec<usize>) -> Result<Var> {
        self.apply(OpKind::Take { indices, shape }, &[a])
    }

    /// Gathers whole rows of a matrix.
    pub fn rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let cols = self.value(a).cols();
        let indices = rows
            .iter()
            .flat_map(|&r| (r * cols)..(r * cols + cols))
            .collect();
        self.take(a, indices, vec![rows.len(), cols])
    }

    /// Columns `start..start + width` of a matrix.
    pub fn columns(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let (m, n) = (self.value(a).rows(), self.value(a).cols());
        if start + width > n {
            return Err(Error::shape(
                "columns",
                format!("columns {start}..{} of {n}", start + width),
            ));
        }
        let indices = (0..m)
            .flat_map(|r| (r * n + start)..(r * n + start + width))
            .collect();
        self.take(a, indices, vec![m, width])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(OpKind::Mean { axis }, &[a])
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Softmax { mask: None }, &[a])
    }

    pub fn masked_softmax(&mut self, a: Var, mask: Vec<bool>) -> Result<Var> {
        self.apply(OpKind::Softmax { mask: Some(mask) }, &[a])
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::LogSoftmax, &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.apply(OpKind::LeakyRelu { slope }, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Tanh, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sigmoid, &[a])
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::LogSigmoid, &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Gelu, &[a])
    }

    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        self.apply(OpKind::LayerNorm { eps }, &[a])
    }

    pub fn dropout(&mut self, a: Var, p: f64) -> Result<Var> {
        self.apply(OpKind::Dropout { p }, &[a])
    }

    /// Reverse sweep from a scalar `loss`. Every node is visited once, in
    /// reverse recording order; fan-out contributions add up.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(kind) = &node.kind else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, kind, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| self.nodes[i].requires_grad).map(|data| {
                    Tensor::new(self.nodes[i].value.shape().to_vec(), data)
                        .expect("gradient matches value shape")
                })
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, kind: &OpKind, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let inputs = &node.inputs;
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut accumulate = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(contrib).for_each(|(a, c)| *a += c),
                slot => *slot = Some(contrib),
            }
        };
        let y = &node.value;
        match kind {
            OpKind::MatMul => {
                let (a, b) = (val(inputs[0]), val(inputs[1]));
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                if wants(inputs[0]) {
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for t in 0..k {
                                da[i * k + t] += gij * b.data()[t * n + j];
                            }
                        }
                    }
                    accumulate(inputs[0], da);
                }
                if wants(inputs[1]) {
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for t in 0..k {
                            let ait = a.data()[i * k + t];
                            if ait == 0.0 {
                                continue;
                            }
                            let grow = &g[i * n..(i + 1) * n];
                            let drow = &mut db[t * n..(t + 1) * n];
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d += ait * gv;
                            }
                        }
                    }
                    accumulate(inputs[1], db);
                }
            }
            OpKind::Transpose => {
                let (m, n) = (y.rows(), y.cols());
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        da[j * m + i] = g[i * n + j];
                    }
                }
                accumulate(inputs[0], da);
            }
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                let (a, b) = (val(inputs[0]), val(inputs[1]));
                let bc = Broadcast::of("backward", a, b).expect("checked in forward");
                let (m, n) = (a.rows(), a.cols());
                if wants(inputs[0]) {
                    let da = match kind {
                        OpKind::Mul => (0..m * n)
                            .map(|i| g[i] * b.data()[bc.index(i / n, i % n, n)])
                            .collect(),
                        _ => g.to_vec(),
                    };
                    accumulate(inputs[0], da);
                }
                if wants(inputs[1]) {
                    let mut db = vec![0.0; b.numel()];
                    for r in 0..m {
                        for c in 0..n {
                            let i = r * n + c;
                            let contrib = match kind {
                                OpKind::Add => g[i],
                                OpKind::Sub => -g[i],
                                _ => g[i] * a.data()[i],
                            };
                            db[bc.index(r, c, n)] += contrib;
                        }
                    }
                    accumulate(inputs[1], db);
                }
            }
            OpKind::Scale(s) => accumulate(inputs[0], g.iter().map(|x| x * s).collect()),
            OpKind::Concat { axis } => {
                let (m, n) = (y.rows(), y.cols());
                let mut row_off = 0;
                let mut col_off = 0;
                for &inp in inputs {
                    let t = val(inp);
                    let (tm, tn) = (t.rows(), t.cols());
                    if wants(inp) {
                        let part = if *axis == 0 {
                            g[row_off * n..(row_off + tm) * n].to_vec()
                        } else {
                            let mut p = Vec::with_capacity(tm * tn);
                            for r in 0..m {
                                p.extend_from_slice(&g[r * n + col_off..r * n + col_off + tn]);
                            }
                            p
                        };
                        accumulate(inp, part);
                    }
                    row_off += tm;
                    col_off += tn;
                }
            }
            OpKind::Take { indices, .. } => {
                let mut da = vec![0.0; val(inputs[0]).numel()];
                for (k, &i) in indices.iter().enumerate() {
                    da[i] += g[k];
                }
                accumulate(inputs[0], da);
            }
            OpKind::Sum => accumulate(inputs[0], vec![g[0]; val(inputs[0]).numel()]),
            OpKind::Mean { axis } => {
                let a = val(inputs[0]);
                let (m, n) = (a.rows(), a.cols());
                let da = (0..m * n)
                    .map(|i| {
                        if *axis == 0 {
                            g[i % n] / m as f64
                        } else {
                            g[i / n] / n as f64
                        }
                    })
                    .collect();
                accumulate(inputs[0], da);
            }
            OpKind::Softmax { .. } => {
                let (m, n) = (y.rows(), y.cols());
                let mut da = vec![0.0; m * n];
                for r in 0..m {
                    let yr = y.row_slice(r);
                    let gr = &g[r * n..(r + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..n {
                        da[r * n + c] = yr[c] * (gr[c] - dot);
                    }
                }
                accumulate(inputs[0], da);
            }
            OpKind::LogSoftmax => {
                let (m, n) = (y.rows(), y.cols());
                let mut da = vec![0.0; m * n];
                for r in 0..m {
                    let yr = y.row_slice(r);
                    let gr = &g[r * n..(r + 1) * n];
                    let total: f64 = gr.iter().sum();
                    for c in 0..n {
                        da[r * n + c] = gr[c] - yr[c].exp() * total;
                    }
                }
                accumulate(inputs[0], da);
            }
            OpKind::LeakyRelu { slope } => {
                let x = val(inputs[0]).data();
                accumulate(
                    inputs[0],
                    g.iter()
                        .zip(x)
                        .map(|(gv, &xv)| if xv > 0.0 { *gv } else { slope * gv })
                        .collect(),
                );
            }
            OpKind::Tanh => accumulate(
                inputs[0],
                g.iter().zip(y.data()).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect(),
            ),
            OpKind::Sigmoid => accumulate(
                inputs[0],
                g.iter().zip(y.data()).map(|(gv, yv)| gv * yv * (1.0 - yv)).collect(),
            ),
            OpKind::LogSigmoid => {
                let x = val(inputs[0]).data();
                accumulate(
                    inputs[0],
                    g.iter().zip(x).map(|(gv, &xv)| gv * sigmoid(-xv)).collect(),
                );
            }
            OpKind::Gelu => {
                let x = val(inputs[0]).data();
                accumulate(
                    inputs[0],
                    g.iter()
                        .zip(x)
                        .map(|(gv, &xv)| {
                            let inner = GELU_C * (xv + 0.044715 * xv * xv * xv);
                            let t = inner.tanh();
                            let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * xv * xv);
                            gv * (0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * dinner)
                        })
                        .collect(),
                );
            }
            OpKind::LayerNorm { .. } => {
                let (m, n) = (y.rows(), y.cols());
                let mut da = vec![0.0; m * n];
                for r in 0..m {
                    let yr = y.row_slice(r);
                    let gr = &g[r * n..(r + 1) * n];
                    let mean_g = gr.iter().sum::<f64>() / n as f64;
                    let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    let inv = node.cache[r];
                    for c in 0..n {
                        da[r * n + c] = inv * (gr[c] - mean_g - yr[c] * mean_gy);
                    }
                }
                accumulate(inputs[0], da);
            }
            OpKind::Dropout { .. } => accumulate(
                inputs[0],
                g.iter().zip(&node.cache).map(|(gv, k)| gv * k).collect(),
            ),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without overflow for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Gradients from one backward sweep, addressed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `v` does not require a gradient or the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
