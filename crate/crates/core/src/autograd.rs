//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is a tape: every primitive is evaluated eagerly and appended
//! as a node, so node indices are already in topological order and the
//! backward pass is a single reverse sweep. Graphs are cheap to build and
//! are meant to be thrown away after each minibatch.

use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major tensor. Shapes used in this crate have at most two axes;
/// the empty shape denotes a scalar.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                shapes: vec![shape, vec![data.len()]],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Rows and columns of a matrix; vectors are treated as one row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => (self.shape[0], self.data.len() / self.shape[0].max(1)),
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        let (_, cols) = self.dims2();
        self.data[row * cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let (_, cols) = self.dims2();
        &self.data[row * cols..(row + 1) * cols]
    }

    fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Elementwise sum. The right operand may also be a vector matching the
    /// left operand's last axis (row broadcast) or an `[m, 1]` column
    /// (column broadcast).
    Add,
    /// Elementwise difference, same broadcasting as `Add`.
    Sub,
    /// Elementwise product of equally shaped tensors.
    Mul,
    /// Matrix product of `[m, k]` and `[k, n]`.
    MatMul,
    /// Concatenation of any number of matrices along an axis.
    Concat { axis: usize },
    /// Half-open range along one axis.
    Slice { axis: usize, start: usize, end: usize },
    /// Gathers rows of a `[vocab, dim]` table into an `[n, dim]` matrix.
    RowSelect { indices: Vec<usize> },
    Sigmoid,
    Tanh,
    /// Log-sum-exp over one axis of a matrix, or over everything.
    LogSumExp { axis: Option<usize> },
    Sum,
    Mean,
    Scale(f64),
    Negate,
    Transpose,
    Reshape(Vec<usize>),
}

impl Primitive {
    fn name(&self) -> &'static str {
        match self {
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::MatMul => "matmul",
            Primitive::Concat { .. } => "concat",
            Primitive::Slice { .. } => "slice",
            Primitive::RowSelect { .. } => "embedding_row_select",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Tanh => "tanh",
            Primitive::LogSumExp { .. } => "logsumexp",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::Scale(_) => "scale",
            Primitive::Negate => "negate",
            Primitive::Transpose => "transpose",
            Primitive::Reshape(_) => "reshape",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Option<Primitive>,
    parents: Vec<Var>,
    requires_grad: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Col,
}

fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape == b.shape {
        return Ok(Broadcast::Same);
    }
    if a.shape.len() == 2 && b.shape.len() == 1 && b.shape[0] == a.shape[1] {
        return Ok(Broadcast::Row);
    }
    if a.shape.len() == 2 && b.shape == [a.shape[0], 1] {
        return Ok(Broadcast::Col);
    }
    Err(shape_err(op, &[a, b]))
}

fn shape_err(op: &'static str, ts: &[&Tensor]) -> Error {
    Error::Shape {
        op,
        shapes: ts.iter().map(|t| t.shape.clone()).collect(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted log-sum-exp. An all `-inf` input yields `-inf`.
pub fn logsumexp_slice(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

fn softmax_weight(x: f64, lse: f64) -> f64 {
    if lse == f64::NEG_INFINITY || x == f64::NEG_INFINITY {
        0.0
    } else {
        (x - lse).exp()
    }
}

fn forward(op: &Primitive, inputs: &[&Tensor]) -> Result<Tensor> {
    let name = op.name();
    let unary = |inputs: &[&Tensor]| -> Result<()> {
        if inputs.len() != 1 {
            return Err(shape_err(name, inputs));
        }
        Ok(())
    };
    match op {
        Primitive::Add | Primitive::Sub => {
            let [a, b] = inputs else {
                return Err(shape_err(name, inputs));
            };
            let kind = broadcast_kind(name, a, b)?;
            let sign = if *op == Primitive::Add { 1.0 } else { -1.0 };
            let mut out = (*a).clone();
            let (_, cols) = a.dims2();
            match kind {
                Broadcast::Same => {
                    for (o, y) in out.data.iter_mut().zip(&b.data) {
                        *o += sign * y;
                    }
                }
                Broadcast::Row => {
                    for row in out.data.chunks_mut(cols) {
                        for (o, y) in row.iter_mut().zip(&b.data) {
                            *o += sign * y;
                        }
                    }
                }
                Broadcast::Col => {
                    for (row, y) in out.data.chunks_mut(cols).zip(&b.data) {
                        for o in row.iter_mut() {
                            *o += sign * y;
                        }
                    }
                }
            }
            Ok(out)
        }
        Primitive::Mul => {
            let [a, b] = inputs else {
                return Err(shape_err(name, inputs));
            };
            if a.shape != b.shape {
                return Err(shape_err(name, inputs));
            }
            let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
            Ok(Tensor {
                shape: a.shape.clone(),
                data,
            })
        }
        Primitive::MatMul => {
            let [a, b] = inputs else {
                return Err(shape_err(name, inputs));
            };
            if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
                return Err(shape_err(name, inputs));
            }
            let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let av = a.data[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    let brow = &b.data[p * n..(p + 1) * n];
                    for (o, bv) in orow.iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
            Tensor::new(vec![m, n], out)
        }
        Primitive::Concat { axis } => {
            let first = inputs.first().ok_or_else(|| shape_err(name, inputs))?;
            if first.shape.len() != 2 || *axis > 1 {
                return Err(shape_err(name, inputs));
            }
            let ok = inputs.iter().all(|t| {
                t.shape.len() == 2 && t.shape[1 - axis] == first.shape[1 - axis]
            });
            if !ok {
                return Err(shape_err(name, inputs));
            }
            if *axis == 0 {
                let rows = inputs.iter().map(|t| t.shape[0]).sum();
                let mut data = Vec::with_capacity(rows * first.shape[1]);
                for t in inputs {
                    data.extend_from_slice(&t.data);
                }
                Tensor::new(vec![rows, first.shape[1]], data)
            } else {
                let rows = first.shape[0];
                let cols: usize = inputs.iter().map(|t| t.shape[1]).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for t in inputs {
                        data.extend_from_slice(t.row(r));
                    }
                }
                Tensor::new(vec![rows, cols], data)
            }
        }
        Primitive::Slice { axis, start, end } => {
            unary(inputs)?;
            let a = inputs[0];
            let (axis, start, end) = (*axis, *start, *end);
            if axis >= a.shape.len() || start >= end || end > a.shape[axis] {
                return Err(shape_err(name, inputs));
            }
            if a.shape.len() == 1 {
                return Ok(Tensor::vector(a.data[start..end].to_vec()));
            }
            let (rows, cols) = (a.shape[0], a.shape[1]);
            if axis == 0 {
                Tensor::new(
                    vec![end - start, cols],
                    a.data[start * cols..end * cols].to_vec(),
                )
            } else {
                let mut data = Vec::with_capacity(rows * (end - start));
                for r in 0..rows {
                    data.extend_from_slice(&a.row(r)[start..end]);
                }
                Tensor::new(vec![rows, end - start], data)
            }
        }
        Primitive::RowSelect { indices } => {
            unary(inputs)?;
            let a = inputs[0];
            if a.shape.len() != 2 {
                return Err(shape_err(name, inputs));
            }
            let (rows, cols) = (a.shape[0], a.shape[1]);
            let mut data = Vec::with_capacity(indices.len() * cols);
            for &i in indices {
                if i >= rows {
                    return Err(Error::invalid(format!(
                        "embedding_row_select: index {i} out of range for {rows} rows"
                    )));
                }
                data.extend_from_slice(a.row(i));
            }
            Tensor::new(vec![indices.len(), cols], data)
        }
        Primitive::Sigmoid | Primitive::Tanh | Primitive::Scale(_) | Primitive::Negate => {
            unary(inputs)?;
            let a = inputs[0];
            let f: Box<dyn Fn(f64) -> f64> = match op {
                Primitive::Sigmoid => Box::new(sigmoid),
                Primitive::Tanh => Box::new(f64::tanh),
                Primitive::Scale(c) => {
                    let c = *c;
                    Box::new(move |x| c * x)
                }
                _ => Box::new(|x: f64| -x),
            };
            Ok(Tensor {
                shape: a.shape.clone(),
                data: a.data.iter().map(|&x| f(x)).collect(),
            })
        }
        Primitive::LogSumExp { axis } => {
            unary(inputs)?;
            let a = inputs[0];
            match (axis, a.shape.len()) {
                (None, _) | (Some(0), 1) => Ok(Tensor::scalar(logsumexp_slice(&a.data))),
                (Some(0), 2) => {
                    let (rows, cols) = (a.shape[0], a.shape[1]);
                    let mut col = vec![0.0; rows];
                    let data = (0..cols)
                        .map(|j| {
                            for (i, c) in col.iter_mut().enumerate() {
                                *c = a.data[i * cols + j];
                            }
                            logsumexp_slice(&col)
                        })
                        .collect();
                    Ok(Tensor::vector(data))
                }
                (Some(1), 2) => {
                    let cols = a.shape[1];
                    Ok(Tensor::vector(
                        a.data.chunks(cols).map(logsumexp_slice).collect(),
                    ))
                }
                _ => Err(shape_err(name, inputs)),
            }
        }
        Primitive::Sum => {
            unary(inputs)?;
            Ok(Tensor::scalar(inputs[0].data.iter().sum()))
        }
        Primitive::Mean => {
            unary(inputs)?;
            let a = inputs[0];
            if a.data.is_empty() {
                return Err(shape_err(name, inputs));
            }
            Ok(Tensor::scalar(
                a.data.iter().sum::<f64>() / a.data.len() as f64,
            ))
        }
        Primitive::Transpose => {
            unary(inputs)?;
            let a = inputs[0];
            if a.shape.len() != 2 {
                return Err(shape_err(name, inputs));
            }
            let (rows, cols) = (a.shape[0], a.shape[1]);
            let mut data = vec![0.0; rows * cols];
            for r in 0..rows {
                for c in 0..cols {
                    data[c * rows + r] = a.data[r * cols + c];
                }
            }
            Tensor::new(vec![cols, rows], data)
        }
        Primitive::Reshape(shape) => {
            unary(inputs)?;
            Tensor::new(shape.clone(), inputs[0].data.clone())
                .map_err(|_| shape_err(name, inputs))
        }
    }
}

/// Adds the contribution of `out_grad` flowing into parent `slot`.
fn accumulate(
    op: &Primitive,
    slot: usize,
    out_grad: &Tensor,
    out_value: &Tensor,
    parents: &[&Tensor],
    pg: &mut Tensor,
) {
    match op {
        Primitive::Add | Primitive::Sub => {
            let sign = if slot == 1 && *op == Primitive::Sub { -1.0 } else { 1.0 };
            if slot == 0 {
                for (g, o) in pg.data.iter_mut().zip(&out_grad.data) {
                    *g += sign * o;
                }
                return;
            }
            let (_, cols) = parents[0].dims2();
            match broadcast_kind("add", parents[0], parents[1]).unwrap_or(Broadcast::Same) {
                Broadcast::Same => {
                    for (g, o) in pg.data.iter_mut().zip(&out_grad.data) {
                        *g += sign * o;
                    }
                }
                Broadcast::Row => {
                    for row in out_grad.data.chunks(cols) {
                        for (g, o) in pg.data.iter_mut().zip(row) {
                            *g += sign * o;
                        }
                    }
                }
                Broadcast::Col => {
                    for (g, row) in pg.data.iter_mut().zip(out_grad.data.chunks(cols)) {
                        *g += sign * row.iter().sum::<f64>();
                    }
                }
            }
        }
        Primitive::Mul => {
            let other = parents[1 - slot];
            for ((g, o), y) in pg.data.iter_mut().zip(&out_grad.data).zip(&other.data) {
                *g += o * y;
            }
        }
        Primitive::MatMul => {
            let (a, b) = (parents[0], parents[1]);
            let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
            if slot == 0 {
                // dA = dC * B^T
                for i in 0..m {
                    let grow = &out_grad.data[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &b.data[p * n..(p + 1) * n];
                        let dot: f64 = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        pg.data[i * k + p] += dot;
                    }
                }
            } else {
                // dB = A^T * dC
                for i in 0..m {
                    let grow = &out_grad.data[i * n..(i + 1) * n];
                    for p in 0..k {
                        let av = a.data[i * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        let prow = &mut pg.data[p * n..(p + 1) * n];
                        for (d, gv) in prow.iter_mut().zip(grow) {
                            *d += av * gv;
                        }
                    }
                }
            }
        }
        Primitive::Concat { axis } => {
            if *axis == 0 {
                let offset: usize = parents[..slot].iter().map(|t| t.data.len()).sum();
                let len = parents[slot].data.len();
                for (g, o) in pg.data.iter_mut().zip(&out_grad.data[offset..offset + len]) {
                    *g += o;
                }
            } else {
                let col0: usize = parents[..slot].iter().map(|t| t.shape[1]).sum();
                let width = parents[slot].shape[1];
                let total = out_value.shape[1];
                for (r, grow) in pg.data.chunks_mut(width).enumerate() {
                    let src = &out_grad.data[r * total + col0..r * total + col0 + width];
                    for (g, o) in grow.iter_mut().zip(src) {
                        *g += o;
                    }
                }
            }
        }
        Primitive::Slice { axis, start, end } => {
            let a = parents[0];
            if a.shape.len() == 1 {
                for (g, o) in pg.data[*start..*end].iter_mut().zip(&out_grad.data) {
                    *g += o;
                }
            } else if *axis == 0 {
                let cols = a.shape[1];
                for (g, o) in pg.data[start * cols..end * cols]
                    .iter_mut()
                    .zip(&out_grad.data)
                {
                    *g += o;
                }
            } else {
                let cols = a.shape[1];
                let width = end - start;
                for (r, orow) in out_grad.data.chunks(width).enumerate() {
                    let dst = &mut pg.data[r * cols + start..r * cols + end];
                    for (g, o) in dst.iter_mut().zip(orow) {
                        *g += o;
                    }
                }
            }
        }
        Primitive::RowSelect { indices } => {
            let cols = parents[0].shape[1];
            for (k, &i) in indices.iter().enumerate() {
                let src = &out_grad.data[k * cols..(k + 1) * cols];
                for (g, o) in pg.data[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                    *g += o;
                }
            }
        }
        Primitive::Sigmoid => {
            for ((g, o), y) in pg.data.iter_mut().zip(&out_grad.data).zip(&out_value.data) {
                *g += o * y * (1.0 - y);
            }
        }
        Primitive::Tanh => {
            for ((g, o), y) in pg.data.iter_mut().zip(&out_grad.data).zip(&out_value.data) {
                *g += o * (1.0 - y * y);
            }
        }
        Primitive::LogSumExp { axis } => {
            let a = parents[0];
            match (axis, a.shape.len()) {
                (Some(0), 2) => {
                    let cols = a.shape[1];
                    for (i, x) in a.data.iter().enumerate() {
                        let j = i % cols;
                        pg.data[i] += out_grad.data[j] * softmax_weight(*x, out_value.data[j]);
                    }
                }
                (Some(1), 2) => {
                    let cols = a.shape[1];
                    for (i, x) in a.data.iter().enumerate() {
                        let r = i / cols;
                        pg.data[i] += out_grad.data[r] * softmax_weight(*x, out_value.data[r]);
                    }
                }
                _ => {
                    let (o, lse) = (out_grad.data[0], out_value.data[0]);
                    for (g, x) in pg.data.iter_mut().zip(&a.data) {
                        *g += o * softmax_weight(*x, lse);
                    }
                }
            }
        }
        Primitive::Sum => {
            let o = out_grad.data[0];
            for g in pg.data.iter_mut() {
                *g += o;
            }
        }
        Primitive::Mean => {
            let o = out_grad.data[0] / pg.data.len() as f64;
            for g in pg.data.iter_mut() {
                *g += o;
            }
        }
        Primitive::Scale(c) => {
            for (g, o) in pg.data.iter_mut().zip(&out_grad.data) {
                *g += c * o;
            }
        }
        Primitive::Negate => {
            for (g, o) in pg.data.iter_mut().zip(&out_grad.data) {
                *g -= o;
            }
        }
        Primitive::Transpose => {
            let (rows, cols) = (parents[0].shape[0], parents[0].shape[1]);
            for r in 0..rows {
                for c in 0..cols {
                    pg.data[r * cols + c] += out_grad.data[c * rows + r];
                }
            }
        }
        Primitive::Reshape(_) => pg.add_assign(out_grad),
    }
}

/// Computation tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Option<Primitive>, parents: Vec<Var>, rg: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            parents,
            requires_grad: rg,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf (parameter or input of interest).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, None, Vec::new(), true)
    }

    /// A leaf that never receives a gradient (masks, one-hot selectors).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, None, Vec::new(), false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradient of `v`, or zeros if nothing flowed into it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&self.nodes[v.0].value.shape))
    }

    pub fn apply(&mut self, op: Primitive, inputs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let out = forward(&op, &values)?;
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(out, Some(op), inputs.to_vec(), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        self.apply(Primitive::Concat { axis }, parts)
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        self.apply(Primitive::Slice { axis, start, end }, &[a])
    }

    pub fn row_select(&mut self, table: Var, indices: Vec<usize>) -> Result<Var> {
        self.apply(Primitive::RowSelect { indices }, &[table])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Sigmoid, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Tanh, &[a])
    }

    pub fn logsumexp(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.apply(Primitive::LogSumExp { axis }, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Mean, &[a])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(Primitive::Scale(c), &[a])
    }

    pub fn negate(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Negate, &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Transpose, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.apply(Primitive::Reshape(shape.to_vec()), &[a])
    }

    /// Sum of any number of equally shaped nodes, folded left to right.
    pub fn add_all(&mut self, parts: &[Var]) -> Result<Var> {
        let (&first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::invalid("add_all of nothing"))?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    /// Populates `grad` on every node that `root` depends on.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_value = &self.nodes[root.0].value;
        if root_value.numel() != 1 {
            return Err(Error::Shape {
                op: "backward",
                shapes: vec![root_value.shape.clone()],
            });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let shape = self.nodes[root.0].value.shape.clone();
        self.nodes[root.0].grad = Some(Tensor::full(&shape, 1.0));

        for i in (0..=root.0).rev() {
            let (left, right) = self.nodes.split_at_mut(i);
            let node = &right[0];
            let (Some(op), Some(out_grad)) = (node.op.as_ref(), node.grad.as_ref()) else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            for (slot, &p) in node.parents.iter().enumerate() {
                if !left[p.0].requires_grad {
                    continue;
                }
                let mut pg = left[p.0]
                    .grad
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(&left[p.0].value.shape));
                let parent_values: Vec<&Tensor> =
                    node.parents.iter().map(|q| &left[q.0].value).collect();
                accumulate(op, slot, out_grad, &node.value, &parent_values, &mut pg);
                left[p.0].grad = Some(pg);
            }
        }
        Ok(())
    }
}

/// Largest relative disagreement between reverse-mode and central-difference
/// gradients of `f` at `params`, using `|ad - fd| / max(1, |ad|, |fd|)`.
///
/// `f` receives a fresh graph and one leaf per parameter tensor and must
/// return a scalar node. It must be deterministic.
pub fn check_gradient<F>(mut f: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let leaves: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let root = f(&mut g, &leaves)?;
    g.backward(root)?;
    let analytic: Vec<Tensor> = leaves.iter().map(|&v| g.grad_or_zeros(v)).collect();

    let mut eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let leaves: Vec<Var> = ps.iter().map(|p| g.leaf(p.clone())).collect();
        let root = f(&mut g, &leaves)?;
        Ok(g.value(root).item())
    };

    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for (t, ad) in analytic.iter().enumerate() {
        for i in 0..work[t].numel() {
            let orig = work[t].data[i];
            work[t].data[i] = orig + h;
            let plus = eval(&work)?;
            work[t].data[i] = orig - h;
            let minus = eval(&work)?;
            work[t].data[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let a = ad.data[i];
            let err = (a - fd).abs() / 1f64.max(a.abs()).max(fd.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn mul_scalar_vectors() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![2.0]));
        let b = g.leaf(Tensor::vector(vec![3.0]));
        let c = g.mul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[6.0]);
    }

    #[test]
    fn product_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0));
        let y = g.leaf(Tensor::scalar(3.0));
        let z = g.mul(x, y).unwrap();
        g.backward(z).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 3.0);
        assert_eq!(g.grad(y).unwrap().item(), 2.0);
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::identity(3));
        let x = g.leaf(t(&[3, 2], &[1.0, -2.0, 3.5, 0.25, 7.0, 8.0]));
        let y = g.matmul(i, x).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn logsumexp_of_zeros() {
        let mut g = Graph::new();
        let v = g.leaf(Tensor::zeros(&[5]));
        let l = g.logsumexp(v, None).unwrap();
        assert!((g.value(l).item() - 5f64.ln()).abs() < 1e-15);
        assert!((g.value(l).item() - 1.6094379).abs() < 1e-7);
        g.backward(l).unwrap();
        for &d in g.grad(v).unwrap().data() {
            assert!((d - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn logsumexp_ignores_neg_infinity() {
        let mut g = Graph::new();
        let v = g.leaf(Tensor::vector(vec![0.0, f64::NEG_INFINITY, 0.0]));
        let l = g.logsumexp(v, None).unwrap();
        assert!((g.value(l).item() - 2f64.ln()).abs() < 1e-15);
        g.backward(l).unwrap();
        assert_eq!(g.grad(v).unwrap().data(), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn logsumexp_all_neg_infinity() {
        let mut g = Graph::new();
        let v = g.leaf(Tensor::full(&[3], f64::NEG_INFINITY));
        let l = g.logsumexp(v, None).unwrap();
        assert_eq!(g.value(l).item(), f64::NEG_INFINITY);
        g.backward(l).unwrap();
        assert_eq!(g.grad(v).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(&[2, 3]));
        let b = g.leaf(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
        let v = g.leaf(Tensor::zeros(&[4]));
        assert!(g.mul(a, v).is_err());
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(&[2]));
        assert!(g.backward(a).is_err());
    }

    #[test]
    fn fan_out_accumulates() {
        // f = sigmoid(x) + tanh(x)
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(0.3));
        let a = g.sigmoid(x).unwrap();
        let b = g.tanh(x).unwrap();
        let f = g.add(a, b).unwrap();
        g.backward(f).unwrap();
        let s = 1.0 / (1.0 + (-0.3f64).exp());
        let expected = s * (1.0 - s) + (1.0 - 0.3f64.tanh().powi(2));
        assert!((g.grad(x).unwrap().item() - expected).abs() < 1e-15);
    }

    #[test]
    fn broadcast_add_gradients() {
        let mut g = Graph::new();
        let m = g.leaf(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let r = g.leaf(Tensor::vector(vec![1.0, 1.0, 1.0]));
        let c = g.leaf(t(&[2, 1], &[10.0, 20.0]));
        let a = g.add(m, r).unwrap();
        let b = g.sub(a, c).unwrap();
        assert_eq!(g.value(b).data(), &[-8.0, -7.0, -6.0, -15.0, -14.0, -13.0]);
        let s = g.sum(b).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(r).unwrap().data(), &[2.0, 2.0, 2.0]);
        assert_eq!(g.grad(c).unwrap().data(), &[-3.0, -3.0]);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor::vector(vec![0.5, -1.5]);
        let mut g = Graph::new();
        let v = g.leaf(x);
        let k = g.constant(Tensor::scalar(4.0));
        let z = g.scale(v, 0.0).unwrap();
        let s = g.sum(z).unwrap();
        let f = g.add(s, k).unwrap();
        g.backward(f).unwrap();
        assert_eq!(g.grad(v).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn quadratic_gradient_check() {
        let x = Tensor::vector(vec![0.3, -1.2, 2.5]);
        let err = check_gradient(
            |g, p| {
                let sq = g.mul(p[0], p[0])?;
                let s = g.sum(sq)?;
                g.scale(s, 0.5)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }
}
