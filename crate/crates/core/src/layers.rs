//! Neural building blocks on top of [`crate::autograd`] and the Adam optimizer.

use rand::Rng as _;

use crate::autograd::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Puts every parameter on `g` as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph) -> Binding {
        Binding {
            vars: self.values.iter().map(|t| g.leaf(t.clone())).collect(),
        }
    }

    /// Binds caller-provided values in place of the stored ones; used by
    /// gradient checks that perturb parameters.
    pub fn bind_values(g: &mut Graph, vars: &[Var]) -> Binding {
        let _ = g;
        Binding {
            vars: vars.to_vec(),
        }
    }
}

/// Graph nodes for the parameters of one store.
#[derive(Debug, Clone)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn grads(&self, g: &Graph) -> Vec<Tensor> {
        self.vars.iter().map(|&v| g.grad_or_zeros(v)).collect()
    }
}

pub fn uniform(shape: &[usize], bound: f64, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    if bound > 0.0 {
        for x in t.data_mut() {
            *x = rng.gen_range(-bound..bound);
        }
    }
    t
}

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    uniform(&[rows, cols], (6.0 / (rows + cols) as f64).sqrt(), rng)
}

/// Lookup table; row 0 is the unknown-token row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingTable {
    pub weights: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    pub const INIT_BOUND: f64 = 0.05;

    pub fn new(store: &mut ParamStore, name: &str, vocab_size: usize, dim: usize, rng: &mut Rng) -> Self {
        let w = uniform(&[vocab_size, dim], Self::INIT_BOUND, rng);
        EmbeddingTable {
            weights: store.add(name, w),
            vocab_size,
            dim,
        }
    }
}

/// Embedding vector `[dim]` of a single index.
pub fn embed(g: &mut Graph, b: &Binding, table: &EmbeddingTable, index: usize) -> Result<Var> {
    let rows = embed_rows(g, b, table, &[index])?;
    g.reshape(rows, &[table.dim])
}

/// Embedding rows `[n, dim]` for a sequence of indices.
pub fn embed_rows(g: &mut Graph, b: &Binding, table: &EmbeddingTable, indices: &[usize]) -> Result<Var> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= table.vocab_size) {
        return Err(Error::invalid(format!(
            "embedding index {bad} out of range for vocabulary of {}",
            table.vocab_size
        )));
    }
    g.row_select(b.var(table.weights), indices.to_vec())
}

/// LSTM weights. Gate blocks are stacked in the order input, forget, cell,
/// output along the first axis of `w`, `u` and `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmParams {
    /// `[4 * hidden, input]`
    pub w: ParamId,
    /// `[4 * hidden, hidden]`
    pub u: ParamId,
    /// `[4 * hidden]`
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmParams {
    pub const FORGET_BIAS: f64 = 1.0;

    pub fn new(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let h4 = 4 * hidden_dim;
        let w = glorot(h4, input_dim, rng);
        let u = glorot(h4, hidden_dim, rng);
        let mut b = Tensor::zeros(&[h4]);
        for x in &mut b.data_mut()[hidden_dim..2 * hidden_dim] {
            *x = Self::FORGET_BIAS;
        }
        LstmParams {
            w: store.add(format!("{prefix}.w"), w),
            u: store.add(format!("{prefix}.u"), u),
            b: store.add(format!("{prefix}.b"), b),
            input_dim,
            hidden_dim,
        }
    }
}

fn lstm_cell(g: &mut Graph, pre: Var, c_prev: Var, hidden: usize) -> Result<(Var, Var)> {
    let i = g.slice(pre, 1, 0, hidden)?;
    let f = g.slice(pre, 1, hidden, 2 * hidden)?;
    let c = g.slice(pre, 1, 2 * hidden, 3 * hidden)?;
    let o = g.slice(pre, 1, 3 * hidden, 4 * hidden)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let cand = g.tanh(c)?;
    let o = g.sigmoid(o)?;
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c_t = g.add(keep, write)?;
    let squashed = g.tanh(c_t)?;
    let h_t = g.mul(o, squashed)?;
    Ok((h_t, c_t))
}

/// One LSTM step on row vectors: `x_t` is `[1, input]`, states are `[1, hidden]`.
pub fn lstm_step(
    g: &mut Graph,
    b: &Binding,
    p: &LstmParams,
    x_t: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let wt = g.transpose(b.var(p.w))?;
    let ut = g.transpose(b.var(p.u))?;
    let xw = g.matmul(x_t, wt)?;
    let hu = g.matmul(h_prev, ut)?;
    let pre = g.add(xw, hu)?;
    let pre = g.add(pre, b.var(p.b))?;
    lstm_cell(g, pre, c_prev, p.hidden_dim)
}

/// Runs one direction over the rows of `xs` and returns `[L, hidden]` with
/// rows in original time order.
fn lstm_sequence(g: &mut Graph, b: &Binding, p: &LstmParams, xs: Var, reverse: bool) -> Result<Var> {
    let len = g.value(xs).shape()[0];
    // Input projection for the whole sequence at once.
    let wt = g.transpose(b.var(p.w))?;
    let proj = g.matmul(xs, wt)?;
    let proj = g.add(proj, b.var(p.b))?;
    let ut = g.transpose(b.var(p.u))?;
    let mut h = g.constant(Tensor::zeros(&[1, p.hidden_dim]));
    let mut c = g.constant(Tensor::zeros(&[1, p.hidden_dim]));
    let mut outs = vec![h; len];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..len).rev())
    } else {
        Box::new(0..len)
    };
    for t in order {
        let x_proj = g.slice(proj, 0, t, t + 1)?;
        let hu = g.matmul(h, ut)?;
        let pre = g.add(x_proj, hu)?;
        (h, c) = lstm_cell(g, pre, c, p.hidden_dim)?;
        outs[t] = h;
    }
    g.concat(&outs, 0)
}

/// Bidirectional LSTM over `xs` (`[L, input]`). Row `t` of the result is the
/// forward state at `t` followed by the backward state at `t`.
pub fn bilstm(g: &mut Graph, b: &Binding, fwd: &LstmParams, bwd: &LstmParams, xs: Var) -> Result<Var> {
    let shape = g.value(xs).shape().to_vec();
    if shape.len() != 2 || shape[0] == 0 {
        return Err(Error::invalid("bilstm needs a non-empty [L, input] sequence"));
    }
    if shape[1] != fwd.input_dim || shape[1] != bwd.input_dim {
        return Err(Error::Shape {
            op: "bilstm",
            shapes: vec![shape, vec![fwd.input_dim], vec![bwd.input_dim]],
        });
    }
    let f = lstm_sequence(g, b, fwd, xs, false)?;
    let r = lstm_sequence(g, b, bwd, xs, true)?;
    g.concat(&[f, r], 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParams {
    /// `[out, in]`
    pub w: ParamId,
    /// `[out]`
    pub b: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl LinearParams {
    pub fn new(store: &mut ParamStore, prefix: &str, input_dim: usize, output_dim: usize, rng: &mut Rng) -> Self {
        LinearParams {
            w: store.add(format!("{prefix}.w"), glorot(output_dim, input_dim, rng)),
            b: store.add(format!("{prefix}.b"), Tensor::zeros(&[output_dim])),
            input_dim,
            output_dim,
        }
    }
}

/// `x W^T + b` for each row of `x` (`[n, in]` -> `[n, out]`).
pub fn linear(g: &mut Graph, b: &Binding, p: &LinearParams, x: Var) -> Result<Var> {
    let wt = g.transpose(b.var(p.w))?;
    let y = g.matmul(x, wt)?;
    g.add(y, b.var(p.b))
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` so inference is
/// the identity.
pub fn dropout(g: &mut Graph, x: Var, rate: f64, rng: &mut Rng, training: bool) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let mut mask = Tensor::zeros(g.value(x).shape());
    for m in mask.data_mut() {
        *m = if rng.gen::<f64>() < rate { 0.0 } else { keep };
    }
    let mask = g.constant(mask);
    g.mul(x, mask)
}

/// Dropout rate decreasing linearly from `base` at epoch 0 to 0 at `max_epochs`.
pub fn dropout_schedule(epoch: usize, max_epochs: usize, base: f64) -> Result<f64> {
    if max_epochs == 0 {
        return Err(Error::invalid("max_epochs must be positive"));
    }
    if epoch > max_epochs {
        return Err(Error::invalid(format!("epoch {epoch} beyond max_epochs {max_epochs}")));
    }
    Ok(base * (1.0 - epoch as f64 / max_epochs as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One bias-corrected update. Fails without touching anything if a
    /// gradient is not finite.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::invalid("adam: parameter and gradient counts differ"));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "adam",
                    shapes: vec![p.shape().to_vec(), g.shape().to_vec()],
                });
            }
            if let Some(bad) = g.data().iter().find(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient {bad} in parameter {i}"
                )));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((theta, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
