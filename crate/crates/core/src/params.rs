//! Named parameter storage and the per-pass graph that binds parameters onto a tape.

use std::collections::HashMap;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{Initializer, Tape, Tensor, Var};

/// Ordered map from parameter name to value. Order is creation order and is
/// the order used by checkpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Zeroes every tensor whose name starts with `prefix`.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for (name, t) in self.params.iter_mut() {
            if name.starts_with(prefix) {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Registers a `[fan_in×fan_out]` weight and a zero bias under `name.w` / `name.b`.
    pub fn init_linear(&mut self, init: &mut Initializer, name: &str, fan_in: usize, fan_out: usize) {
        self.insert(format!("{name}.w"), init.uniform(&[fan_in, fan_out], fan_in));
        self.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]));
    }

    pub fn init_layer_norm(&mut self, name: &str, width: usize) {
        self.insert(format!("{name}.gain"), Tensor::full(&[width], 1.0));
        self.insert(format!("{name}.bias"), Tensor::zeros(&[width]));
    }
}

/// Accumulated gradients keyed by parameter name.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: IndexMap<String, Tensor>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (k, v) in &other.grads {
            match self.grads.get_mut(k) {
                Some(acc) => acc.add_assign(v),
                None => {
                    self.grads.insert(k.clone(), v.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.values().all(Tensor::is_finite)
    }
}

/// One attention matrix captured during a forward pass.
#[derive(Clone, Debug)]
pub struct AttentionRecord {
    /// "spatial", "encoder" or "decoder".
    pub stage: &'static str,
    pub layer: usize,
    pub set: usize,
    /// `[heads×n×n]` for temporal maps, `[N×N]` (summed over frames) for spatial.
    pub weights: Tensor,
}

/// A single forward (and optional backward) pass: a tape plus lazily bound
/// parameters.
pub struct Graph<'p> {
    pub tape: Tape,
    params: &'p ParamStore,
    bound: HashMap<String, Var>,
    order: Vec<String>,
    trainable: bool,
    attention: Option<Vec<AttentionRecord>>,
}

impl<'p> Graph<'p> {
    /// A graph whose parameters receive gradients.
    pub fn new(params: &'p ParamStore) -> Self {
        Self::with_mode(params, true)
    }

    /// A forward-only graph.
    pub fn inference(params: &'p ParamStore) -> Self {
        Self::with_mode(params, false)
    }

    fn with_mode(params: &'p ParamStore, trainable: bool) -> Self {
        Self {
            tape: Tape::new(),
            params,
            bound: HashMap::new(),
            order: Vec::new(),
            trainable,
            attention: None,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    /// Turns on capture of attention matrices.
    pub fn record_attention(&mut self) {
        self.attention = Some(Vec::new());
    }

    pub fn recording_attention(&self) -> bool {
        self.attention.is_some()
    }

    pub fn push_attention(&mut self, record: AttentionRecord) {
        if let Some(a) = self.attention.as_mut() {
            a.push(record);
        }
    }

    pub fn take_attention(&mut self) -> Vec<AttentionRecord> {
        self.attention.take().unwrap_or_default()
    }

    /// Binds the named parameter onto the tape (once per graph).
    pub fn p(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let value = self
            .params
            .get(name)
            .ok_or_else(|| Error::config(name, "parameter missing from store"))?
            .clone();
        let v = if self.trainable { self.tape.param(value) } else { self.tape.constant(value) };
        self.bound.insert(name.to_string(), v);
        self.order.push(name.to_string());
        Ok(v)
    }

    /// `x·W + b` with `name.w` / `name.b`.
    pub fn linear(&mut self, x: Var, name: &str) -> Result<Var> {
        let w = self.p(&format!("{name}.w"))?;
        let b = self.p(&format!("{name}.b"))?;
        let y = self.tape.matmul(x, w)?;
        self.tape.add_bias(y, b)
    }

    pub fn layer_norm(&mut self, x: Var, name: &str) -> Result<Var> {
        let g = self.p(&format!("{name}.gain"))?;
        let b = self.p(&format!("{name}.bias"))?;
        self.tape.layer_norm(x, g, b)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.tape.constant(value)
    }

    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        self.tape.backward(loss)?;
        let mut grads = Gradients::new();
        for name in &self.order {
            let v = self.bound[name];
            let g = self
                .tape
                .grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(self.tape.shape(v)));
            grads.grads.insert(name.clone(), g);
        }
        Ok(grads)
    }
}
