//! Named parameter storage and the small fully connected networks built on it.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

/// Parameters of a [`ParamStore`] bound into one graph.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wraps externally created leaves, one per store entry in order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Adds every parameter to `g`, as gradient-receiving leaves when `trainable`.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Gradients for all parameters after `g.backward`; missing ones are zero.
    pub fn grads(&self, g: &Graph<T>, bound: &Bound) -> Vec<Tensor<T>> {
        self.tensors
            .iter()
            .zip(&bound.vars)
            .map(|(t, &v)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation<T> {
    Relu,
    LeakyRelu(T),
}

/// Multilayer perceptron: hidden `Linear + activation` layers followed by a linear head.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    layers: Vec<(ParamId, ParamId)>,
    activation: Activation<T>,
    dropout: T,
    in_dim: usize,
    out_dim: usize,
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform hidden layers. With `zero_head` the output layer starts at
    /// exactly zero.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore<T>,
        prefix: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        activation: Activation<T>,
        dropout: T,
        zero_head: bool,
        rng: &mut RngStream,
    ) -> Self {
        let mut dims = vec![in_dim];
        dims.extend_from_slice(hidden);
        dims.push(out_dim);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let w = if zero_head && i == n - 1 {
                    Tensor::zeros(&[fan_in, fan_out])
                } else {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    Tensor::from_fn(&[fan_in, fan_out], |_| T::lit(rng.uniform_range(-a, a)))
                };
                let wid = store.add(format!("{prefix}.{i}.weight"), w);
                let bid = store.add(format!("{prefix}.{i}.bias"), Tensor::zeros(&[fan_out]));
                (wid, bid)
            })
            .collect();
        Self {
            layers,
            activation,
            dropout,
            in_dim,
            out_dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }

    /// Dropout is applied after each hidden activation when `train` is set and a
    /// stream is provided.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        x: Var,
        train: bool,
        mut rng: Option<&mut RngStream>,
    ) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = g.matmul(h, bound.var(w))?;
            h = g.add(h, bound.var(b))?;
            if i < last {
                h = match self.activation {
                    Activation::Relu => g.relu(h)?,
                    Activation::LeakyRelu(s) => g.leaky_relu(h, s)?,
                };
                if let Some(r) = rng.as_deref_mut() {
                    h = g.dropout(h, self.dropout, train, r)?;
                }
            }
        }
        Ok(h)
    }

    /// Output layer (weight, bias) ids.
    pub fn head(&self) -> (ParamId, ParamId) {
        self.layers[self.layers.len() - 1]
    }
}
