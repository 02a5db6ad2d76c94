use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{Activation, Bound, Mlp, ParamStore};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            width: 256,
            dropout: 0.2,
            leaky_slope: 0.2,
        }
    }
}

/// Unconditional MLP critic with a scalar output per sample.
#[derive(Debug, Clone)]
pub struct Discriminator<T> {
    params: ParamStore<T>,
    net: Mlp<T>,
    config: DiscriminatorConfig,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(dim: usize, config: DiscriminatorConfig, rng: &mut RngStream) -> Self {
        let mut params = ParamStore::new();
        let net = Mlp::new(
            &mut params,
            "dis",
            dim,
            &vec![config.width; config.hidden_layers],
            1,
            Activation::LeakyRelu(T::lit(config.leaky_slope)),
            T::lit(config.dropout),
            false,
            rng,
        );
        Self { params, net, config }
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Scores of shape `(n, 1)`. Dropout is active only when a stream is given.
    pub fn forward(&self, g: &mut Graph<T>, bound: &Bound, x: Var, dropout: Option<&mut RngStream>) -> Result<Var> {
        let train = dropout.is_some();
        self.net.forward(g, bound, x, train, dropout)
    }

    /// Eval-mode scores.
    pub fn score(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let b = self.params.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let s = self.forward(&mut g, &b, xv, None)?;
        Ok(g.value(s).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_mode_is_deterministic_and_finite() {
        let d = Discriminator::<f64>::new(6, DiscriminatorConfig::default(), &mut RngStream::new(3));
        let x = Tensor::from_fn(&[5, 6], |i| (i as f64).sin());
        let a = d.score(&x).unwrap();
        assert_eq!(a, d.score(&x).unwrap());
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|v| v.is_finite()));
    }
}
