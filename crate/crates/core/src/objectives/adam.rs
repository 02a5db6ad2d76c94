use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.95,
            weight_decay: 1e-4,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with weight decay added to the gradient (L2 form).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(TensorError::InvalidArgument {
                op: "adam",
                msg: format!("learning rate must be positive, got {}", config.lr),
            });
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) || config.eps < 0.0 {
            return Err(TensorError::InvalidArgument {
                op: "adam",
                msg: "betas must lie in [0, 1) and eps must be non-negative".into(),
            });
        }
        let zeros = |p: &ParamStore<T>| p.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Ok(Self {
            config,
            m: zeros(params),
            v: zeros(params),
            step: 0,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.m, &self.v)
    }

    /// Restores moments and step counter, e.g. from a checkpoint.
    pub fn restore(&mut self, m: Vec<Tensor<T>>, v: Vec<Tensor<T>>, step: u64) -> Result<()> {
        let same = |a: &[Tensor<T>], b: &[Tensor<T>]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.shape() == y.shape());
        if !same(&m, &self.m) || !same(&v, &self.v) {
            return Err(TensorError::InvalidArgument {
                op: "adam",
                msg: "restored moments do not match parameter shapes".into(),
            });
        }
        self.m = m;
        self.v = v;
        self.step = step;
        Ok(())
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(TensorError::InvalidArgument {
                op: "adam",
                msg: format!("{} gradients for {} parameters", grads.len(), params.len()),
            });
        }
        for (p, g) in params.tensors().iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, wd, eps) = (T::lit(c.lr), T::lit(c.weight_decay), T::lit(c.eps));
        let t = self.step as i32;
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        for ((p, g), (m, v)) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                let gi = gi + wd * *pi;
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi = *pi - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("p", Tensor::new(vec![v.len()], v.to_vec()).unwrap());
        s
    }

    #[test]
    fn zero_grads_leave_params() {
        let mut p = store(&[1.0, -2.0]);
        let cfg = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
        let mut opt = AdamState::new(cfg, &p).unwrap();
        for _ in 0..5 {
            opt.step(&mut p, &[Tensor::zeros(&[2])]).unwrap();
        }
        assert_eq!(p.tensors()[0].data(), &[1.0, -2.0]);
    }

    #[test]
    fn degenerate_betas_give_sign_step() {
        let mut p = store(&[1.0, 1.0]);
        let cfg = AdamConfig { lr: 0.1, beta1: 0.0, beta2: 0.0, weight_decay: 0.0, eps: 1e-8 };
        let mut opt = AdamState::new(cfg, &p).unwrap();
        let g = [0.5, -3.0];
        opt.step(&mut p, &[Tensor::new(vec![2], g.to_vec()).unwrap()]).unwrap();
        for (i, gi) in g.iter().enumerate() {
            let expect = 1.0 - 0.1 * gi / (gi.abs() + 1e-8);
            assert!((p.tensors()[0].data()[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        let mut p = store(&[0.6, 0.8]);
        let cfg = AdamConfig { lr: 0.05, beta1: 0.9, beta2: 0.999, weight_decay: 0.0, eps: 1e-8 };
        let mut opt = AdamState::new(cfg, &p).unwrap();
        for _ in 0..500 {
            let grad = p.tensors()[0].map(|x| 2.0 * x);
            opt.step(&mut p, &[grad]).unwrap();
        }
        let norm = p.tensors()[0].sum_squares().sqrt();
        assert!(norm < 1e-3, "{norm}");
    }

    #[test]
    fn rejects_non_positive_lr() {
        let p = store(&[1.0]);
        assert!(AdamState::new(AdamConfig { lr: 0.0, ..AdamConfig::default() }, &p).is_err());
    }
}
