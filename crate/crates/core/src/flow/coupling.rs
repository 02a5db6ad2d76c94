use std::f64::consts::FRAC_2_PI;

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::params::{Activation, Bound, Mlp, ParamStore};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// Soft clamp `alpha * (2/pi) * atan(s / alpha)`: odd, monotone, bounded by `alpha`.
pub fn clamp_scale<T: Scalar>(g: &mut Graph<T>, s: Var, alpha: T) -> Result<Var> {
    let u = g.scale(s, T::one() / alpha)?;
    let a = g.atan(u)?;
    g.scale(a, alpha * T::lit(FRAC_2_PI))
}

pub fn clamp_scale_value<T: Scalar>(s: T, alpha: T) -> T {
    alpha * T::lit(FRAC_2_PI) * (s / alpha).atan()
}

/// Affine conditional coupling.
///
/// The input row is split at `split` into `(x1, x2)`. A subnet reads
/// `x1 ‖ cond` and emits a raw scale and a shift for every `x2` channel;
/// `y2 = x2 * exp(clamp(s)) + t`, `y1 = x1`. The log-determinant is the
/// per-sample sum of the clamped scales.
#[derive(Debug, Clone)]
pub struct CouplingBlock<T> {
    dim: usize,
    split: usize,
    cond_dim: usize,
    clamp_alpha: T,
    subnet: Mlp<T>,
}

struct Affine {
    x1: Var,
    other: Var,
    s: Var,
    t: Var,
}

impl<T: Scalar> CouplingBlock<T> {
    /// `hidden` lists the subnet's hidden widths. The subnet head is
    /// zero-initialized, so a fresh block is the identity.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        split: usize,
        cond_dim: usize,
        hidden: &[usize],
        clamp_alpha: T,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if split == 0 || split >= dim {
            return Err(TensorError::InvalidArgument {
                op: "coupling",
                msg: format!("split {split} must leave both halves of {dim} channels nonempty"),
            });
        }
        if clamp_alpha <= T::zero() {
            return Err(TensorError::InvalidArgument {
                op: "coupling",
                msg: "clamp alpha must be positive".into(),
            });
        }
        let subnet = Mlp::new(
            store,
            name,
            split + cond_dim,
            hidden,
            2 * (dim - split),
            Activation::Relu,
            T::zero(),
            true,
            rng,
        );
        Ok(Self {
            dim,
            split,
            cond_dim,
            clamp_alpha,
            subnet,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn clamp_alpha(&self) -> T {
        self.clamp_alpha
    }

    pub fn subnet(&self) -> &Mlp<T> {
        &self.subnet
    }

    fn check(&self, g: &Graph<T>, x: Var, cond: Option<Var>) -> Result<()> {
        let xs = g.shape(x);
        if xs.len() != 2 || xs[1] != self.dim {
            return Err(TensorError::ShapeMismatch {
                op: "coupling",
                lhs: xs.to_vec(),
                rhs: vec![xs.first().copied().unwrap_or(0), self.dim],
            });
        }
        let got = cond.map_or(0, |c| g.shape(c).get(1).copied().unwrap_or(0));
        if got != self.cond_dim || cond.is_some_and(|c| g.shape(c)[0] != xs[0]) {
            return Err(TensorError::ShapeMismatch {
                op: "coupling condition",
                lhs: cond.map_or(vec![], |c| g.shape(c).to_vec()),
                rhs: vec![xs[0], self.cond_dim],
            });
        }
        Ok(())
    }

    fn affine(&self, g: &mut Graph<T>, bound: &Bound, x: Var, cond: Option<Var>) -> Result<Affine> {
        self.check(g, x, cond)?;
        let d2 = self.dim - self.split;
        let parts = g.split(x, 1, &[self.split, d2])?;
        let inp = match cond {
            Some(c) => g.concat(&[parts[0], c], 1)?,
            None => parts[0],
        };
        let out = self.subnet.forward(g, bound, inp, false, None)?;
        let st = g.split(out, 1, &[d2, d2])?;
        let s = clamp_scale(g, st[0], self.clamp_alpha)?;
        Ok(Affine {
            x1: parts[0],
            other: parts[1],
            s,
            t: st[1],
        })
    }

    /// Returns `(y, logdet)` with `logdet` of shape `(n,)`.
    pub fn forward(&self, g: &mut Graph<T>, bound: &Bound, x: Var, cond: Option<Var>) -> Result<(Var, Var)> {
        let Affine { x1, other: x2, s, t } = self.affine(g, bound, x, cond)?;
        let e = g.exp(s)?;
        let scaled = g.mul(x2, e)?;
        let y2 = g.add(scaled, t)?;
        let y = g.concat(&[x1, y2], 1)?;
        let logdet = g.sum(s, Some(1))?;
        Ok((y, logdet))
    }

    /// Exact inverse of [`forward`](Self::forward); the scale and shift are
    /// recomputed from the untouched half.
    pub fn inverse(&self, g: &mut Graph<T>, bound: &Bound, y: Var, cond: Option<Var>) -> Result<Var> {
        let Affine { x1: y1, other: y2, s, t } = self.affine(g, bound, y, cond)?;
        let shifted = g.sub(y2, t)?;
        let neg = g.neg(s)?;
        let e = g.exp(neg)?;
        let x2 = g.mul(shifted, e)?;
        g.concat(&[y1, x2], 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn block(dim: usize, cond_dim: usize, seed: u64) -> (ParamStore<f64>, CouplingBlock<f64>) {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(seed);
        let b = CouplingBlock::new(&mut store, "cc", dim, dim / 2, cond_dim, &[8, 8], 1.0, &mut rng).unwrap();
        (store, b)
    }

    fn randomize(store: &mut ParamStore<f64>, seed: u64) {
        let mut rng = RngStream::new(seed);
        for t in store.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.5 * rng.normal());
        }
    }

    #[test]
    fn clamp_values() {
        assert_eq!(clamp_scale_value(0.0, 1.0), 0.0);
        assert!((clamp_scale_value(1.0f64, 1.0) - 0.5).abs() < 1e-15);
        assert!((clamp_scale_value(1e12f64, 1.0) - 1.0).abs() < 1e-9);
        assert_eq!(clamp_scale_value(-2.0, 1.5), -clamp_scale_value(2.0, 1.5));
    }

    #[test]
    fn split_must_leave_both_halves() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngStream::new(0);
        assert!(CouplingBlock::new(&mut store, "a", 4, 0, 0, &[4], 1.0, &mut rng).is_err());
        assert!(CouplingBlock::new(&mut store, "a", 4, 4, 0, &[4], 1.0, &mut rng).is_err());
    }

    #[test]
    fn zero_head_is_identity() {
        let (store, b) = block(6, 3, 1);
        let mut g = Graph::new();
        let bound = store.bind(&mut g, false);
        let x = g.constant(Tensor::from_fn(&[4, 6], |i| i as f64 * 0.37 - 2.0));
        let c = g.constant(Tensor::from_fn(&[4, 3], |i| (i % 2) as f64));
        let (y, ld) = b.forward(&mut g, &bound, x, Some(c)).unwrap();
        assert_eq!(g.value(y), g.value(x));
        assert!(g.value(ld).data().iter().all(|&v| v == 0.0));
        let back = b.inverse(&mut g, &bound, y, Some(c)).unwrap();
        assert_eq!(g.value(back), g.value(x));
    }

    #[test]
    fn constant_scale_doubles_second_half() {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(0);
        let b = CouplingBlock::new(&mut store, "cc", 5, 2, 0, &[4], 1.0, &mut rng).unwrap();
        // raw scale s with clamp(s) = ln 2
        let raw = (2f64.ln() * std::f64::consts::FRAC_PI_2).tan();
        let (_, bias) = b.subnet().head();
        let bt = store.get_mut(bias);
        for i in 0..3 {
            bt.data_mut()[i] = raw;
        }
        let mut g = Graph::new();
        let bound = store.bind(&mut g, false);
        let x = g.constant(Tensor::new(vec![1, 5], vec![1., 2., 3., -4., 0.5]).unwrap());
        let (y, ld) = b.forward(&mut g, &bound, x, None).unwrap();
        let yv = g.value(y).data().to_vec();
        assert_eq!(&yv[..2], &[1., 2.]);
        for (a, e) in yv[2..].iter().zip([6., -8., 1.]) {
            assert!((a - e).abs() < 1e-12);
        }
        assert!((g.value(ld).item() - 3.0 * 2f64.ln()).abs() < 1e-12);
        let back = b.inverse(&mut g, &bound, y, None).unwrap();
        assert!(g.value(back).max_abs_diff(g.value(x)) < 1e-15);
    }

    #[test]
    fn condition_width_is_checked() {
        let (store, b) = block(4, 3, 2);
        let mut g = Graph::new();
        let bound = store.bind(&mut g, false);
        let x = g.constant(Tensor::zeros(&[2, 4]));
        let c = g.constant(Tensor::zeros(&[2, 2]));
        assert!(b.forward(&mut g, &bound, x, Some(c)).is_err());
        assert!(b.forward(&mut g, &bound, x, None).is_err());
    }

    #[test]
    fn random_round_trip() {
        let (mut store, b) = block(8, 2, 3);
        randomize(&mut store, 4);
        let mut rng = RngStream::new(5);
        let mut g = Graph::new();
        let bound = store.bind(&mut g, false);
        let xt = Tensor::from_fn(&[1000, 8], |_| 2.0 * rng.normal());
        let ct = Tensor::from_fn(&[1000, 2], |_| rng.uniform());
        let x = g.constant(xt);
        let c = g.constant(ct);
        let (y, _) = b.forward(&mut g, &bound, x, Some(c)).unwrap();
        let back = b.inverse(&mut g, &bound, y, Some(c)).unwrap();
        assert!(g.value(back).max_abs_diff(g.value(x)) < 1e-9);
    }
}
