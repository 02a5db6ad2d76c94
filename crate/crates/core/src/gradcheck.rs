//! Central finite-difference check of graph gradients.

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Max over coordinates of `|analytic - numeric| / max(1, |analytic|)` for a
/// scalar function of one tensor.
///
/// Points where the function is not differentiable (e.g. a relu input exactly
/// at zero) are outside the contract; callers must avoid them.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, eps: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, Var) -> Result<Var>,
{
    grad_check_many(|g, vs| f(g, vs[0]), std::slice::from_ref(x), eps)
}

/// [`grad_check`] over several inputs at once; the function receives one
/// [`Var`] per input tensor, in order.
pub fn grad_check_many<T, F>(f: F, xs: &[Tensor<T>], eps: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    if eps < T::lit(1e-7) || eps > T::lit(1e-3) {
        return Err(TensorError::InvalidArgument {
            op: "grad_check",
            msg: format!("step {eps} outside [1e-7, 1e-3]"),
        });
    }
    let eval = |inputs: &[Tensor<T>]| -> Result<T> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let v = g.value(out);
        if v.len() != 1 {
            return Err(TensorError::NonScalarSeed(v.shape().to_vec()));
        }
        Ok(v.item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = xs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor<T>> = vars
        .iter()
        .zip(xs)
        .map(|(&v, x)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape())))
        .collect();

    let two = T::one() + T::one();
    let mut worst = T::zero();
    let mut probe: Vec<Tensor<T>> = xs.to_vec();
    for (k, x) in xs.iter().enumerate() {
        for i in 0..x.len() {
            let orig = x.data()[i];
            probe[k].data_mut()[i] = orig + eps;
            let up = eval(&probe)?;
            probe[k].data_mut()[i] = orig - eps;
            let down = eval(&probe)?;
            probe[k].data_mut()[i] = orig;
            let numeric = (up - down) / (two * eps);
            let a = analytic[k].data()[i];
            let err = (a - numeric).abs() / a.abs().max(T::one());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
