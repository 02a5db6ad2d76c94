//! The multiscale conditional invertible network `f(x, DY, θ)`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::condition::{encode_conditions, Condition};
use crate::error::ModelError;
use crate::flow::{CouplingBlock, Haar1d, Haar2d, PermutationLayer};
use crate::graph::{Graph, LinearOperator, Var};
use crate::params::{Bound, ParamStore};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::spec::{ConditionSelector, InputShape, ModelSpec};
use crate::tensor::Tensor;

/// Rows per graph when evaluating large inputs without gradients.
const EVAL_CHUNK: usize = 1024;

#[derive(Clone)]
enum Layer<T> {
    Haar(Arc<dyn LinearOperator<T>>),
    Permute(PermutationLayer),
    Coupling {
        block: CouplingBlock<T>,
        selector: ConditionSelector,
        scale: usize,
    },
}

/// Conditional flow: an input standardization followed, per scale, by a Haar
/// downsampling (from the second scale on) and alternating permutation and
/// coupling layers.
#[derive(Clone)]
pub struct FlowModel<T> {
    spec: ModelSpec,
    params: ParamStore<T>,
    layers: Vec<Layer<T>>,
    shift: Tensor<T>,
    gain: Tensor<T>,
}

impl<T: Scalar> fmt::Debug for FlowModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlowModel")
            .field("spec", &self.spec)
            .field("parameters", &self.params.numel())
            .finish()
    }
}

/// Per-pass cache of condition tensors, keyed by scale and selector.
struct CondVars<'a> {
    spec: &'a ModelSpec,
    conds: &'a [Condition],
    cache: HashMap<(usize, ConditionSelector), Option<Var>>,
}

impl CondVars<'_> {
    fn get<T: Scalar>(&mut self, g: &mut Graph<T>, scale: usize, sel: ConditionSelector) -> Option<Var> {
        *self.cache.entry((scale, sel)).or_insert_with(|| {
            encode_conditions::<T>(self.spec, self.conds, scale, sel).map(|t| g.constant(t))
        })
    }
}

impl<T: Scalar> FlowModel<T> {
    /// Deterministic in `rng`. The fresh model is the identity up to channel
    /// permutations (and Haar reshuffles), with zero log-determinant.
    pub fn build(spec: ModelSpec, rng: &RngStream) -> Result<Self, ModelError> {
        spec.validate()?;
        let dim = spec.dim();
        let mut init = rng.derive("init");
        let mut perms = rng.derive("permutations");
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        let hidden = vec![spec.subnet_width; spec.subnet_hidden_layers];
        let alpha = T::lit(spec.clamp_alpha);
        let mut block_idx = 0;
        for (scale, &n_blocks) in spec.blocks_per_scale.iter().enumerate() {
            if scale > 0 {
                let op: Arc<dyn LinearOperator<T>> = match spec.input_shape.downsampled(scale - 1) {
                    InputShape::Sequence { length, channels } => Arc::new(Haar1d::new(length, channels)?),
                    InputShape::Grid { height, width, channels } => {
                        Arc::new(Haar2d::new(height, width, channels)?)
                    }
                };
                layers.push(Layer::Haar(op));
            }
            for _ in 0..n_blocks {
                let selector = spec.condition_per_block[block_idx];
                layers.push(Layer::Permute(PermutationLayer::random(dim, &mut perms)));
                let block = CouplingBlock::new(
                    &mut params,
                    &format!("block{block_idx}"),
                    dim,
                    dim / 2,
                    spec.cond_dim(scale, selector),
                    &hidden,
                    alpha,
                    &mut init,
                )?;
                layers.push(Layer::Coupling { block, selector, scale });
                block_idx += 1;
            }
        }
        Ok(Self {
            spec,
            params,
            layers,
            shift: Tensor::zeros(&[dim]),
            gain: Tensor::full(&[dim], T::one()),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Channel permutations in layer order.
    pub fn permutations(&self) -> Vec<&[usize]> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Permute(p) => Some(p.perm()),
                _ => None,
            })
            .collect()
    }

    pub fn set_permutations(&mut self, perms: Vec<Vec<usize>>) -> Result<(), ModelError> {
        let d = self.dim();
        let slots = self.layers.iter().filter(|l| matches!(l, Layer::Permute(_))).count();
        if perms.len() != slots {
            return Err(ModelError::InvalidSpec(format!("expected {slots} permutations, got {}", perms.len())));
        }
        for p in &perms {
            let mut seen = vec![false; d];
            if p.len() != d || !p.iter().all(|&i| i < d && !std::mem::replace(&mut seen[i], true)) {
                return Err(ModelError::InvalidSpec(format!("not a permutation of {d} channels")));
            }
        }
        let mut perms = perms.into_iter();
        for l in &mut self.layers {
            if let Layer::Permute(p) = l {
                *p = PermutationLayer::from_perm(perms.next().expect("counted above"));
            }
        }
        Ok(())
    }

    /// Fixed per-feature affine map `(x - shift) * gain` applied before the first layer.
    pub fn standardizer(&self) -> (&Tensor<T>, &Tensor<T>) {
        (&self.shift, &self.gain)
    }

    pub fn set_standardizer(&mut self, shift: Tensor<T>, gain: Tensor<T>) -> Result<(), ModelError> {
        let d = self.dim();
        if shift.shape() != [d] || gain.shape() != [d] || gain.data().iter().any(|&v| v <= T::zero()) {
            return Err(ModelError::InvalidSpec(format!(
                "standardizer needs {d} shifts and {d} positive gains"
            )));
        }
        self.shift = shift;
        self.gain = gain;
        Ok(())
    }

    /// Sets the standardizer to each feature's mean and inverse standard deviation over `rows`.
    pub fn fit_standardizer(&mut self, rows: &Tensor<T>) -> Result<(), ModelError> {
        let (n, d) = (rows.rows(), rows.cols());
        if d != self.dim() || n < 2 {
            return Err(ModelError::InputWidth { expected: self.dim(), got: d });
        }
        let nf = T::from_usize(n).unwrap();
        let mut mean = vec![T::zero(); d];
        for r in 0..n {
            for (m, &v) in mean.iter_mut().zip(rows.row(r)) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / nf);
        let mut var = vec![T::zero(); d];
        for r in 0..n {
            for ((s, &v), &m) in var.iter_mut().zip(rows.row(r)).zip(&mean) {
                *s = *s + (v - m) * (v - m);
            }
        }
        let floor = T::lit(1e-12);
        let gain: Vec<T> = var.iter().map(|&s| T::one() / (s / nf).max(floor).sqrt()).collect();
        self.set_standardizer(Tensor::from_fn(&[d], |i| mean[i]), Tensor::from_fn(&[d], |i| gain[i]))
    }

    fn check_inputs(&self, g: &Graph<T>, x: Var, conds: &[Condition]) -> Result<(), ModelError> {
        let s = g.shape(x);
        if s.len() != 2 || s[1] != self.dim() {
            return Err(ModelError::InputWidth {
                expected: self.dim(),
                got: s.get(1).copied().unwrap_or(0),
            });
        }
        if conds.len() != s[0] {
            return Err(ModelError::InvalidCondition(format!(
                "{} conditions for {} rows",
                conds.len(),
                s[0]
            )));
        }
        for c in conds {
            c.validate(&self.spec)?;
        }
        Ok(())
    }

    /// `z = f(x, c)` and the per-sample `log|det J|`, recorded into `g`.
    pub fn encode_graph(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        x: Var,
        conds: &[Condition],
    ) -> Result<(Var, Var), ModelError> {
        self.check_inputs(g, x, conds)?;
        let n = g.shape(x)[0];
        let mut cv = CondVars {
            spec: &self.spec,
            conds,
            cache: HashMap::new(),
        };
        let shift = g.constant(self.shift.clone());
        let gain = g.constant(self.gain.clone());
        let centered = g.sub(x, shift)?;
        let mut h = g.mul(centered, gain)?;
        let base: T = self.gain.data().iter().fold(T::zero(), |s, &v| s + v.ln());
        let mut logdet = g.constant(Tensor::full(&[n], base));
        for layer in &self.layers {
            match layer {
                Layer::Haar(op) => h = g.linear_map(h, op.clone(), false)?,
                Layer::Permute(p) => h = p.forward(g, h)?,
                Layer::Coupling { block, selector, scale } => {
                    let c = cv.get(g, *scale, *selector);
                    let (y, ld) = block.forward(g, bound, h, c)?;
                    h = y;
                    logdet = g.add(logdet, ld)?;
                }
            }
        }
        Ok((h, logdet))
    }

    /// `x = f⁻¹(z, c)`, recorded into `g`.
    pub fn decode_graph(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        z: Var,
        conds: &[Condition],
    ) -> Result<Var, ModelError> {
        self.check_inputs(g, z, conds)?;
        let mut cv = CondVars {
            spec: &self.spec,
            conds,
            cache: HashMap::new(),
        };
        let mut h = z;
        for layer in self.layers.iter().rev() {
            match layer {
                Layer::Haar(op) => h = g.linear_map(h, op.clone(), true)?,
                Layer::Permute(p) => h = p.inverse(g, h)?,
                Layer::Coupling { block, selector, scale } => {
                    let c = cv.get(g, *scale, *selector);
                    h = block.inverse(g, bound, h, c)?;
                }
            }
        }
        let inv_gain = g.constant(self.gain.map(|v| T::one() / v));
        let shift = g.constant(self.shift.clone());
        let scaled = g.mul(h, inv_gain)?;
        Ok(g.add(scaled, shift)?)
    }

    fn chunked<R>(
        &self,
        x: &Tensor<T>,
        conds: &[Condition],
        mut f: impl FnMut(&mut Graph<T>, &Bound, Var, &[Condition]) -> Result<R, ModelError>,
    ) -> Result<Vec<R>, ModelError> {
        if x.ndim() != 2 || x.cols() != self.dim() {
            return Err(ModelError::InputWidth {
                expected: self.dim(),
                got: x.shape().last().copied().unwrap_or(0),
            });
        }
        if conds.len() != x.rows() {
            return Err(ModelError::InvalidCondition(format!(
                "{} conditions for {} rows",
                conds.len(),
                x.rows()
            )));
        }
        let idx: Vec<usize> = (0..x.rows()).collect();
        idx.chunks(EVAL_CHUNK)
            .map(|rows| {
                let mut g = Graph::new();
                let bound = self.params.bind(&mut g, false);
                let xv = g.constant(x.select_rows(rows));
                f(&mut g, &bound, xv, &conds[rows[0]..rows[0] + rows.len()])
            })
            .collect()
    }

    /// Graph-free encode returning latents and per-sample log-determinants.
    pub fn encode(&self, x: &Tensor<T>, conds: &[Condition]) -> Result<(Tensor<T>, Vec<T>), ModelError> {
        let parts = self.chunked(x, conds, |g, b, xv, c| {
            let (z, ld) = self.encode_graph(g, b, xv, c)?;
            Ok((g.value(z).data().to_vec(), g.value(ld).data().to_vec()))
        })?;
        let mut z = Vec::with_capacity(x.len());
        let mut ld = Vec::with_capacity(x.rows());
        for (zp, lp) in parts {
            z.extend(zp);
            ld.extend(lp);
        }
        Ok((Tensor::new(x.shape().to_vec(), z)?, ld))
    }

    pub fn decode(&self, z: &Tensor<T>, conds: &[Condition]) -> Result<Tensor<T>, ModelError> {
        let parts = self.chunked(z, conds, |g, b, zv, c| {
            let x = self.decode_graph(g, b, zv, c)?;
            Ok(g.value(x).data().to_vec())
        })?;
        Ok(Tensor::new(z.shape().to_vec(), parts.concat())?)
    }

    /// `decode(encode(x, from), to)`: re-renders samples under another condition.
    pub fn transfer(&self, x: &Tensor<T>, from: &[Condition], to: &[Condition]) -> Result<Tensor<T>, ModelError> {
        if to.len() != from.len() {
            return Err(ModelError::InvalidCondition("source and target condition counts differ".into()));
        }
        let (z, _) = self.encode(x, from)?;
        self.decode(&z, to)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::{Domain, TissueLabel};

    fn small_spec() -> ModelSpec {
        let mut s = ModelSpec::spectral(8, 3);
        s.blocks_per_scale = vec![2];
        s.condition_per_block = vec![ConditionSelector::DomainTissue, ConditionSelector::Unconditioned];
        s.subnet_width = 16;
        s
    }

    #[test]
    fn untrained_model_only_permutes() {
        let model = FlowModel::<f64>::build(small_spec(), &RngStream::new(1)).unwrap();
        let x = Tensor::from_fn(&[3, 8], |i| i as f64 - 7.5);
        let conds = vec![Condition::class(Domain::Sim, 1); 3];
        let (z, ld) = model.encode(&x, &conds).unwrap();
        assert!(ld.iter().all(|&v| v == 0.0));
        for r in 0..3 {
            let mut a = x.row(r).to_vec();
            let mut b = z.row(r).to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
        assert_eq!(model.decode(&z, &conds).unwrap(), x);
    }

    #[test]
    fn build_is_deterministic() {
        let a = FlowModel::<f64>::build(small_spec(), &RngStream::new(9)).unwrap();
        let b = FlowModel::<f64>::build(small_spec(), &RngStream::new(9)).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn rejects_wrong_width_and_conditions() {
        let model = FlowModel::<f64>::build(small_spec(), &RngStream::new(1)).unwrap();
        let x = Tensor::zeros(&[2, 7]);
        assert!(matches!(
            model.encode(&x, &vec![Condition::class(Domain::Sim, 0); 2]),
            Err(ModelError::InputWidth { expected: 8, got: 7 })
        ));
        let x = Tensor::zeros(&[2, 8]);
        assert!(model.encode(&x, &vec![Condition::class(Domain::Sim, 5); 2]).is_err());
        let map = Condition::new(Domain::Sim, TissueLabel::Map(vec![0; 8]));
        assert!(model.encode(&x, &[map.clone(), map]).is_err());
    }

    #[test]
    fn indivisible_grid_is_rejected() {
        let mut s = ModelSpec::image(2);
        s.input_shape = InputShape::Grid { height: 14, width: 16, channels: 1 };
        assert!(matches!(
            FlowModel::<f64>::build(s, &RngStream::new(0)),
            Err(ModelError::InvalidSpec(_))
        ));
    }

    #[test]
    fn standardizer_contributes_logdet() {
        let mut model = FlowModel::<f64>::build(small_spec(), &RngStream::new(1)).unwrap();
        model
            .set_standardizer(Tensor::full(&[8], 1.0), Tensor::full(&[8], 2.0))
            .unwrap();
        let x = Tensor::from_fn(&[2, 8], |i| i as f64);
        let conds = vec![Condition::class(Domain::Real, 0); 2];
        let (z, ld) = model.encode(&x, &conds).unwrap();
        assert!((ld[0] - 8.0 * 2f64.ln()).abs() < 1e-12);
        assert!(model.decode(&z, &conds).unwrap().max_abs_diff(&x) < 1e-12);
    }
}
