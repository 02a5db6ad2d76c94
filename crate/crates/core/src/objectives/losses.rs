use serde::{Deserialize, Serialize};

use crate::condition::{Condition, Domain};
use crate::error::{ModelError, Result, TensorError};
use crate::graph::{Graph, Var};
use crate::model::FlowModel;
use crate::params::Bound;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::discriminator::Discriminator;

/// Negative log-likelihood under a unit Gaussian latent, up to the constant
/// `d/2 log 2π`: batch mean of `‖z‖²/2 − log|det J|`.
pub fn ml_loss<T: Scalar>(g: &mut Graph<T>, z: Var, logdet: Var) -> Result<Var> {
    let sq = g.square(z)?;
    let energy = g.sum(sq, Some(1))?;
    let half = g.scale(energy, T::lit(0.5))?;
    let nll = g.sub(half, logdet)?;
    g.mean(nll, None)
}

pub fn ml_loss_value<T: Scalar>(z: &Tensor<T>, logdet: &[T]) -> Result<T> {
    if !z.all_finite() || logdet.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite { op: "ml_loss" });
    }
    if z.rows() != logdet.len() || logdet.is_empty() {
        return Err(TensorError::ShapeMismatch {
            op: "ml_loss",
            lhs: z.shape().to_vec(),
            rhs: vec![logdet.len()],
        });
    }
    let half = T::lit(0.5);
    let total = (0..z.rows()).fold(T::zero(), |acc, r| {
        let e = z.row(r).iter().fold(T::zero(), |s, &v| s + v * v);
        acc + e * half - logdet[r]
    });
    Ok(total / T::from_usize(logdet.len()).unwrap())
}

fn mean_sq_from<T: Scalar>(g: &mut Graph<T>, scores: Var, target: T) -> Result<Var> {
    let t = g.scalar(target);
    let d = g.sub(scores, t)?;
    let sq = g.square(d)?;
    g.mean(sq, None)
}

/// Least-squares generator loss: mean `(Dis(fake) − 1)²`.
pub fn gen_loss<T: Scalar>(g: &mut Graph<T>, fake_scores: Var) -> Result<Var> {
    mean_sq_from(g, fake_scores, T::one())
}

/// Least-squares discriminator loss: mean `(Dis(real) − 1)²` + mean `Dis(fake)²`.
pub fn dis_loss<T: Scalar>(g: &mut Graph<T>, real_scores: Var, fake_scores: Var) -> Result<Var> {
    let r = mean_sq_from(g, real_scores, T::one())?;
    let f = mean_sq_from(g, fake_scores, T::zero())?;
    g.add(r, f)
}

fn mean_sq<T: Scalar>(v: &[T], target: T) -> T {
    v.iter().fold(T::zero(), |s, &x| s + (x - target) * (x - target)) / T::from_usize(v.len()).unwrap()
}

pub fn gen_loss_value<T: Scalar>(fake_scores: &[T]) -> T {
    mean_sq(fake_scores, T::one())
}

pub fn dis_loss_value<T: Scalar>(real_scores: &[T], fake_scores: &[T]) -> T {
    mean_sq(real_scores, T::one()) + mean_sq(fake_scores, T::zero())
}

/// Weights of the four generator-side terms. The unweighted sum is the default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub ml_real: f64,
    pub ml_sim: f64,
    pub gen_real: f64,
    pub gen_sim: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ml_real: 1.0,
            ml_sim: 1.0,
            gen_real: 1.0,
            gen_sim: 1.0,
        }
    }
}

impl LossWeights {
    pub fn adversarial(&self) -> bool {
        self.gen_real != 0.0 || self.gen_sim != 0.0
    }
}

/// Generator-side graph nodes of one batch.
pub struct GenPass {
    pub ml_sim: Var,
    pub ml_real: Var,
    /// `None` when the adversarial terms were skipped.
    pub gen_real: Option<Var>,
    pub gen_sim: Option<Var>,
    pub total: Var,
    /// `T_{sim→real}(x_sim)` and `T_{real→sim}(x_real)`.
    pub fake_real: Option<Var>,
    pub fake_sim: Option<Var>,
}

/// Stage tag used in diagnostics when a term goes non-finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    MlSim,
    MlReal,
    GenReal,
    GenSim,
    DisReal,
    DisSim,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::MlSim => "ml_sim",
            Stage::MlReal => "ml_real",
            Stage::GenReal => "gen_real",
            Stage::GenSim => "gen_sim",
            Stage::DisReal => "dis_real",
            Stage::DisSim => "dis_sim",
        }
    }
}

/// Error plus the loss term being computed when it happened.
pub type StageResult<V> = std::result::Result<V, (Stage, ModelError)>;

fn at<E: Into<ModelError>>(stage: Stage) -> impl FnOnce(E) -> (Stage, ModelError) {
    move |e| (stage, e.into())
}

/// Records the full generator objective
/// `w·(ML_real, ML_sim, Gen_real, Gen_sim)` for one pair of batches.
///
/// The adversarial terms and fakes are skipped when both adversarial weights
/// are zero, unless `with_fakes` asks for them.
///
/// Real-domain samples carry proxy tissue labels in `c_real`. Fakes are
/// produced by swapping only the domain bit of each sample's own condition.
#[allow(clippy::too_many_arguments)]
pub fn generator_pass<T: Scalar>(
    g: &mut Graph<T>,
    model: &FlowModel<T>,
    flow: &Bound,
    dis: [(&Discriminator<T>, &Bound); 2],
    x_sim: Var,
    c_sim: &[Condition],
    x_real: Var,
    c_real: &[Condition],
    weights: &LossWeights,
    with_fakes: bool,
    mut dropout: Option<&mut RngStream>,
) -> StageResult<GenPass> {
    let [(dis_sim, b_sim), (dis_real, b_real)] = dis;
    if c_sim.is_empty() || c_real.is_empty() {
        return Err((Stage::MlSim, ModelError::InvalidCondition("empty batch".into())));
    }
    let (z_sim, ld_sim) = model.encode_graph(g, flow, x_sim, c_sim).map_err(at(Stage::MlSim))?;
    let ml_sim = ml_loss(g, z_sim, ld_sim).map_err(at(Stage::MlSim))?;
    let (z_real, ld_real) = model.encode_graph(g, flow, x_real, c_real).map_err(at(Stage::MlReal))?;
    let ml_real = ml_loss(g, z_real, ld_real).map_err(at(Stage::MlReal))?;

    let w = |v: f64| T::lit(v);
    let mut terms = vec![
        g.scale(ml_real, w(weights.ml_real)).map_err(at(Stage::MlReal))?,
        g.scale(ml_sim, w(weights.ml_sim)).map_err(at(Stage::MlSim))?,
    ];
    let (mut gen_real, mut gen_sim, mut fake_real, mut fake_sim) = (None, None, None, None);
    if weights.adversarial() || with_fakes {
        let to_real: Vec<Condition> = c_sim.iter().map(|c| c.with_domain(Domain::Real)).collect();
        let fr = model.decode_graph(g, flow, z_sim, &to_real).map_err(at(Stage::GenReal))?;
        let s = dis_real
            .forward(g, b_real, fr, dropout.as_deref_mut())
            .map_err(at(Stage::GenReal))?;
        let l = gen_loss(g, s).map_err(at(Stage::GenReal))?;
        terms.push(g.scale(l, w(weights.gen_real)).map_err(at(Stage::GenReal))?);
        gen_real = Some(l);
        fake_real = Some(fr);

        let to_sim: Vec<Condition> = c_real.iter().map(|c| c.with_domain(Domain::Sim)).collect();
        let fs = model.decode_graph(g, flow, z_real, &to_sim).map_err(at(Stage::GenSim))?;
        let s = dis_sim
            .forward(g, b_sim, fs, dropout.as_deref_mut())
            .map_err(at(Stage::GenSim))?;
        let l = gen_loss(g, s).map_err(at(Stage::GenSim))?;
        terms.push(g.scale(l, w(weights.gen_sim)).map_err(at(Stage::GenSim))?);
        gen_sim = Some(l);
        fake_sim = Some(fs);
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t).map_err(at(Stage::GenSim))?;
    }
    Ok(GenPass {
        ml_sim,
        ml_real,
        gen_real,
        gen_sim,
        total,
        fake_real,
        fake_sim,
    })
}

pub struct DisPass {
    pub dis_real: Var,
    pub dis_sim: Var,
    pub total: Var,
}

/// Records `Dis_real` and `Dis_sim` least-squares losses. Fakes are expected to
/// be detached (constants) so only discriminator parameters receive gradients.
#[allow(clippy::too_many_arguments)]
pub fn discriminator_pass<T: Scalar>(
    g: &mut Graph<T>,
    dis: [(&Discriminator<T>, &Bound); 2],
    x_sim: Var,
    x_real: Var,
    fake_sim: Var,
    fake_real: Var,
    mut dropout: Option<&mut RngStream>,
) -> StageResult<DisPass> {
    let [(dis_sim, b_sim), (dis_real, b_real)] = dis;
    let r = dis_real.forward(g, b_real, x_real, dropout.as_deref_mut()).map_err(at(Stage::DisReal))?;
    let f = dis_real.forward(g, b_real, fake_real, dropout.as_deref_mut()).map_err(at(Stage::DisReal))?;
    let dis_real_loss = dis_loss(g, r, f).map_err(at(Stage::DisReal))?;
    let r = dis_sim.forward(g, b_sim, x_sim, dropout.as_deref_mut()).map_err(at(Stage::DisSim))?;
    let f = dis_sim.forward(g, b_sim, fake_sim, dropout.as_deref_mut()).map_err(at(Stage::DisSim))?;
    let dis_sim_loss = dis_loss(g, r, f).map_err(at(Stage::DisSim))?;
    let total = g.add(dis_real_loss, dis_sim_loss).map_err(at(Stage::DisSim))?;
    Ok(DisPass {
        dis_real: dis_real_loss,
        dis_sim: dis_sim_loss,
        total,
    })
}

/// Eval-mode `(L_gen_total, L_dis_total)` for one pair of batches.
pub fn total_losses<T: Scalar>(
    x_sim: &Tensor<T>,
    c_sim: &[Condition],
    x_real: &Tensor<T>,
    c_real: &[Condition],
    model: &FlowModel<T>,
    dis_sim: &Discriminator<T>,
    dis_real: &Discriminator<T>,
    weights: &LossWeights,
) -> std::result::Result<(T, T), ModelError> {
    let mut g = Graph::new();
    let fb = model.params().bind(&mut g, false);
    let bs = dis_sim.params().bind(&mut g, false);
    let br = dis_real.params().bind(&mut g, false);
    let xs = g.constant(x_sim.clone());
    let xr = g.constant(x_real.clone());
    let gp = generator_pass(&mut g, model, &fb, [(dis_sim, &bs), (dis_real, &br)], xs, c_sim, xr, c_real, weights, true, None)
        .map_err(|(_, e)| e)?;
    let gen_total = g.value(gp.total).item();
    let (fs, fr) = (gp.fake_sim.unwrap(), gp.fake_real.unwrap());
    let fs = g.constant(g.value(fs).clone());
    let fr = g.constant(g.value(fr).clone());
    let dp = discriminator_pass(&mut g, [(dis_sim, &bs), (dis_real, &br)], xs, xr, fs, fr, None).map_err(|(_, e)| e)?;
    Ok((gen_total, g.value(dp.total).item()))
}
