use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condition::{sample_proxy_label, Condition, Domain, LabelSpace, TissueLabel};
use crate::error::{ModelError, TensorError};
use crate::graph::Graph;
use crate::model::FlowModel;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::adam::{AdamConfig, AdamState};
use super::discriminator::{Discriminator, DiscriminatorConfig};
use super::losses::{discriminator_pass, generator_pass, LossWeights, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub gen_optimizer: AdamConfig,
    pub dis_optimizer: AdamConfig,
    pub weights: LossWeights,
    pub discriminator: DiscriminatorConfig,
    pub seed: u64,
    /// Epochs between periodic checkpoints; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 256,
            gen_optimizer: AdamConfig::default(),
            dis_optimizer: AdamConfig::default(),
            weights: LossWeights::default(),
            discriminator: DiscriminatorConfig::default(),
            seed: 0,
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let w = &self.weights;
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if [w.ml_real, w.ml_sim, w.gen_real, w.gen_sim].iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Config("loss weights must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.discriminator.dropout) {
            return Err(TrainError::Config("discriminator dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid training data: {0}")]
    Data(String),
    #[error("non-finite {term} at epoch {epoch}, step {step}: {source}")]
    NonFinite {
        term: &'static str,
        epoch: usize,
        step: usize,
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(e.into())
    }
}

/// Training inputs. Real-domain samples are unlabeled; each step draws proxy
/// tissue labels for them.
pub struct TrainData<'a, T> {
    pub sim: &'a Tensor<T>,
    pub sim_tissue: &'a [TissueLabel],
    pub real: &'a Tensor<T>,
}

impl<T: Scalar> TrainData<'_, T> {
    fn validate(&self, dim: usize) -> Result<(), TrainError> {
        if self.sim.ndim() != 2 || self.real.ndim() != 2 {
            return Err(TrainError::Data("datasets must be 2-D".into()));
        }
        if self.sim.cols() != self.real.cols() {
            return Err(TrainError::Data(format!(
                "simulated rows have {} features, real rows have {}",
                self.sim.cols(),
                self.real.cols()
            )));
        }
        if self.sim.cols() != dim {
            return Err(ModelError::InputWidth { expected: dim, got: self.sim.cols() }.into());
        }
        if self.sim_tissue.len() != self.sim.rows() {
            return Err(TrainError::Data("one tissue label per simulated row is required".into()));
        }
        Ok(())
    }
}

/// Loss values of one generator/discriminator step pair. Adversarial entries
/// are `None` when adversarial training is disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub epoch: usize,
    pub step: usize,
    pub ml_sim: f64,
    pub ml_real: f64,
    pub gen_real: Option<f64>,
    pub gen_sim: Option<f64>,
    pub gen_total: f64,
    pub dis_real: Option<f64>,
    pub dis_sim: Option<f64>,
    pub dis_total: Option<f64>,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainStats {
    pub steps: Vec<StepStats>,
}

impl PartialEq for TrainStats {
    /// Equality over loss values only; wall-clock time is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.steps.len() == other.steps.len()
            && self.steps.iter().zip(&other.steps).all(|(a, b)| {
                StepStats { wall_clock_s: 0.0, ..a.clone() } == StepStats { wall_clock_s: 0.0, ..b.clone() }
            })
    }
}

impl TrainStats {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,step,ml_sim,ml_real,gen_real,gen_sim,gen_total,dis_real,dis_sim,dis_total,wall_clock_s\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10e}"));
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{:.10e},{:.10e},{},{},{:.10e},{},{},{},{:.3}\n",
                s.epoch,
                s.step,
                s.ml_sim,
                s.ml_real,
                opt(s.gen_real),
                opt(s.gen_sim),
                s.gen_total,
                opt(s.dis_real),
                opt(s.dis_sim),
                opt(s.dis_total),
                s.wall_clock_s
            ));
        }
        out
    }

    /// Mean of a per-step quantity over each epoch, in epoch order.
    pub fn epoch_means(&self, f: impl Fn(&StepStats) -> f64) -> Vec<f64> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for s in &self.steps {
            match out.last_mut() {
                Some((e, sum, n)) if *e == s.epoch => {
                    *sum += f(s);
                    *n += 1;
                }
                _ => out.push((s.epoch, f(s), 1)),
            }
        }
        out.into_iter().map(|(_, s, n)| s / n as f64).collect()
    }
}

/// Owns the flow, both discriminators and their optimizers; runs the
/// alternating schedule of one generator step then one discriminator step per
/// batch.
#[derive(Clone)]
pub struct Trainer<T> {
    pub model: FlowModel<T>,
    pub dis_sim: Discriminator<T>,
    pub dis_real: Discriminator<T>,
    pub gen_opt: AdamState<T>,
    pub dis_sim_opt: AdamState<T>,
    pub dis_real_opt: AdamState<T>,
    pub config: TrainConfig,
    /// Number of completed epochs.
    pub epoch: usize,
    started: Option<Instant>,
}

impl<T: Scalar> std::fmt::Debug for Trainer<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trainer")
            .field("model", &self.model)
            .field("epoch", &self.epoch)
            .field("config", &self.config)
            .finish()
    }
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: FlowModel<T>, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let root = RngStream::new(config.seed);
        let dim = model.dim();
        let dis_sim = Discriminator::new(dim, config.discriminator, &mut root.derive("dis-sim-init"));
        let dis_real = Discriminator::new(dim, config.discriminator, &mut root.derive("dis-real-init"));
        Ok(Self {
            gen_opt: AdamState::new(config.gen_optimizer, model.params())?,
            dis_sim_opt: AdamState::new(config.dis_optimizer, dis_sim.params())?,
            dis_real_opt: AdamState::new(config.dis_optimizer, dis_real.params())?,
            model,
            dis_sim,
            dis_real,
            config,
            epoch: 0,
            started: None,
        })
    }

    /// Runs epochs until `config.epochs` have completed, calling `on_epoch`
    /// after each one (e.g. to write checkpoints).
    pub fn run<E>(
        &mut self,
        data: &TrainData<'_, T>,
        stats: &mut TrainStats,
        mut on_epoch: impl FnMut(&Self) -> Result<(), E>,
    ) -> Result<(), E>
    where
        E: From<TrainError>,
    {
        data.validate(self.model.dim())?;
        while self.epoch < self.config.epochs {
            self.train_epoch(data, stats)?;
            on_epoch(self)?;
        }
        Ok(())
    }

    pub fn train_epoch(&mut self, data: &TrainData<'_, T>, stats: &mut TrainStats) -> Result<(), TrainError> {
        data.validate(self.model.dim())?;
        let started = *self.started.get_or_insert_with(Instant::now);
        let root = RngStream::new(self.config.seed);
        let epoch = self.epoch;
        let (n_sim, n_real) = (data.sim.rows(), data.real.rows());
        if n_sim == 0 || n_real == 0 {
            return Err(TrainError::Data("datasets must be nonempty".into()));
        }
        let bs = self.config.batch_size;
        let n_batches = (n_sim.min(n_real) / bs).max(1);
        let ord_sim = root.derive("shuffle-sim").derive_index(epoch as u64).permutation(n_sim);
        let ord_real = root.derive("shuffle-real").derive_index(epoch as u64).permutation(n_real);
        let space = LabelSpace::for_spec(self.model.spec());
        for step in 0..n_batches {
            let stream = |name: &str| root.derive(name).derive_index(epoch as u64).derive_index(step as u64);
            let is = &ord_sim[(step * bs).min(n_sim - 1)..((step + 1) * bs).min(n_sim)];
            let ir = &ord_real[(step * bs).min(n_real - 1)..((step + 1) * bs).min(n_real)];
            let x_sim = data.sim.select_rows(is);
            let x_real = data.real.select_rows(ir);
            let c_sim: Vec<Condition> = is
                .iter()
                .map(|&i| Condition::new(Domain::Sim, data.sim_tissue[i].clone()))
                .collect();
            let mut proxy = stream("proxy");
            let c_real = ir
                .iter()
                .map(|_| Ok(Condition::new(Domain::Real, sample_proxy_label(&mut proxy, &space)?)))
                .collect::<Result<Vec<_>, ModelError>>()?;
            let rec = self.step(epoch, step, &x_sim, &c_sim, &x_real, &c_real, &mut stream("dropout"))?;
            stats.steps.push(StepStats {
                wall_clock_s: started.elapsed().as_secs_f64(),
                ..rec
            });
        }
        self.epoch += 1;
        Ok(())
    }

    fn step(
        &mut self,
        epoch: usize,
        step: usize,
        x_sim: &Tensor<T>,
        c_sim: &[Condition],
        x_real: &Tensor<T>,
        c_real: &[Condition],
        dropout: &mut RngStream,
    ) -> Result<StepStats, TrainError> {
        let batch = Batch { x_sim, c_sim, x_real, c_real };
        let (mut rec, fakes) = self.generator_step(&batch, dropout).map_err(|e| e.at(epoch, step))?;
        rec.epoch = epoch;
        rec.step = step;
        if let Some(fakes) = fakes {
            let [dr, ds, dt] = self.discriminator_step(&batch, fakes, dropout).map_err(|e| e.at(epoch, step))?;
            rec.dis_real = Some(dr);
            rec.dis_sim = Some(ds);
            rec.dis_total = Some(dt);
        }
        Ok(rec)
    }

    /// One optimizer step on the flow parameters only. Returns the loss values
    /// and, when adversarial terms are active, the detached fakes
    /// `(T_{real→sim}(x_real), T_{sim→real}(x_sim))`.
    pub fn generator_step(
        &mut self,
        batch: &Batch<'_, T>,
        dropout: &mut RngStream,
    ) -> Result<(StepStats, Option<(Tensor<T>, Tensor<T>)>), TrainError> {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        let mut g = Graph::new();
        let fb = self.model.params().bind(&mut g, true);
        let bs = self.dis_sim.params().bind(&mut g, false);
        let br = self.dis_real.params().bind(&mut g, false);
        let xs = g.constant(batch.x_sim.clone());
        let xr = g.constant(batch.x_real.clone());
        let gp = generator_pass(
            &mut g,
            &self.model,
            &fb,
            [(&self.dis_sim, &bs), (&self.dis_real, &br)],
            xs,
            batch.c_sim,
            xr,
            batch.c_real,
            &self.config.weights,
            false,
            Some(dropout),
        )
        .map_err(staged)?;
        g.backward(gp.total).map_err(|e| staged((Stage::GenSim, e.into())))?;
        let grads = self.model.params().grads(&g, &fb);
        self.gen_opt.step(self.model.params_mut(), &grads)?;
        let rec = StepStats {
            epoch: self.epoch,
            step: 0,
            ml_sim: f(g.value(gp.ml_sim).item()),
            ml_real: f(g.value(gp.ml_real).item()),
            gen_real: gp.gen_real.map(|v| f(g.value(v).item())),
            gen_sim: gp.gen_sim.map(|v| f(g.value(v).item())),
            gen_total: f(g.value(gp.total).item()),
            dis_real: None,
            dis_sim: None,
            dis_total: None,
            wall_clock_s: 0.0,
        };
        let fakes = match (gp.fake_sim, gp.fake_real) {
            (Some(fs), Some(fr)) => Some((g.value(fs).clone(), g.value(fr).clone())),
            _ => None,
        };
        Ok((rec, fakes))
    }

    /// One optimizer step on both critics only, against detached fakes.
    /// Returns `[dis_real, dis_sim, dis_total]`.
    pub fn discriminator_step(
        &mut self,
        batch: &Batch<'_, T>,
        (fake_sim, fake_real): (Tensor<T>, Tensor<T>),
        dropout: &mut RngStream,
    ) -> Result<[f64; 3], TrainError> {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        let mut g = Graph::new();
        let bs = self.dis_sim.params().bind(&mut g, true);
        let br = self.dis_real.params().bind(&mut g, true);
        let xs = g.constant(batch.x_sim.clone());
        let xr = g.constant(batch.x_real.clone());
        let fs = g.constant(fake_sim);
        let fr = g.constant(fake_real);
        let dp = discriminator_pass(&mut g, [(&self.dis_sim, &bs), (&self.dis_real, &br)], xs, xr, fs, fr, Some(dropout))
            .map_err(staged)?;
        g.backward(dp.total).map_err(|e| staged((Stage::DisSim, e.into())))?;
        let gs = self.dis_sim.params().grads(&g, &bs);
        let gr = self.dis_real.params().grads(&g, &br);
        self.dis_sim_opt.step(self.dis_sim.params_mut(), &gs)?;
        self.dis_real_opt.step(self.dis_real.params_mut(), &gr)?;
        Ok([f(g.value(dp.dis_real).item()), f(g.value(dp.dis_sim).item()), f(g.value(dp.total).item())])
    }
}

/// One pair of simulated and real mini-batches with their conditions.
pub struct Batch<'a, T> {
    pub x_sim: &'a Tensor<T>,
    pub c_sim: &'a [Condition],
    pub x_real: &'a Tensor<T>,
    pub c_real: &'a [Condition],
}

fn staged((stage, source): (Stage, ModelError)) -> TrainError {
    match source {
        ModelError::Tensor(TensorError::NonFinite { .. }) => TrainError::NonFinite {
            term: stage.name(),
            epoch: 0,
            step: 0,
            source,
        },
        other => TrainError::Model(other),
    }
}

impl TrainError {
    fn at(self, epoch: usize, step: usize) -> Self {
        match self {
            TrainError::NonFinite { term, source, .. } => TrainError::NonFinite { term, epoch, step, source },
            other => other,
        }
    }
}
