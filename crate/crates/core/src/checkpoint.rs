//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//! `"CINN1"`, `u32` version, `u64` JSON length, canonical JSON metadata,
//! `u32` block count, then per block `u32` name length, name bytes,
//! `u8` dtype (0 = f64, 1 = f32), `u32` rank, `u64` dims, raw values,
//! and finally a `u64` checksum: the first eight bytes of the SHA-256 of
//! everything before it.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::ModelError;
use crate::model::FlowModel;
use crate::objectives::{AdamState, TrainConfig, TrainError, Trainer};
use crate::params::ParamStore;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::spec::ModelSpec;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"CINN1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint checksum mismatch (stored {stored:016x}, computed {computed:016x})")]
    Checksum { stored: u64, computed: u64 },
    #[error("checkpoint does not match model: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

type Result<T> = std::result::Result<T, CheckpointError>;

/// Storage precision of parameter blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    fn tag(self) -> u8 {
        match self {
            Precision::F64 => 0,
            Precision::F32 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub precision: Precision,
    pub shape: Vec<usize>,
    /// Values widened to f64; f32 blocks round-trip exactly.
    pub data: Vec<f64>,
}

impl Block {
    pub fn from_tensor<T: Scalar>(name: impl Into<String>, t: &Tensor<T>, precision: Precision) -> Self {
        Self {
            name: name.into(),
            precision,
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
        }
    }

    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        let data = self.data.iter().map(|&v| T::lit(v)).collect();
        Tensor::new(self.shape.clone(), data)
            .map_err(|e| CheckpointError::Format(format!("block {}: {e}", self.name)))
    }

    fn indices(&self) -> Result<Vec<usize>> {
        self.data
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 {
                    Ok(v as usize)
                } else {
                    Err(CheckpointError::Format(format!("block {} holds non-integer {v}", self.name)))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: Value,
    pub blocks: Vec<Block>,
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CheckpointError::Format("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Format("length overflow".into()))
    }
}

impl Checkpoint {
    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    fn require(&self, name: &str) -> Result<&Block> {
        self.block(name)
            .ok_or_else(|| CheckpointError::Mismatch(format!("missing block {name}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let json = crate::canonical_json(&self.meta);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(json.as_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            out.push(b.precision.tag());
            out.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
            for &d in &b.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &b.data {
                match b.precision {
                    Precision::F64 => v.write_le(&mut out),
                    Precision::F32 => (v as f32).write_le(&mut out),
                }
            }
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::Format("bad magic".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        let computed = checksum(body);
        if stored != computed {
            return Err(CheckpointError::Checksum { stored, computed });
        }
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Format(format!("unsupported version {version}")));
        }
        let n = r.len()?;
        let meta: Value = serde_json::from_slice(r.take(n)?)
            .map_err(|e| CheckpointError::Format(format!("metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| CheckpointError::Format("block name is not utf-8".into()))?;
            let precision = match r.u8()? {
                0 => Precision::F64,
                1 => Precision::F32,
                t => return Err(CheckpointError::Format(format!("block {name}: unknown dtype {t}"))),
            };
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| CheckpointError::Format(format!("block {name}: shape overflow")))?;
            let data = match precision {
                Precision::F64 => {
                    let raw = r.take(numel.checked_mul(8).unwrap_or(usize::MAX))?;
                    raw.chunks_exact(8).map(f64::read_le).collect()
                }
                Precision::F32 => {
                    let raw = r.take(numel.checked_mul(4).unwrap_or(usize::MAX))?;
                    raw.chunks_exact(4).map(|c| f32::read_le(c) as f64).collect()
                }
            };
            blocks.push(Block { name, precision, shape, data });
        }
        if r.pos != body.len() {
            return Err(CheckpointError::Format("trailing bytes before checksum".into()));
        }
        Ok(Self { meta, blocks })
    }

    /// Writes atomically via a temporary file in the same directory.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let v = self
            .meta
            .get("spec")
            .ok_or_else(|| CheckpointError::Format("metadata lacks a model spec".into()))?;
        serde_json::from_value(v.clone()).map_err(|e| CheckpointError::Format(format!("model spec: {e}")))
    }

    pub fn train_config(&self) -> Result<Option<TrainConfig>> {
        match self.meta.get("train_config") {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CheckpointError::Format(format!("training config: {e}"))),
        }
    }
}

fn push_params<T: Scalar>(blocks: &mut Vec<Block>, prefix: &str, p: &ParamStore<T>, precision: Precision) {
    for (name, t) in p.iter() {
        blocks.push(Block::from_tensor(format!("{prefix}.{name}"), t, precision));
    }
}

fn load_params<T: Scalar>(ck: &Checkpoint, prefix: &str, p: &mut ParamStore<T>) -> Result<()> {
    let names = p.names().to_vec();
    for (name, slot) in names.iter().zip(p.tensors_mut()) {
        let t = ck.require(&format!("{prefix}.{name}"))?.to_tensor::<T>()?;
        if t.shape() != slot.shape() {
            return Err(CheckpointError::Mismatch(format!(
                "{prefix}.{name} has shape {:?}, model expects {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    Ok(())
}

fn model_blocks<T: Scalar>(model: &FlowModel<T>, precision: Precision) -> Vec<Block> {
    let mut blocks = Vec::new();
    push_params(&mut blocks, "flow", model.params(), precision);
    for (i, p) in model.permutations().iter().enumerate() {
        blocks.push(Block {
            name: format!("flow.perm.{i}"),
            precision: Precision::F64,
            shape: vec![p.len()],
            data: p.iter().map(|&v| v as f64).collect(),
        });
    }
    let (shift, gain) = model.standardizer();
    blocks.push(Block::from_tensor("flow.standardizer.shift", shift, precision));
    blocks.push(Block::from_tensor("flow.standardizer.gain", gain, precision));
    blocks
}

fn restore_model<T: Scalar>(ck: &Checkpoint) -> Result<FlowModel<T>> {
    let spec = ck.spec()?;
    let mut model = FlowModel::build(spec, &RngStream::new(0))?;
    load_params(ck, "flow", model.params_mut())?;
    let n = model.permutations().len();
    let perms = (0..n)
        .map(|i| ck.require(&format!("flow.perm.{i}"))?.indices())
        .collect::<Result<Vec<_>>>()?;
    model.set_permutations(perms)?;
    let shift = ck.require("flow.standardizer.shift")?.to_tensor()?;
    let gain = ck.require("flow.standardizer.gain")?.to_tensor()?;
    model.set_standardizer(shift, gain)?;
    Ok(model)
}

pub fn model_checkpoint<T: Scalar>(model: &FlowModel<T>, precision: Precision) -> Checkpoint {
    Checkpoint {
        meta: json!({ "spec": model.spec(), "train_config": null }),
        blocks: model_blocks(model, precision),
    }
}

/// Rebuilds a flow from any checkpoint; trainer state, if present, is ignored.
pub fn model_from_checkpoint<T: Scalar>(ck: &Checkpoint) -> Result<FlowModel<T>> {
    restore_model(ck)
}

pub fn save_model<T: Scalar>(model: &FlowModel<T>, path: &Path, precision: Precision) -> Result<()> {
    model_checkpoint(model, precision).save(path)
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<FlowModel<T>> {
    model_from_checkpoint(&Checkpoint::load(path)?)
}

fn push_adam<T: Scalar>(blocks: &mut Vec<Block>, prefix: &str, s: &AdamState<T>) {
    let (m, v) = s.moments();
    for (i, t) in m.iter().enumerate() {
        blocks.push(Block::from_tensor(format!("{prefix}.m.{i}"), t, Precision::F64));
    }
    for (i, t) in v.iter().enumerate() {
        blocks.push(Block::from_tensor(format!("{prefix}.v.{i}"), t, Precision::F64));
    }
    blocks.push(Block {
        name: format!("{prefix}.step"),
        precision: Precision::F64,
        shape: vec![1],
        data: vec![s.step_count() as f64],
    });
}

fn load_adam<T: Scalar>(ck: &Checkpoint, prefix: &str, s: &mut AdamState<T>) -> Result<()> {
    let n = s.moments().0.len();
    let read = |kind: &str| {
        (0..n)
            .map(|i| ck.require(&format!("{prefix}.{kind}.{i}"))?.to_tensor::<T>())
            .collect::<Result<Vec<_>>>()
    };
    let (m, v) = (read("m")?, read("v")?);
    let step = ck.require(&format!("{prefix}.step"))?.indices()?;
    let step = *step
        .first()
        .ok_or_else(|| CheckpointError::Format(format!("{prefix}.step is empty")))?;
    s.restore(m, v, step as u64).map_err(|e| CheckpointError::Mismatch(e.to_string()))
}

/// Full training state in f64, sufficient to resume bit-identically.
pub fn trainer_checkpoint<T: Scalar>(trainer: &Trainer<T>) -> Checkpoint {
    let mut blocks = model_blocks(&trainer.model, Precision::F64);
    push_params(&mut blocks, "dis_sim", trainer.dis_sim.params(), Precision::F64);
    push_params(&mut blocks, "dis_real", trainer.dis_real.params(), Precision::F64);
    push_adam(&mut blocks, "adam.gen", &trainer.gen_opt);
    push_adam(&mut blocks, "adam.dis_sim", &trainer.dis_sim_opt);
    push_adam(&mut blocks, "adam.dis_real", &trainer.dis_real_opt);
    blocks.push(Block {
        name: "trainer.epoch".into(),
        precision: Precision::F64,
        shape: vec![1],
        data: vec![trainer.epoch as f64],
    });
    Checkpoint {
        meta: json!({ "spec": trainer.model.spec(), "train_config": trainer.config }),
        blocks,
    }
}

/// Restores a trainer. `config` overrides the stored training config (e.g. to
/// extend the epoch budget); the seed and network shapes must agree.
pub fn trainer_from_checkpoint<T: Scalar>(ck: &Checkpoint, config: Option<TrainConfig>) -> Result<Trainer<T>> {
    let stored = ck
        .train_config()?
        .ok_or_else(|| CheckpointError::Mismatch("checkpoint holds no trainer state".into()))?;
    let config = config.unwrap_or_else(|| stored.clone());
    if config.seed != stored.seed || config.discriminator != stored.discriminator {
        return Err(CheckpointError::Mismatch(
            "seed and discriminator settings must match the stored run".into(),
        ));
    }
    let model = restore_model::<T>(ck)?;
    let mut t = Trainer::new(model, config)?;
    load_params(ck, "dis_sim", t.dis_sim.params_mut())?;
    load_params(ck, "dis_real", t.dis_real.params_mut())?;
    load_adam(ck, "adam.gen", &mut t.gen_opt)?;
    load_adam(ck, "adam.dis_sim", &mut t.dis_sim_opt)?;
    load_adam(ck, "adam.dis_real", &mut t.dis_real_opt)?;
    t.epoch = ck.require("trainer.epoch")?.indices()?.first().copied().unwrap_or(0);
    Ok(t)
}
