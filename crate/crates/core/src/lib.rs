//! Conditional invertible networks for unpaired domain transfer.
//!
//! The math is generic over [`Scalar`] (`f32` or `f64`); the `*64` aliases
//! below are what the pipeline uses.

pub mod checkpoint;
pub mod condition;
mod error;
pub mod flow;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod objectives;
pub mod params;
pub mod rng;
mod scalar;
pub mod spec;
pub mod tensor;

pub use condition::{sample_latent, sample_proxy_label, Condition, Domain, LabelSpace, TissueLabel};
pub use error::{ModelError, Result, TensorError};
pub use gradcheck::{grad_check, grad_check_many};
pub use graph::{Graph, LinearOperator, Var};
pub use model::FlowModel;
pub use rng::RngStream;
pub use scalar::Scalar;
pub use spec::{ConditionSelector, InputShape, ModelSpec, TissueEncoding};
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Graph64 = Graph<f64>;
pub type FlowModel64 = FlowModel<f64>;
pub type FlowModel32 = FlowModel<f32>;
pub type Discriminator64 = objectives::Discriminator<f64>;
pub type Trainer64 = objectives::Trainer<f64>;

/// Serializes with sorted object keys and shortest round-trip float formatting,
/// so equal values always produce equal bytes.
pub fn canonical_json<S: serde::Serialize>(value: &S) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    serde_json::to_string(&v).expect("json value serializes")
}
