//! Invertible layers with exact inverses and analytic log-determinants.

mod coupling;
mod haar;
mod permutation;

pub use coupling::{clamp_scale, clamp_scale_value, CouplingBlock};
pub use haar::{haar_forward_1d, haar_forward_2d, haar_inverse_1d, haar_inverse_2d, Haar1d, Haar2d};
pub use permutation::PermutationLayer;
