use std::sync::Arc;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// Fixed channel shuffle drawn once at build time. Log-determinant is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationLayer {
    perm: Arc<[usize]>,
    inverse: Arc<[usize]>,
}

impl PermutationLayer {
    pub fn random(dim: usize, rng: &mut RngStream) -> Self {
        Self::from_perm(rng.permutation(dim))
    }

    pub fn from_perm(perm: Vec<usize>) -> Self {
        let mut inverse = vec![0; perm.len()];
        for (j, &i) in perm.iter().enumerate() {
            inverse[i] = j;
        }
        Self {
            perm: perm.into(),
            inverse: inverse.into(),
        }
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn inverse_perm(&self) -> &[usize] {
        &self.inverse
    }

    /// `out[j] = x[perm[j]]`
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        g.gather_last(x, self.perm.clone())
    }

    pub fn inverse<T: Scalar>(&self, g: &mut Graph<T>, y: Var) -> Result<Var> {
        g.gather_last(y, self.inverse.clone())
    }
}
