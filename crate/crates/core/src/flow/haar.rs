//! Orthonormal Haar downsampling. Rows are laid out position-major with
//! channels innermost; outputs stack sub-bands on the channel axis.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Result, TensorError};
use crate::graph::LinearOperator;
use crate::scalar::Scalar;

/// 1-D Haar on a `(length, channels)` row; output is `(length / 2, 2 * channels)`
/// with averages in the first `channels` slots and differences in the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Haar1d {
    length: usize,
    channels: usize,
}

impl Haar1d {
    pub fn new(length: usize, channels: usize) -> Result<Self> {
        if length == 0 || length % 2 != 0 || channels == 0 {
            return Err(TensorError::InvalidArgument {
                op: "haar_1d",
                msg: format!(
                    "sequence length {length} must be even and positive; pad spectra when building the dataset"
                ),
            });
        }
        Ok(Self { length, channels })
    }

    pub fn output_shape(&self) -> (usize, usize) {
        (self.length / 2, 2 * self.channels)
    }
}

impl<T: Scalar> LinearOperator<T> for Haar1d {
    fn dim(&self) -> usize {
        self.length * self.channels
    }

    fn apply(&self, x: &[T], out: &mut [T]) {
        let c = self.channels;
        let r = T::lit(FRAC_1_SQRT_2);
        for q in 0..self.length / 2 {
            for ch in 0..c {
                let a = x[2 * q * c + ch];
                let b = x[(2 * q + 1) * c + ch];
                out[q * 2 * c + ch] = (a + b) * r;
                out[q * 2 * c + c + ch] = (a - b) * r;
            }
        }
    }

    fn apply_adjoint(&self, y: &[T], out: &mut [T]) {
        let c = self.channels;
        let r = T::lit(FRAC_1_SQRT_2);
        for q in 0..self.length / 2 {
            for ch in 0..c {
                let avg = y[q * 2 * c + ch];
                let diff = y[q * 2 * c + c + ch];
                out[2 * q * c + ch] = (avg + diff) * r;
                out[(2 * q + 1) * c + ch] = (avg - diff) * r;
            }
        }
    }
}

/// Separable 2-D Haar on an `(height, width, channels)` row; output is
/// `(height / 2, width / 2, 4 * channels)` with sub-bands ordered LL, LH, HL, HH.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Haar2d {
    height: usize,
    width: usize,
    channels: usize,
}

impl Haar2d {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        if height == 0 || width == 0 || height % 2 != 0 || width % 2 != 0 || channels == 0 {
            return Err(TensorError::InvalidArgument {
                op: "haar_2d",
                msg: format!("grid {height}x{width} must have even, positive sides; pad images when building the dataset"),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
        })
    }

    pub fn output_shape(&self) -> (usize, usize, usize) {
        (self.height / 2, self.width / 2, 4 * self.channels)
    }

    #[inline]
    fn at(&self, i: usize, j: usize, ch: usize) -> usize {
        (i * self.width + j) * self.channels + ch
    }
}

impl<T: Scalar> LinearOperator<T> for Haar2d {
    fn dim(&self) -> usize {
        self.height * self.width * self.channels
    }

    fn apply(&self, x: &[T], out: &mut [T]) {
        let c = self.channels;
        let half = T::lit(0.5);
        let w2 = self.width / 2;
        for p in 0..self.height / 2 {
            for q in 0..w2 {
                let base = (p * w2 + q) * 4 * c;
                for ch in 0..c {
                    let a = x[self.at(2 * p, 2 * q, ch)];
                    let b = x[self.at(2 * p, 2 * q + 1, ch)];
                    let cc = x[self.at(2 * p + 1, 2 * q, ch)];
                    let d = x[self.at(2 * p + 1, 2 * q + 1, ch)];
                    out[base + ch] = (a + b + cc + d) * half;
                    out[base + c + ch] = (a - b + cc - d) * half;
                    out[base + 2 * c + ch] = (a + b - cc - d) * half;
                    out[base + 3 * c + ch] = (a - b - cc + d) * half;
                }
            }
        }
    }

    fn apply_adjoint(&self, y: &[T], out: &mut [T]) {
        let c = self.channels;
        let half = T::lit(0.5);
        let w2 = self.width / 2;
        for p in 0..self.height / 2 {
            for q in 0..w2 {
                let base = (p * w2 + q) * 4 * c;
                for ch in 0..c {
                    let ll = y[base + ch];
                    let lh = y[base + c + ch];
                    let hl = y[base + 2 * c + ch];
                    let hh = y[base + 3 * c + ch];
                    out[self.at(2 * p, 2 * q, ch)] = (ll + lh + hl + hh) * half;
                    out[self.at(2 * p, 2 * q + 1, ch)] = (ll - lh + hl - hh) * half;
                    out[self.at(2 * p + 1, 2 * q, ch)] = (ll + lh - hl - hh) * half;
                    out[self.at(2 * p + 1, 2 * q + 1, ch)] = (ll - lh - hl + hh) * half;
                }
            }
        }
    }
}

fn run<T: Scalar>(op: &dyn LinearOperator<T>, x: &[T], adjoint: bool) -> Result<Vec<T>> {
    if x.len() != op.dim() {
        return Err(TensorError::ShapeMismatch {
            op: "haar",
            lhs: vec![x.len()],
            rhs: vec![op.dim()],
        });
    }
    let mut out = vec![T::zero(); x.len()];
    if adjoint {
        op.apply_adjoint(x, &mut out);
    } else {
        op.apply(x, &mut out);
    }
    Ok(out)
}

pub fn haar_forward_1d<T: Scalar>(x: &[T], length: usize, channels: usize) -> Result<Vec<T>> {
    run(&Haar1d::new(length, channels)?, x, false)
}

pub fn haar_inverse_1d<T: Scalar>(y: &[T], length: usize, channels: usize) -> Result<Vec<T>> {
    run(&Haar1d::new(length, channels)?, y, true)
}

pub fn haar_forward_2d<T: Scalar>(x: &[T], height: usize, width: usize, channels: usize) -> Result<Vec<T>> {
    run(&Haar2d::new(height, width, channels)?, x, false)
}

pub fn haar_inverse_2d<T: Scalar>(y: &[T], height: usize, width: usize, channels: usize) -> Result<Vec<T>> {
    run(&Haar2d::new(height, width, channels)?, y, true)
}
