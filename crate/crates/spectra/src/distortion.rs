//! Hidden simulated-to-"real" domain shift.

use flowbridge_core::RngStream;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::simulate::MIN_REFLECTANCE;

/// Gain polynomial is evaluated in `u = (λ - λ_min) / (λ_max - λ_min) ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionConfig {
    /// Coefficients of `g(u) = Σ c_k u^k`.
    pub gain_poly: Vec<f64>,
    /// Gaussian kernel width in grid points; 0 disables smoothing.
    pub smoothing: f64,
    pub noise_sigma: f64,
    pub offset: f64,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        Self::preset(1).expect("built-in preset")
    }
}

impl DistortionConfig {
    pub fn identity() -> Self {
        Self {
            gain_poly: vec![1.0],
            smoothing: 0.0,
            noise_sigma: 0.0,
            offset: 0.0,
        }
    }

    /// Fixed distortions addressed by id: 0 identity, 1 moderate, 2 strong.
    pub fn preset(id: u32) -> Result<Self> {
        Ok(match id {
            0 => Self::identity(),
            1 => Self {
                gain_poly: vec![0.6, 1.0, -0.5],
                smoothing: 2.0,
                noise_sigma: 0.005,
                offset: 0.05,
            },
            2 => Self {
                gain_poly: vec![0.5, 1.2, -0.6],
                smoothing: 3.0,
                noise_sigma: 0.01,
                offset: 0.08,
            },
            _ => return Err(DataError::Config(format!("unknown distortion id {id}"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.gain_poly.iter().chain([&self.smoothing, &self.noise_sigma, &self.offset]).all(|v| v.is_finite());
        if self.gain_poly.is_empty() || !finite || self.smoothing < 0.0 || self.noise_sigma < 0.0 {
            return Err(DataError::Config(format!("invalid distortion {self:?}")));
        }
        Ok(())
    }

    pub fn gain(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let u = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                self.gain_poly.iter().rev().fold(0.0, |acc, c| acc * u + c)
            })
            .collect()
    }
}

fn gaussian_smooth(x: &[f64], sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-r..=r).map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp()).collect();
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for k in -r..=r {
                let j = i + k;
                if (0..n).contains(&j) {
                    let wk = w[(k + r) as usize];
                    num += wk * x[j as usize];
                    den += wk;
                }
            }
            num / den
        })
        .collect()
}

/// Applies gain, smoothing, noise and offset in that order, then clips into `(0, 1]`.
pub fn make_pseudo_real(s: &[f64], cfg: &DistortionConfig, rng: &mut RngStream) -> Vec<f64> {
    let gain = cfg.gain(s.len());
    let mut y: Vec<f64> = s.iter().zip(&gain).map(|(v, g)| v * g).collect();
    if cfg.smoothing > 0.0 {
        y = gaussian_smooth(&y, cfg.smoothing);
    }
    for v in &mut y {
        if cfg.noise_sigma > 0.0 {
            *v += cfg.noise_sigma * rng.normal();
        }
        *v = (*v + cfg.offset).clamp(MIN_REFLECTANCE, 1.0);
    }
    y
}
