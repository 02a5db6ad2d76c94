//! Analytic layered reflectance model.
//!
//! Each layer attenuates the returning light by a factor
//! `exp(-c · (1 - exp(-2 μ_eff d)))` with `c = 7 sqrt(μa / (3 (μa + μs')))`
//! and `μ_eff = sqrt(3 μa (μa + μs'))`, a diffusion-style albedo term
//! saturating with optical thickness.

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::extinction::blood_absorption;

/// Background absorption of bloodless tissue, cm⁻¹.
pub const BASELINE_MUA: f64 = 0.1;
pub const MIN_REFLECTANCE: f64 = 1e-6;

/// Inclusive sampling interval.
pub type Range = [f64; 2];

/// Admissible parameter intervals of one tissue layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRanges {
    /// Blood volume fraction.
    pub v_hb: Range,
    /// Blood oxygenation fraction.
    pub so2: Range,
    /// Reduced scattering at 500 nm, cm⁻¹.
    pub a_mie: Range,
    pub b_mie: Range,
    /// Anisotropy; accepted but unused by the analytic kernel.
    pub g: Range,
    /// Refractive index; accepted but unused by the analytic kernel.
    pub n: Range,
    /// Thickness, cm.
    pub d: Range,
}

impl LayerRanges {
    /// Full admissible ranges.
    pub const FULL: LayerRanges = LayerRanges {
        v_hb: [0.0, 0.30],
        so2: [0.0, 1.0],
        a_mie: [5.0, 50.0],
        b_mie: [0.3, 3.0],
        g: [0.80, 0.95],
        n: [1.33, 1.54],
        d: [0.002, 0.2],
    };

    pub fn fields(&self) -> [(&'static str, Range); 7] {
        [
            ("v_hb", self.v_hb),
            ("so2", self.so2),
            ("a_mie", self.a_mie),
            ("b_mie", self.b_mie),
            ("g", self.g),
            ("n", self.n),
            ("d", self.d),
        ]
    }

    pub fn field_mut(&mut self, name: &str) -> Option<&mut Range> {
        Some(match name {
            "v_hb" => &mut self.v_hb,
            "so2" => &mut self.so2,
            "a_mie" => &mut self.a_mie,
            "b_mie" => &mut self.b_mie,
            "g" => &mut self.g,
            "n" => &mut self.n,
            "d" => &mut self.d,
            _ => return None,
        })
    }

    /// Errors unless every interval is ordered and inside [`FULL`](Self::FULL).
    pub fn validate(&self, layer: usize) -> Result<()> {
        for ((name, [lo, hi]), (_, [flo, fhi])) in self.fields().into_iter().zip(Self::FULL.fields()) {
            for v in [lo, hi] {
                if !(flo..=fhi).contains(&v) {
                    return Err(DataError::OutOfRange {
                        field: format!("layer {layer} {name}"),
                        value: v,
                        lo: flo,
                        hi: fhi,
                    });
                }
            }
            if lo > hi {
                return Err(DataError::Config(format!("layer {layer} {name}: empty range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub v_hb: f64,
    pub so2: f64,
    pub a_mie: f64,
    pub b_mie: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueParams {
    pub layers: Vec<LayerParams>,
    pub class: usize,
}

impl TissueParams {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.len() > 3 {
            return Err(DataError::Config(format!("1 to 3 layers required, got {}", self.layers.len())));
        }
        let full = LayerRanges::FULL;
        for (i, l) in self.layers.iter().enumerate() {
            for (name, v, [lo, hi]) in [
                ("v_hb", l.v_hb, full.v_hb),
                ("so2", l.so2, full.so2),
                ("a_mie", l.a_mie, full.a_mie),
                ("b_mie", l.b_mie, full.b_mie),
                ("d", l.d, full.d),
            ] {
                if !(lo..=hi).contains(&v) {
                    return Err(DataError::OutOfRange {
                        field: format!("layer {i} {name}"),
                        value: v,
                        lo,
                        hi,
                    });
                }
            }
        }
        Ok(())
    }
}

fn layer_exponent(l: &LayerParams, nm: f64) -> f64 {
    let (o, d) = blood_absorption(nm);
    let mua = l.v_hb * (l.so2 * o + (1.0 - l.so2) * d) + BASELINE_MUA;
    let musp = l.a_mie * (nm / 500.0).powf(-l.b_mie);
    let c = 7.0 * (mua / (3.0 * (mua + musp))).sqrt();
    let mu_eff = (3.0 * mua * (mua + musp)).sqrt();
    c * (1.0 - (-2.0 * mu_eff * l.d).exp())
}

/// Reflectance in `[1e-6, 1]` at each wavelength (nm).
pub fn simulate_spectrum(p: &TissueParams, wavelengths: &[f64]) -> Result<Vec<f64>> {
    p.validate()?;
    Ok(wavelengths
        .iter()
        .map(|&nm| {
            let total: f64 = p.layers.iter().map(|l| layer_exponent(l, nm)).sum();
            (-total).exp().clamp(MIN_REFLECTANCE, 1.0)
        })
        .collect())
}
