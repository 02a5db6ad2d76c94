//! Model configuration.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Layout of one input sample. Rows are stored position-major, channels innermost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputShape {
    Sequence { length: usize, channels: usize },
    Grid { height: usize, width: usize, channels: usize },
}

impl InputShape {
    pub fn dim(&self) -> usize {
        match *self {
            InputShape::Sequence { length, channels } => length * channels,
            InputShape::Grid { height, width, channels } => height * width * channels,
        }
    }

    /// Shape after `k` Haar downsampling steps.
    pub fn downsampled(&self, k: usize) -> InputShape {
        match *self {
            InputShape::Sequence { length, channels } => InputShape::Sequence {
                length: length >> k,
                channels: channels << k,
            },
            InputShape::Grid { height, width, channels } => InputShape::Grid {
                height: height >> k,
                width: width >> k,
                channels: channels << (2 * k),
            },
        }
    }

    /// Number of spatial positions (sequence length or grid cells).
    pub fn positions(&self) -> usize {
        match *self {
            InputShape::Sequence { length, .. } => length,
            InputShape::Grid { height, width, .. } => height * width,
        }
    }
}

/// Which parts of the condition a coupling block sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionSelector {
    /// Domain and tissue label.
    #[serde(rename = "DY")]
    DomainTissue,
    /// Domain label only.
    #[serde(rename = "D")]
    Domain,
    /// Unconditioned.
    #[serde(rename = "None")]
    Unconditioned,
}

/// How tissue labels are presented to the subnets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TissueEncoding {
    /// One class per sample, one-hot encoded.
    OneHot,
    /// One class per grid position, majority-pooled at each scale.
    Map,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_shape: InputShape,
    pub n_scales: usize,
    pub blocks_per_scale: Vec<usize>,
    /// One selector per coupling block, in execution order across scales.
    pub condition_per_block: Vec<ConditionSelector>,
    pub tissue_classes: usize,
    pub tissue_encoding: TissueEncoding,
    pub subnet_hidden_layers: usize,
    pub subnet_width: usize,
    pub clamp_alpha: f64,
}

fn repeat(sel: ConditionSelector, n: usize) -> impl Iterator<Item = ConditionSelector> {
    std::iter::repeat_n(sel, n)
}

impl ModelSpec {
    /// Desk-scale spectral model: 64-point spectra, one scale of 8 blocks,
    /// the first 6 conditioned on domain and tissue, the last 2 unconditioned.
    pub fn spectral(length: usize, tissue_classes: usize) -> Self {
        Self {
            input_shape: InputShape::Sequence { length, channels: 1 },
            n_scales: 1,
            blocks_per_scale: vec![8],
            condition_per_block: repeat(ConditionSelector::DomainTissue, 6)
                .chain(repeat(ConditionSelector::Unconditioned, 2))
                .collect(),
            tissue_classes,
            tissue_encoding: TissueEncoding::OneHot,
            subnet_hidden_layers: 2,
            subnet_width: 128,
            clamp_alpha: 1.0,
        }
    }

    /// Desk-scale image model: 16x16x1 grid, three scales of [2, 2, 1] blocks,
    /// tissue maps conditioning the first scale only.
    pub fn image(tissue_classes: usize) -> Self {
        Self {
            input_shape: InputShape::Grid { height: 16, width: 16, channels: 1 },
            n_scales: 3,
            blocks_per_scale: vec![2, 2, 1],
            condition_per_block: repeat(ConditionSelector::DomainTissue, 2)
                .chain(repeat(ConditionSelector::Domain, 3))
                .collect(),
            tissue_classes,
            tissue_encoding: TissueEncoding::Map,
            subnet_hidden_layers: 2,
            subnet_width: 64,
            clamp_alpha: 1.0,
        }
    }

    /// Full-size pixel-spectrum configuration: 40 blocks, 30 conditioned on
    /// domain and tissue followed by 10 unconditioned, 512 hidden units.
    pub fn full_spectral(length: usize, tissue_classes: usize) -> Self {
        Self {
            input_shape: InputShape::Sequence { length, channels: 1 },
            n_scales: 1,
            blocks_per_scale: vec![40],
            condition_per_block: repeat(ConditionSelector::DomainTissue, 30)
                .chain(repeat(ConditionSelector::Unconditioned, 10))
                .collect(),
            tissue_classes,
            tissue_encoding: TissueEncoding::OneHot,
            subnet_hidden_layers: 2,
            subnet_width: 512,
            clamp_alpha: 1.0,
        }
    }

    /// Full-size image configuration: 5 scales of [4, 2, 1, 1, 2] blocks,
    /// conditions DY on the first scale and D on the rest.
    pub fn full_image(height: usize, width: usize, channels: usize, tissue_classes: usize) -> Self {
        let blocks = vec![4, 2, 1, 1, 2];
        let per_scale = [
            ConditionSelector::DomainTissue,
            ConditionSelector::Domain,
            ConditionSelector::Domain,
            ConditionSelector::Domain,
            ConditionSelector::Domain,
        ];
        let condition_per_block = blocks
            .iter()
            .zip(per_scale)
            .flat_map(|(&n, sel)| repeat(sel, n))
            .collect();
        Self {
            input_shape: InputShape::Grid { height, width, channels },
            n_scales: 5,
            blocks_per_scale: blocks,
            condition_per_block,
            tissue_classes,
            tissue_encoding: TissueEncoding::Map,
            subnet_hidden_layers: 3,
            subnet_width: 256,
            clamp_alpha: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.input_shape.dim()
    }

    pub fn total_blocks(&self) -> usize {
        self.blocks_per_scale.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidSpec(m));
        if self.n_scales == 0 {
            return bad("at least one scale is required".into());
        }
        if self.blocks_per_scale.len() != self.n_scales {
            return bad(format!(
                "blocks_per_scale lists {} scales but n_scales is {}",
                self.blocks_per_scale.len(),
                self.n_scales
            ));
        }
        if self.condition_per_block.len() != self.total_blocks() {
            return bad(format!(
                "{} condition selectors for {} blocks",
                self.condition_per_block.len(),
                self.total_blocks()
            ));
        }
        if self.tissue_classes == 0 {
            return bad("tissue_classes must be at least 1".into());
        }
        if !(self.clamp_alpha > 0.0 && self.clamp_alpha.is_finite()) {
            return bad("clamp_alpha must be positive".into());
        }
        if self.subnet_width == 0 {
            return bad("subnet_width must be positive".into());
        }
        if self.dim() < 2 {
            return bad("coupling blocks need at least 2 input features".into());
        }
        let factor = 1usize << (self.n_scales - 1);
        match self.input_shape {
            InputShape::Sequence { length, channels } => {
                if channels == 0 || length == 0 || length % factor != 0 {
                    return bad(format!(
                        "sequence length {length} must be divisible by {factor} for {} scales; pad to {}",
                        self.n_scales,
                        length.div_ceil(factor) * factor
                    ));
                }
                if self.tissue_encoding == TissueEncoding::Map {
                    return bad("tissue maps require a grid input".into());
                }
            }
            InputShape::Grid { height, width, channels } => {
                if channels == 0 || height == 0 || width == 0 || height % factor != 0 || width % factor != 0 {
                    return bad(format!(
                        "grid {height}x{width} must have sides divisible by {factor} for {} scales; pad to {}x{}",
                        self.n_scales,
                        height.div_ceil(factor) * factor,
                        width.div_ceil(factor) * factor
                    ));
                }
            }
        }
        Ok(())
    }

    /// Width of the encoded condition a block with `selector` sees at `scale`.
    pub fn cond_dim(&self, scale: usize, selector: ConditionSelector) -> usize {
        let tissue = match self.tissue_encoding {
            TissueEncoding::OneHot => self.tissue_classes,
            TissueEncoding::Map => self.tissue_classes * self.input_shape.downsampled(scale).positions(),
        };
        match selector {
            ConditionSelector::Unconditioned => 0,
            ConditionSelector::Domain => 2,
            ConditionSelector::DomainTissue => 2 + tissue,
        }
    }

    pub fn to_canonical_json(&self) -> String {
        crate::canonical_json(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_spectral_layout() {
        let s = ModelSpec::full_spectral(64, 10);
        s.validate().unwrap();
        assert_eq!(s.total_blocks(), 40);
        assert!(s.condition_per_block[..30].iter().all(|&c| c == ConditionSelector::DomainTissue));
        assert!(s.condition_per_block[30..].iter().all(|&c| c == ConditionSelector::Unconditioned));
        assert_eq!(s.subnet_width, 512);
    }

    #[test]
    fn full_image_layout() {
        let s = ModelSpec::full_image(64, 64, 16, 5);
        s.validate().unwrap();
        assert_eq!(s.n_scales, 5);
        assert_eq!(s.blocks_per_scale, vec![4, 2, 1, 1, 2]);
        assert!(s.condition_per_block[..4].iter().all(|&c| c == ConditionSelector::DomainTissue));
        assert!(s.condition_per_block[4..].iter().all(|&c| c == ConditionSelector::Domain));
    }

    #[test]
    fn indivisible_length_names_padding() {
        let mut s = ModelSpec::spectral(30, 2);
        s.n_scales = 3;
        s.blocks_per_scale = vec![2, 2, 4];
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("pad to 32"), "{err}");
    }

    #[test]
    fn selector_count_must_cover_blocks() {
        let mut s = ModelSpec::spectral(64, 2);
        s.condition_per_block.pop();
        assert!(s.validate().is_err());
    }

    #[test]
    fn json_round_trip_rejects_unknown_keys() {
        let s = ModelSpec::image(3);
        let json = s.to_canonical_json();
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ModelSpec>(v).is_err());
    }
}
