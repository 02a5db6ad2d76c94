//! Seeded two-domain benchmark: labeled simulations, unlabeled pseudo-real
//! training spectra and a labeled pseudo-real test split.

use flowbridge_core::{RngStream, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetDomain, DatasetMeta, SpectralDataset};
use crate::distortion::{make_pseudo_real, DistortionConfig};
use crate::error::{DataError, Result};
use crate::filter::knn_plausibility_filter;
use crate::grid::GridConfig;
use crate::simulate::{simulate_spectrum, LayerParams, LayerRanges, TissueParams};

/// Sampling box of one tissue class, one entry per layer (top first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    pub name: String,
    pub layers: Vec<LayerRanges>,
}

impl ClassConfig {
    fn sample(&self, class: usize, rng: &mut RngStream) -> TissueParams {
        let mut draw = |[lo, hi]: [f64; 2]| if lo == hi { lo } else { rng.uniform_range(lo, hi) };
        let layers = self
            .layers
            .iter()
            .map(|r| LayerParams {
                v_hb: draw(r.v_hb),
                so2: draw(r.so2),
                a_mie: draw(r.a_mie),
                b_mie: draw(r.b_mie),
                d: draw(r.d),
            })
            .collect();
        TissueParams { layers, class }
    }

    fn overlaps(&self, other: &Self) -> bool {
        if self.layers.len() != other.layers.len() {
            return false;
        }
        self.layers.iter().zip(&other.layers).all(|(a, b)| {
            a.fields()
                .iter()
                .zip(b.fields())
                .all(|((_, [alo, ahi]), (_, [blo, bhi]))| *alo <= bhi && blo <= *ahi)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub k: usize,
    pub quantile: f64,
    /// Number of pseudo-real training spectra used as kNN reference.
    pub reference: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            k: 5,
            quantile: 0.8,
            reference: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub grid: GridConfig,
    pub classes: Vec<ClassConfig>,
    /// Preset id of the hidden distortion.
    pub distortion_id: u32,
    /// Overrides the preset when present.
    pub distortion: Option<DistortionConfig>,
    pub n_sim: usize,
    pub n_real: usize,
    pub n_test: usize,
    pub filter: FilterConfig,
    pub seed: u64,
}

fn deep(v_hb: [f64; 2], so2: [f64; 2], d: [f64; 2]) -> LayerRanges {
    LayerRanges {
        v_hb,
        so2,
        d,
        ..LayerRanges::FULL
    }
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let lower = [
            deep([0.0, 0.1], [0.5, 1.0], [0.01, 0.1]),
            deep([0.0, 0.1], [0.5, 1.0], [0.05, 0.2]),
        ];
        let class = |name: &str, v_hb, so2| ClassConfig {
            name: name.into(),
            layers: vec![deep(v_hb, so2, [0.02, 0.2]), lower[0], lower[1]],
        };
        Self {
            grid: GridConfig::default(),
            classes: vec![
                class("vein", [0.05, 0.3], [0.3, 0.6]),
                class("artery", [0.05, 0.3], [0.85, 1.0]),
                class("avascular", [0.0, 0.04], [0.0, 1.0]),
            ],
            distortion_id: 1,
            distortion: None,
            n_sim: 20_000,
            n_real: 20_000,
            n_test: 5_000,
            filter: FilterConfig::default(),
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn distortion(&self) -> Result<DistortionConfig> {
        let d = match &self.distortion {
            Some(d) => d.clone(),
            None => DistortionConfig::preset(self.distortion_id)?,
        };
        d.validate()?;
        Ok(d)
    }

    /// Validates the config and returns warnings for overlapping classes.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.grid.wavelengths()?;
        self.distortion()?;
        if self.classes.is_empty() {
            return Err(DataError::Config("at least one tissue class is required".into()));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.layers.is_empty() || c.layers.len() > 3 {
                return Err(DataError::Config(format!("class '{}' needs 1 to 3 layers", c.name)));
            }
            for (j, l) in c.layers.iter().enumerate() {
                l.validate(j).map_err(|e| DataError::Config(format!("class {i} '{}': {e}", c.name)))?;
            }
        }
        if self.n_sim == 0 || self.n_real == 0 || self.n_test == 0 {
            return Err(DataError::Config("dataset sizes must be positive".into()));
        }
        let f = &self.filter;
        if f.k == 0 || f.k > f.reference.min(self.n_real) || !(f.quantile > 0.0 && f.quantile <= 1.0) {
            return Err(DataError::Config(format!("invalid filter settings {f:?}")));
        }
        let mut warnings = vec![];
        for i in 0..self.classes.len() {
            for j in i + 1..self.classes.len() {
                if self.classes[i].overlaps(&self.classes[j]) {
                    warnings.push(format!(
                        "classes '{}' and '{}' have overlapping parameter ranges",
                        self.classes[i].name, self.classes[j].name
                    ));
                }
            }
        }
        Ok(warnings)
    }

    /// Simulations drawn before filtering.
    pub fn n_candidates(&self) -> usize {
        (self.n_sim as f64 / self.filter.quantile).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub sim: SpectralDataset,
    /// Labels stripped; see [`hidden_labels`](Self::hidden_labels).
    pub real_train: SpectralDataset,
    pub hidden_labels: Vec<usize>,
    pub test: SpectralDataset,
    pub filter_threshold: f64,
    pub warnings: Vec<String>,
}

/// Draws `n` labeled tissue samples; sample `i` uses the substream `rng.derive(stream).derive_index(i)`.
pub fn sample_tissues(cfg: &BenchmarkConfig, rng: &RngStream, stream: &str, n: usize) -> Vec<TissueParams> {
    let base = rng.derive(stream);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = base.derive_index(i as u64);
            let class = r.below(cfg.classes.len());
            cfg.classes[class].sample(class, &mut r)
        })
        .collect()
}

fn simulate_all(tissues: &[TissueParams], grid: &[f64]) -> Result<Tensor<f64>> {
    let rows = tissues
        .par_iter()
        .map(|t| simulate_spectrum(t, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::new(vec![tissues.len(), grid.len()], rows.concat())?)
}

impl From<flowbridge_core::TensorError> for DataError {
    fn from(e: flowbridge_core::TensorError) -> Self {
        DataError::Mismatch(e.to_string())
    }
}

pub fn generate_benchmark(cfg: &BenchmarkConfig, rng: &RngStream) -> Result<Benchmark> {
    let warnings = cfg.validate()?;
    let grid = cfg.grid.wavelengths()?;
    let distortion = cfg.distortion()?;
    let labels = |t: &[TissueParams]| t.iter().map(|p| Some(p.class)).collect::<Vec<_>>();

    let real_tissue = sample_tissues(cfg, rng, "real", cfg.n_real + cfg.n_test);
    let clean = simulate_all(&real_tissue, &grid)?;
    let noise = rng.derive("distortion");
    let rows: Vec<f64> = (0..real_tissue.len())
        .into_par_iter()
        .map(|i| make_pseudo_real(clean.row(i), &distortion, &mut noise.derive_index(i as u64)))
        .flatten()
        .collect();
    let real_meta = DatasetMeta {
        seed: Some(rng.seed()),
        distortion_id: Some(cfg.distortion_id),
    };
    let real_all = SpectralDataset::new(
        grid.clone(),
        Tensor::new(vec![real_tissue.len(), grid.len()], rows)?,
        labels(&real_tissue),
        DatasetDomain::PseudoReal,
        real_meta,
    )?;
    let train_idx: Vec<usize> = (0..cfg.n_real).collect();
    let test_idx: Vec<usize> = (cfg.n_real..cfg.n_real + cfg.n_test).collect();
    let labeled_train = real_all.select(&train_idx);
    let test = real_all.select(&test_idx);

    let sim_tissue = sample_tissues(cfg, rng, "sim", cfg.n_candidates());
    let candidates = SpectralDataset::new(
        grid.clone(),
        simulate_all(&sim_tissue, &grid)?,
        labels(&sim_tissue),
        DatasetDomain::Sim,
        DatasetMeta {
            seed: Some(rng.seed()),
            distortion_id: None,
        },
    )?;
    let reference = labeled_train.select(&(0..cfg.filter.reference.min(cfg.n_real)).collect::<Vec<_>>());
    let (kept, filter_threshold) =
        knn_plausibility_filter(&candidates, &reference, cfg.filter.k, cfg.filter.quantile)?;
    let sim = kept.select(&(0..cfg.n_sim.min(kept.len())).collect::<Vec<_>>());

    Ok(Benchmark {
        sim,
        hidden_labels: labeled_train.required_labels()?,
        real_train: labeled_train.unlabeled(),
        test,
        filter_threshold,
        warnings,
    })
}
