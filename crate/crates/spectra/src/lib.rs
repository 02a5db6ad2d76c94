//! Synthetic two-domain reflectance spectra.
//!
//! A fast layered tissue model produces labeled "simulated" spectra. A hidden
//! distortion turns independent draws into "pseudo-real" spectra whose ground
//! truth stays known. A kNN filter prunes implausible simulations.

pub mod benchmark;
pub mod dataset;
pub mod distortion;
pub mod error;
pub mod extinction;
pub mod filter;
pub mod grid;
pub mod io;
pub mod simulate;

pub use benchmark::{generate_benchmark, Benchmark, BenchmarkConfig, ClassConfig, FilterConfig};
pub use dataset::{DatasetDomain, DatasetMeta, SpectralDataset};
pub use distortion::{make_pseudo_real, DistortionConfig};
pub use error::{DataError, Result};
pub use filter::{filter_by_threshold, knn_distances, knn_plausibility_filter};
pub use grid::GridConfig;
pub use io::{load_dataset, save_dataset};
pub use simulate::{simulate_spectrum, LayerParams, LayerRanges, TissueParams};
