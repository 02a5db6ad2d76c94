//! Evaluation of simulated-to-real spectral transfer.
//!
//! Realism is measured with a PCA embedding fitted on pseudo-real spectra and
//! with per-wavelength differences of class means. Usefulness is measured by
//! training random forests on simulated, transferred and real spectra and
//! scoring them on held-out pseudo-real spectra.

pub mod diff;
pub mod error;
pub mod forest;
pub mod metrics;
pub mod pca;
pub mod report;
pub mod svg;
pub mod transfer;

pub use diff::per_wavelength_abs_diff;
pub use error::{EvalError, Result};
pub use forest::{rf_train, ForestConfig, RandomForest};
pub use metrics::{auroc_weighted, balanced_accuracy, binary_auroc, f1_weighted, Score};
pub use pca::{pca_fit, PcaModel};
pub use report::{run_downstream_eval, EvalConfig, EvalInputs, EvalReport, SourceMetrics, TrainSource};
pub use transfer::{transfer_real_to_sim, transfer_sim_to_real};
