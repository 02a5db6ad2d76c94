use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use flowbridge_core::{FlowModel, RngStream, Tensor};
use flowbridge_spectra::SpectralDataset;
use serde::{Deserialize, Serialize};

use crate::diff::per_wavelength_abs_diff;
use crate::error::{EvalError, Result};
use crate::forest::{rf_train, ForestConfig};
use crate::metrics::{auroc_weighted, balanced_accuracy, f1_weighted};
use crate::pca::{pca_fit, PcaModel};
use crate::svg;
use crate::transfer::transfer_sim_to_real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub forest: ForestConfig,
    pub pca_components: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            forest: ForestConfig::default(),
            pca_components: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainSource {
    Sim,
    Transferred,
    Real,
}

impl TrainSource {
    pub const ALL: [TrainSource; 3] = [TrainSource::Sim, TrainSource::Transferred, TrainSource::Real];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sim => "sim",
            Self::Transferred => "transferred",
            Self::Real => "real",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMetrics {
    pub source: TrainSource,
    pub ba: f64,
    pub auroc: f64,
    pub f1: f64,
}

/// Inputs of the downstream protocol. `real_train` must carry labels: it
/// trains the real-data reference forest.
#[derive(Debug, Clone, Copy)]
pub struct EvalInputs<'a> {
    pub sim: &'a SpectralDataset,
    /// Precomputed transfer of `sim`; derived from the model when absent.
    pub transferred: Option<&'a SpectralDataset>,
    pub real_train: &'a SpectralDataset,
    pub test: &'a SpectralDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metrics: Vec<SourceMetrics>,
    pub wavelengths: Vec<f64>,
    /// Class-weighted `|mean - pseudo-real class mean|` per wavelength.
    pub diff_sim: Vec<f64>,
    pub diff_transferred: Vec<f64>,
    pub pca: PcaModel,
    /// `(dataset, coordinates)` in the basis fitted on pseudo-real spectra.
    pub pca_coords: Vec<(String, Tensor<f64>)>,
    pub seed: u64,
    pub runtimes: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn metrics_for(&self, source: TrainSource) -> &SourceMetrics {
        self.metrics.iter().find(|m| m.source == source).expect("all sources scored")
    }

    /// Fraction of wavelengths where transfer beats raw simulation.
    pub fn diff_win_fraction(&self) -> f64 {
        let wins = self.diff_transferred.iter().zip(&self.diff_sim).filter(|(t, s)| t < s).count();
        wins as f64 / self.diff_sim.len() as f64
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("source,ba,auroc,f1\n");
        for m in &self.metrics {
            let _ = writeln!(s, "{},{:.17e},{:.17e},{:.17e}", m.source.as_str(), m.ba, m.auroc, m.f1);
        }
        s
    }

    pub fn diff_csv(&self) -> String {
        let mut s = String::from("wavelength_nm,sim_vs_real,transferred_vs_real\n");
        for ((w, a), b) in self.wavelengths.iter().zip(&self.diff_sim).zip(&self.diff_transferred) {
            let _ = writeln!(s, "{w},{a:.17e},{b:.17e}");
        }
        s
    }

    pub fn pca_csv(&self) -> String {
        let k = self.pca.n_components();
        let mut s = String::from("dataset");
        for c in 1..=k {
            let _ = write!(s, ",pc{c}");
        }
        s.push('\n');
        for (name, t) in &self.pca_coords {
            for i in 0..t.rows() {
                s.push_str(name);
                for v in t.row(i) {
                    let _ = write!(s, ",{v:.17e}");
                }
                s.push('\n');
            }
        }
        s
    }

    /// Writes metrics, difference and PCA CSVs, a JSON summary and three SVG charts.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let put = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|source| EvalError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        std::fs::create_dir_all(dir).map_err(|source| EvalError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        put("metrics.csv", self.metrics_csv())?;
        put("wavelength_diff.csv", self.diff_csv())?;
        put("pca_coords.csv", self.pca_csv())?;
        let summary = serde_json::json!({
            "metrics": self.metrics,
            "pca": self.pca,
            "diff_win_fraction": self.diff_win_fraction(),
            "seed": self.seed,
            "runtimes_s": self.runtimes.iter().map(|(k, v)| (k.clone(), *v)).collect::<std::collections::BTreeMap<_, _>>(),
            "warnings": self.warnings,
        });
        put("report.json", serde_json::to_string_pretty(&summary).expect("json") + "\n")?;

        let sets: Vec<(&str, Vec<(f64, f64)>)> = self
            .pca_coords
            .iter()
            .map(|(n, t)| {
                let pts = (0..t.rows()).map(|i| (t.row(i)[0], t.row(i).get(1).copied().unwrap_or(0.0))).collect();
                (n.as_str(), pts)
            })
            .collect();
        put("pca.svg", svg::pca_scatter(&sets, &self.pca.explained_variance_ratio))?;
        put(
            "wavelength_diff.svg",
            svg::diff_plot(&self.wavelengths, &[("sim", &self.diff_sim), ("transferred", &self.diff_transferred)]),
        )?;
        let names: Vec<&str> = self.metrics.iter().map(|m| m.source.as_str()).collect();
        let values: Vec<Vec<f64>> = self.metrics.iter().map(|m| vec![m.ba, m.auroc, m.f1]).collect();
        put("metrics.svg", svg::metric_bars(&["BA", "AUROC", "F1"], &names, &values))?;
        Ok(())
    }
}

/// Trains sim-, transferred- and real-trained forests and scores each on the
/// pseudo-real test split, alongside PCA and per-wavelength analyses.
pub fn run_downstream_eval(model: &FlowModel<f64>, data: EvalInputs<'_>, cfg: &EvalConfig) -> Result<EvalReport> {
    for (name, ds) in [("sim", data.sim), ("real_train", data.real_train), ("test", data.test)] {
        if ds.is_empty() {
            return Err(EvalError::Missing(format!("{name} set is empty")));
        }
    }
    data.sim.same_grid(data.test)?;
    data.real_train.same_grid(data.test)?;
    let mut runtimes = vec![];
    let mut warnings = vec![];

    let t0 = Instant::now();
    let owned;
    let transferred = match data.transferred {
        Some(t) => t,
        None => {
            owned = transfer_sim_to_real(model, data.sim)?;
            &owned
        }
    };
    transferred.same_grid(data.test)?;
    runtimes.push(("transfer".to_string(), t0.elapsed().as_secs_f64()));

    let root = RngStream::new(cfg.seed);
    let mut metrics = vec![];
    let y_test = data.test.required_labels()?;
    for source in TrainSource::ALL {
        let t = Instant::now();
        let train = match source {
            TrainSource::Sim => data.sim,
            TrainSource::Transferred => transferred,
            TrainSource::Real => data.real_train,
        };
        let labels = train.required_labels()?;
        let forest = rf_train(&train.spectra, &labels, &cfg.forest, &root.derive(source.as_str()))?;
        let probs = forest.predict_proba(&data.test.spectra)?;
        let pred = forest.predict(&data.test.spectra)?;
        let ba = balanced_accuracy(&y_test, &pred)?;
        let auroc = auroc_weighted(&y_test, &probs, &forest.classes)?;
        let f1 = f1_weighted(&y_test, &pred)?;
        for (name, s) in [("BA", &ba), ("AUROC", &auroc), ("F1", &f1)] {
            warnings.extend(s.warnings(&format!("{} {name}", source.as_str())));
        }
        metrics.push(SourceMetrics {
            source,
            ba: ba.value,
            auroc: auroc.value,
            f1: f1.value,
        });
        runtimes.push((format!("forest_{}", source.as_str()), t.elapsed().as_secs_f64()));
    }

    let t = Instant::now();
    let diff_sim = per_wavelength_abs_diff(data.sim, data.real_train, true)?;
    let diff_transferred = per_wavelength_abs_diff(transferred, data.real_train, true)?;
    let (pca, pca_warn) = pca_fit(&data.real_train.spectra, cfg.pca_components)?;
    warnings.extend(pca_warn);
    let mut pca_coords = vec![];
    for (name, ds) in [("sim", data.sim), ("transferred", transferred), ("real", data.real_train)] {
        pca_coords.push((name.to_string(), pca.project(&ds.spectra)?));
    }
    runtimes.push(("analysis".to_string(), t.elapsed().as_secs_f64()));

    Ok(EvalReport {
        metrics,
        wavelengths: data.test.wavelengths.clone(),
        diff_sim,
        diff_transferred,
        pca,
        pca_coords,
        seed: cfg.seed,
        runtimes,
        warnings,
    })
}
