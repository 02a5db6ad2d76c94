use std::fmt;
use std::str::FromStr;

use flowbridge_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::grid::check_grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetDomain {
    Sim,
    PseudoReal,
    Transferred,
}

impl DatasetDomain {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sim => "sim",
            Self::PseudoReal => "pseudo-real",
            Self::Transferred => "transferred",
        }
    }
}

impl fmt::Display for DatasetDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetDomain {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sim" => Ok(Self::Sim),
            "pseudo-real" => Ok(Self::PseudoReal),
            "transferred" => Ok(Self::Transferred),
            other => Err(format!("unknown domain '{other}'")),
        }
    }
}

/// Provenance carried alongside the spectra.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub distortion_id: Option<u32>,
}

/// Row-aligned spectra and labels sharing one wavelength grid and one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDataset {
    pub wavelengths: Vec<f64>,
    /// `n × d` reflectances.
    pub spectra: Tensor<f64>,
    pub labels: Vec<Option<usize>>,
    pub domain: DatasetDomain,
    pub meta: DatasetMeta,
}

impl SpectralDataset {
    pub fn new(
        wavelengths: Vec<f64>,
        spectra: Tensor<f64>,
        labels: Vec<Option<usize>>,
        domain: DatasetDomain,
        meta: DatasetMeta,
    ) -> Result<Self> {
        let ds = Self {
            wavelengths,
            spectra,
            labels,
            domain,
            meta,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        check_grid(&self.wavelengths)?;
        let shape = self.spectra.shape();
        if shape.len() != 2 || shape[1] != self.wavelengths.len() {
            return Err(DataError::Mismatch(format!(
                "spectra shape {shape:?} does not match {} wavelengths",
                self.wavelengths.len()
            )));
        }
        if shape[0] != self.labels.len() {
            return Err(DataError::Mismatch(format!("{} spectra but {} labels", shape[0], self.labels.len())));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.spectra.row(i)
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            wavelengths: self.wavelengths.clone(),
            spectra: self.spectra.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            domain: self.domain,
            meta: self.meta.clone(),
        }
    }

    /// Same spectra with every label removed.
    pub fn unlabeled(&self) -> Self {
        Self {
            labels: vec![None; self.len()],
            ..self.clone()
        }
    }

    /// Labels of a fully annotated set.
    pub fn required_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| DataError::Mismatch(format!("row {i} of {} set is unlabeled", self.domain))))
            .collect()
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.wavelengths != other.wavelengths {
            return Err(DataError::Mismatch(format!(
                "{} set has {} wavelengths, {} set has {} on a different grid",
                self.domain,
                self.dim(),
                other.domain,
                other.dim()
            )));
        }
        Ok(())
    }
}
