use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

/// Evenly spaced wavelengths in nanometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start_nm: f64,
    pub end_nm: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            start_nm: 500.0,
            end_nm: 1000.0,
            points: 64,
        }
    }
}

impl GridConfig {
    pub fn wavelengths(&self) -> Result<Vec<f64>> {
        if self.points < 2 || !(self.end_nm > self.start_nm) || self.start_nm <= 0.0 {
            return Err(DataError::Config(format!(
                "wavelength grid needs at least 2 points over an increasing positive range, got {self:?}"
            )));
        }
        let step = (self.end_nm - self.start_nm) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| self.start_nm + step * i as f64).collect())
    }
}

pub fn check_grid(wavelengths: &[f64]) -> Result<()> {
    if wavelengths.is_empty() || wavelengths.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DataError::Config("wavelength grid must be strictly increasing".into()));
    }
    Ok(())
}
