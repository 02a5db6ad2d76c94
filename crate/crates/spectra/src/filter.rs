//! kNN plausibility filter for simulated spectra.

use rayon::prelude::*;

use crate::dataset::SpectralDataset;
use crate::error::{DataError, Result};

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean Euclidean distance from every simulated spectrum to its `k` nearest real spectra.
pub fn knn_distances(sim: &SpectralDataset, real: &SpectralDataset, k: usize) -> Result<Vec<f64>> {
    sim.same_grid(real)?;
    if k == 0 || k > real.len() {
        return Err(DataError::Config(format!("k = {k} must lie in [1, {}]", real.len())));
    }
    Ok((0..sim.len())
        .into_par_iter()
        .map(|i| {
            let s = sim.row(i);
            let mut best = vec![f64::INFINITY; k];
            for j in 0..real.len() {
                let d = l2(s, real.row(j));
                if d < best[k - 1] {
                    let pos = best.partition_point(|&b| b <= d);
                    best.insert(pos, d);
                    best.pop();
                }
            }
            best.iter().sum::<f64>() / k as f64
        })
        .collect())
}

/// Nearest-rank quantile: the smallest value with at least `q·n` values at or below it.
pub fn nearest_rank(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Keeps the simulated spectra whose kNN distance is at or below `threshold`.
pub fn filter_by_threshold(
    sim: &SpectralDataset,
    real: &SpectralDataset,
    k: usize,
    threshold: f64,
) -> Result<SpectralDataset> {
    let dist = knn_distances(sim, real, k)?;
    let keep: Vec<usize> = (0..sim.len()).filter(|&i| dist[i] <= threshold).collect();
    Ok(sim.select(&keep))
}

/// Filters at the `quantile` of the kNN-distance distribution and returns the applied threshold.
pub fn knn_plausibility_filter(
    sim: &SpectralDataset,
    real: &SpectralDataset,
    k: usize,
    quantile: f64,
) -> Result<(SpectralDataset, f64)> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(DataError::OutOfRange {
            field: "quantile".into(),
            value: quantile,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if sim.is_empty() {
        return Ok((sim.clone(), 0.0));
    }
    let dist = knn_distances(sim, real, k)?;
    let threshold = nearest_rank(&dist, quantile);
    let keep: Vec<usize> = (0..sim.len()).filter(|&i| dist[i] <= threshold).collect();
    Ok((sim.select(&keep), threshold))
}
