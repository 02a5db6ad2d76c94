use flowbridge_core::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

/// Relative eigenvalue floor below which a direction counts as degenerate.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal rows, ordered by decreasing variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
}

/// Sample covariance (divisor `n - 1`) of the rows of `data`.
pub fn covariance(data: &Tensor<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (n, d) = (data.rows(), data.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| data.row(i)[j] - mean[j]);
    let cov = centered.tr_mul(&centered) / (n.max(2) - 1) as f64;
    (mean, cov)
}

/// Fits on `data` and keeps up to `n_components` non-degenerate directions.
/// Returns warnings when fewer directions are available.
pub fn pca_fit(data: &Tensor<f64>, n_components: usize) -> Result<(PcaModel, Vec<String>)> {
    let (n, d) = (data.rows(), data.cols());
    if n_components == 0 || n_components > d {
        return Err(EvalError::Input(format!("cannot keep {n_components} of {d} components")));
    }
    if n < n_components.max(2) {
        return Err(EvalError::Input(format!("{n} rows for {n_components} components")));
    }
    let (mean, cov) = covariance(data);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let top = eig.eigenvalues[order[0]].max(0.0);

    let mut components = vec![];
    let mut ratios = vec![];
    for &k in order.iter().take(n_components) {
        let lambda = eig.eigenvalues[k];
        if top == 0.0 || lambda <= RANK_TOL * top {
            break;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        // deterministic sign: largest-magnitude entry positive
        let big = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        ratios.push(lambda / total);
    }
    let mut warnings = vec![];
    if components.len() < n_components {
        warnings.push(format!(
            "data has rank {} below the requested {n_components} components",
            components.len()
        ));
    }
    if components.is_empty() {
        return Err(EvalError::Input("data has zero variance".into()));
    }
    Ok((
        PcaModel {
            mean,
            components,
            explained_variance_ratio: ratios,
        },
        warnings,
    ))
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, data: &Tensor<f64>) -> Result<Tensor<f64>> {
        if data.cols() != self.mean.len() {
            return Err(EvalError::Length(format!("{} features, basis has {}", data.cols(), self.mean.len())));
        }
        let k = self.n_components();
        let mut out = Vec::with_capacity(data.rows() * k);
        for i in 0..data.rows() {
            let row = data.row(i);
            for c in &self.components {
                out.push(c.iter().zip(row).zip(&self.mean).map(|((w, x), m)| w * (x - m)).sum());
            }
        }
        Ok(Tensor::new(vec![data.rows(), k], out)?)
    }

    pub fn reconstruct(&self, coords: &Tensor<f64>) -> Result<Tensor<f64>> {
        if coords.cols() != self.n_components() {
            return Err(EvalError::Length(format!("{} coordinates for {} components", coords.cols(), self.n_components())));
        }
        let d = self.mean.len();
        let mut out = Vec::with_capacity(coords.rows() * d);
        for i in 0..coords.rows() {
            let z = coords.row(i);
            for j in 0..d {
                out.push(self.mean[j] + self.components.iter().zip(z).map(|(c, a)| c[j] * a).sum::<f64>());
            }
        }
        Ok(Tensor::new(vec![coords.rows(), d], out)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use flowbridge_core::RngStream;

    #[test]
    fn one_dominant_axis() {
        let mut rng = RngStream::new(0);
        let data = Tensor::from_fn(&[500, 3], |i| match i % 3 {
            0 => 5.0 * rng.normal(),
            _ => 1e-3 * rng.normal(),
        });
        let (p, w) = pca_fit(&data, 2).unwrap();
        assert!(w.is_empty());
        assert!(p.explained_variance_ratio[0] > 0.99);
        assert!(p.components[0][0].abs() > 0.999);
    }

    #[test]
    fn rank_deficient_input_warns() {
        let data = Tensor::from_fn(&[10, 3], |i| if i % 3 == 0 { (i / 3) as f64 } else { 1.0 });
        let (p, w) = pca_fit(&data, 3).unwrap();
        assert_eq!(p.n_components(), 1);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn too_few_rows_is_an_error() {
        assert!(pca_fit(&Tensor::zeros(&[1, 3]), 2).is_err());
    }
}
