use std::collections::BTreeMap;

use flowbridge_spectra::SpectralDataset;

use crate::error::{EvalError, Result};

fn column_means(ds: &SpectralDataset, rows: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; ds.dim()];
    for &i in rows {
        for (a, v) in m.iter_mut().zip(ds.row(i)) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= rows.len() as f64);
    m
}

/// `|mean_a(λ) - mean_b(λ)|` per wavelength. With `per_class`, the
/// difference is taken between class means and averaged with the class
/// support of `b` as weights; classes missing from `a` are skipped.
pub fn per_wavelength_abs_diff(a: &SpectralDataset, b: &SpectralDataset, per_class: bool) -> Result<Vec<f64>> {
    a.same_grid(b)?;
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::Input("empty dataset".into()));
    }
    if !per_class {
        let all = |ds: &SpectralDataset| column_means(ds, &(0..ds.len()).collect::<Vec<_>>());
        return Ok(all(a).iter().zip(all(b)).map(|(x, y)| (x - y).abs()).collect());
    }
    let groups = |ds: &SpectralDataset| -> Result<BTreeMap<usize, Vec<usize>>> {
        let mut g: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, c) in ds.required_labels()?.into_iter().enumerate() {
            g.entry(c).or_default().push(i);
        }
        Ok(g)
    };
    let (ga, gb) = (groups(a)?, groups(b)?);
    let mut out = vec![0.0; a.dim()];
    let mut weight = 0usize;
    for (c, rows_b) in &gb {
        let Some(rows_a) = ga.get(c) else { continue };
        let (ma, mb) = (column_means(a, rows_a), column_means(b, rows_b));
        for (o, (x, y)) in out.iter_mut().zip(ma.iter().zip(&mb)) {
            *o += rows_b.len() as f64 * (x - y).abs();
        }
        weight += rows_b.len();
    }
    if weight == 0 {
        return Err(EvalError::Input("datasets share no class".into()));
    }
    out.iter_mut().for_each(|o| *o /= weight as f64);
    Ok(out)
}
