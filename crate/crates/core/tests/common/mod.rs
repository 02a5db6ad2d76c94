#![allow(dead_code)]

use flowbridge_core::params::ParamStore;
use flowbridge_core::{ConditionSelector, InputShape, ModelSpec, RngStream, Tensor, TissueEncoding};

/// Overwrites every parameter with random draws so no layer is the identity:
/// weights `N(0, scale² / fan_in)`, biases `N(0, (scale / 4)²)`.
pub fn randomize(store: &mut ParamStore<f64>, rng: &mut RngStream, scale: f64) {
    for t in store.tensors_mut() {
        let std = match t.shape() {
            [fan_in, _] => scale / (*fan_in as f64).sqrt(),
            _ => scale / 4.0,
        };
        for v in t.data_mut() {
            *v = std * rng.normal();
        }
    }
}

pub fn gaussian(rng: &mut RngStream, n: usize, d: usize) -> Tensor<f64> {
    Tensor::from_fn(&[n, d], |_| rng.normal())
}

pub fn spec(shape: InputShape, blocks: Vec<usize>, selectors: Vec<ConditionSelector>, classes: usize) -> ModelSpec {
    ModelSpec {
        input_shape: shape,
        n_scales: blocks.len(),
        blocks_per_scale: blocks,
        condition_per_block: selectors,
        tissue_classes: classes,
        tissue_encoding: match shape {
            InputShape::Sequence { .. } => TissueEncoding::OneHot,
            InputShape::Grid { .. } => TissueEncoding::Map,
        },
        subnet_hidden_layers: 2,
        subnet_width: 16,
        clamp_alpha: 1.0,
    }
}

/// Central-difference Jacobian, `j[i][k] = d f_i / d x_k`.
pub fn numeric_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let d = x.len();
    let mut cols = Vec::with_capacity(d);
    let mut p = x.to_vec();
    for k in 0..d {
        p[k] = x[k] + h;
        let up = f(&p);
        p[k] = x[k] - h;
        let down = f(&p);
        p[k] = x[k];
        cols.push(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    (0..cols[0].len()).map(|i| (0..d).map(|k| cols[k][i]).collect()).collect()
}

/// `log|det m|` by Gaussian elimination with partial pivoting.
pub fn log_abs_det(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut acc = 0.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))
            .unwrap();
        m.swap(c, p);
        let piv = m[c][c];
        assert!(piv != 0.0, "singular jacobian");
        acc += piv.abs().ln();
        for r in c + 1..n {
            let f = m[r][c] / piv;
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    acc
}

pub fn rel_err(analytic: f64, reference: f64) -> f64 {
    (analytic - reference).abs() / reference.abs().max(1.0)
}
