//! Domain and tissue conditions, and their per-scale encodings.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::spec::{ConditionSelector, InputShape, ModelSpec, TissueEncoding};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Sim,
    Real,
}

impl Domain {
    pub fn index(self) -> usize {
        match self {
            Domain::Sim => 0,
            Domain::Real => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Domain::Sim => Domain::Real,
            Domain::Real => Domain::Sim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TissueLabel {
    Class(usize),
    /// Row-major class ids over the input grid.
    Map(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub domain: Domain,
    pub tissue: TissueLabel,
}

impl Condition {
    pub fn new(domain: Domain, tissue: TissueLabel) -> Self {
        Self { domain, tissue }
    }

    pub fn class(domain: Domain, class: usize) -> Self {
        Self::new(domain, TissueLabel::Class(class))
    }

    /// Same tissue label under another domain.
    pub fn with_domain(&self, domain: Domain) -> Self {
        Self {
            domain,
            tissue: self.tissue.clone(),
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<(), ModelError> {
        let k = spec.tissue_classes;
        match (&self.tissue, spec.tissue_encoding) {
            (TissueLabel::Class(c), TissueEncoding::OneHot) => {
                if *c >= k {
                    return Err(ModelError::InvalidCondition(format!("class {c} outside 0..{k}")));
                }
            }
            (TissueLabel::Map(m), TissueEncoding::Map) => {
                let n = spec.input_shape.positions();
                if m.len() != n {
                    return Err(ModelError::InvalidCondition(format!(
                        "tissue map has {} positions, grid has {n}",
                        m.len()
                    )));
                }
                if let Some(bad) = m.iter().find(|&&c| c >= k) {
                    return Err(ModelError::InvalidCondition(format!("map class {bad} outside 0..{k}")));
                }
            }
            _ => {
                return Err(ModelError::InvalidCondition(
                    "tissue label kind does not match the model's tissue encoding".into(),
                ))
            }
        }
        Ok(())
    }
}

/// Majority pooling of a label map over 2x2 cells; ties go to the smallest class id.
pub fn pool_label_map(map: &[usize], height: usize, width: usize, classes: usize) -> Vec<usize> {
    let (h2, w2) = (height / 2, width / 2);
    let mut out = Vec::with_capacity(h2 * w2);
    let mut counts = vec![0usize; classes];
    for p in 0..h2 {
        for q in 0..w2 {
            counts.iter_mut().for_each(|c| *c = 0);
            for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                counts[map[(2 * p + di) * width + 2 * q + dj]] += 1;
            }
            let best = (0..classes).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
            out.push(best);
        }
    }
    out
}

/// Encodes one selector's view of a batch of conditions at a given scale as an
/// `(n, cond_dim)` tensor: domain one-hot followed by the tissue encoding.
pub fn encode_conditions<T: Scalar>(
    spec: &ModelSpec,
    conds: &[Condition],
    scale: usize,
    selector: ConditionSelector,
) -> Option<Tensor<T>> {
    let width = spec.cond_dim(scale, selector);
    if width == 0 || conds.is_empty() {
        return None;
    }
    let k = spec.tissue_classes;
    let mut data = vec![T::zero(); conds.len() * width];
    for (row, c) in data.chunks_mut(width).zip(conds) {
        row[c.domain.index()] = T::one();
        if selector != ConditionSelector::DomainTissue {
            continue;
        }
        match &c.tissue {
            TissueLabel::Class(cls) => row[2 + cls] = T::one(),
            TissueLabel::Map(m) => {
                let InputShape::Grid { height, width: w, .. } = spec.input_shape else {
                    unreachable!("validated: maps require grids")
                };
                let (mut map, mut h, mut ww) = (m.clone(), height, w);
                for _ in 0..scale {
                    map = pool_label_map(&map, h, ww, k);
                    h /= 2;
                    ww /= 2;
                }
                for (pos, &cls) in map.iter().enumerate() {
                    row[2 + pos * k + cls] = T::one();
                }
            }
        }
    }
    Some(Tensor::from_fn(&[conds.len(), width], |i| data[i]))
}

/// Label space for proxy labels of unlabeled samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSpace {
    Classes(usize),
    Map {
        classes: usize,
        height: usize,
        width: usize,
        regions: usize,
    },
}

impl LabelSpace {
    pub fn for_spec(spec: &ModelSpec) -> Self {
        match (spec.tissue_encoding, spec.input_shape) {
            (TissueEncoding::Map, InputShape::Grid { height, width, .. }) => LabelSpace::Map {
                classes: spec.tissue_classes,
                height,
                width,
                regions: 3,
            },
            _ => LabelSpace::Classes(spec.tissue_classes),
        }
    }
}

/// Random tissue label for an unlabeled sample: a uniform class, or a map made
/// of a random background class overlaid with random rectangles of random classes.
pub fn sample_proxy_label(rng: &mut RngStream, space: &LabelSpace) -> Result<TissueLabel, ModelError> {
    match *space {
        LabelSpace::Classes(0) | LabelSpace::Map { classes: 0, .. } => {
            Err(ModelError::InvalidCondition("label space has no classes".into()))
        }
        LabelSpace::Classes(k) => Ok(TissueLabel::Class(rng.below(k))),
        LabelSpace::Map {
            classes,
            height,
            width,
            regions,
        } => {
            let mut map = vec![rng.below(classes); height * width];
            for _ in 0..regions {
                let (r0, r1) = {
                    let (a, b) = (rng.below(height), rng.below(height));
                    (a.min(b), a.max(b))
                };
                let (c0, c1) = {
                    let (a, b) = (rng.below(width), rng.below(width));
                    (a.min(b), a.max(b))
                };
                let cls = rng.below(classes);
                for r in r0..=r1 {
                    map[r * width + c0..=r * width + c1].fill(cls);
                }
            }
            Ok(TissueLabel::Map(map))
        }
    }
}

/// `n × dim` standard normal latent draws.
pub fn sample_latent<T: Scalar>(rng: &mut RngStream, n: usize, dim: usize) -> Result<Tensor<T>, ModelError> {
    if dim == 0 || n == 0 {
        return Err(ModelError::InvalidSpec("latent dimension must be at least 1".into()));
    }
    Ok(Tensor::from_fn(&[n, dim], |_| T::lit(rng.normal())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proxy_class_frequencies_are_uniform() {
        let mut rng = RngStream::new(2024);
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            match sample_proxy_label(&mut rng, &LabelSpace::Classes(10)).unwrap() {
                TissueLabel::Class(c) => counts[c] += 1,
                TissueLabel::Map(_) => unreachable!(),
            }
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((f - 0.1).abs() <= 0.02, "{f}");
        }
    }

    #[test]
    fn proxy_label_deterministic_and_single_class() {
        let a = sample_proxy_label(&mut RngStream::new(5), &LabelSpace::Classes(10)).unwrap();
        let b = sample_proxy_label(&mut RngStream::new(5), &LabelSpace::Classes(10)).unwrap();
        assert_eq!(a, b);
        let mut rng = RngStream::new(1);
        for _ in 0..20 {
            assert_eq!(sample_proxy_label(&mut rng, &LabelSpace::Classes(1)).unwrap(), TissueLabel::Class(0));
        }
        assert!(sample_proxy_label(&mut rng, &LabelSpace::Classes(0)).is_err());
    }

    #[test]
    fn proxy_map_positions_are_valid() {
        let space = LabelSpace::Map { classes: 4, height: 8, width: 8, regions: 2 };
        let mut rng = RngStream::new(8);
        for _ in 0..50 {
            let TissueLabel::Map(m) = sample_proxy_label(&mut rng, &space).unwrap() else {
                panic!()
            };
            assert_eq!(m.len(), 64);
            assert!(m.iter().all(|&c| c < 4));
        }
    }

    #[test]
    fn latent_moments() {
        let mut rng = RngStream::new(77);
        let z = sample_latent::<f64>(&mut rng, 100_000, 4).unwrap();
        let n = 100_000.0;
        let mut mean = [0.0; 4];
        for r in 0..100_000 {
            for (j, m) in mean.iter_mut().enumerate() {
                *m += z.row(r)[j] / n;
            }
        }
        let mut cov = [[0.0; 4]; 4];
        for r in 0..100_000 {
            let row = z.row(r);
            for i in 0..4 {
                for j in 0..4 {
                    cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]) / n;
                }
            }
        }
        for i in 0..4 {
            assert!(mean[i].abs() < 0.02);
            assert!((cov[i][i] - 1.0).abs() < 0.05);
            for j in 0..4 {
                if i != j {
                    let rho = cov[i][j] / (cov[i][i] * cov[j][j]).sqrt();
                    assert!(rho.abs() < 0.02, "{rho}");
                }
            }
        }
    }

    #[test]
    fn latent_is_reproducible() {
        let a = sample_latent::<f64>(&mut RngStream::new(3), 1, 1).unwrap();
        let b = sample_latent::<f64>(&mut RngStream::new(3), 1, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pooling_majority_and_ties() {
        // 2x4 grid -> 1x2
        let map = vec![1, 1, 0, 2, 1, 0, 2, 0];
        assert_eq!(pool_label_map(&map, 2, 4, 3), vec![1, 0]);
    }

    #[test]
    fn encoding_widths() {
        let spec = ModelSpec::image(3);
        let cond = Condition::new(Domain::Real, TissueLabel::Map(vec![2; 256]));
        cond.validate(&spec).unwrap();
        let t: Tensor<f64> = encode_conditions(&spec, &[cond.clone()], 1, ConditionSelector::DomainTissue).unwrap();
        assert_eq!(t.shape(), &[1, 2 + 3 * 64]);
        assert_eq!(t.data()[..2], [0.0, 1.0]);
        assert_eq!(t.data().iter().sum::<f64>(), 65.0);
        assert!(encode_conditions::<f64>(&spec, &[cond], 0, ConditionSelector::Unconditioned).is_none());
    }
}
