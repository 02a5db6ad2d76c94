//! Random forest of axis-aligned Gini trees grown to purity.

use flowbridge_core::{RngStream, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            min_samples_leaf: 1,
            max_depth: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(p) => return p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub classes: Vec<usize>,
    pub trees: Vec<Tree>,
    pub n_features: usize,
}

struct Grower<'a> {
    x: &'a [f64],
    d: usize,
    y: &'a [usize],
    k: usize,
    mtry: usize,
    min_leaf: usize,
    max_depth: usize,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Grower<'_> {
    fn histogram(&self, idx: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.k];
        for &i in idx {
            h[self.y[i]] += 1.0;
        }
        h
    }

    /// Best threshold on `feature`, scored by `n_L gini_L + n_R gini_R` (lower is better).
    fn best_on(&self, idx: &[usize], feature: usize, buf: &mut Vec<(f64, usize)>) -> Option<(f64, f64)> {
        buf.clear();
        buf.extend(idx.iter().map(|&i| (self.x[i * self.d + feature], self.y[i])));
        buf.sort_by(|a, b| a.0.total_cmp(&b.0));
        if buf[0].0 == buf[buf.len() - 1].0 {
            return None;
        }
        let n = buf.len();
        let mut right = vec![0.0; self.k];
        for &(_, c) in buf.iter() {
            right[c] += 1.0;
        }
        let mut left = vec![0.0; self.k];
        let (mut sq_l, mut sq_r) = (0.0, right.iter().map(|c| c * c).sum::<f64>());
        let mut best: Option<(f64, f64)> = None;
        for s in 0..n - 1 {
            let c = buf[s].1;
            sq_l += 2.0 * left[c] + 1.0;
            left[c] += 1.0;
            sq_r -= 2.0 * right[c] - 1.0;
            right[c] -= 1.0;
            if buf[s].0 == buf[s + 1].0 {
                continue;
            }
            let (nl, nr) = ((s + 1) as f64, (n - s - 1) as f64);
            if (s + 1) < self.min_leaf || (n - s - 1) < self.min_leaf {
                continue;
            }
            let score = (nl - sq_l / nl) + (nr - sq_r / nr);
            if best.is_none_or(|(b, _)| score < b) {
                let mut t = 0.5 * (buf[s].0 + buf[s + 1].0);
                if t == buf[s + 1].0 {
                    t = buf[s].0;
                }
                best = Some((score, t));
            }
        }
        best
    }

    fn find_split(&self, idx: &[usize], rng: &mut RngStream, buf: &mut Vec<(f64, usize)>) -> Option<Split> {
        let mut features: Vec<usize> = (0..self.d).collect();
        let mut best: Option<Split> = None;
        for drawn in 0..self.d {
            // keep drawing past mtry until some feature admits a split
            if drawn >= self.mtry && best.is_some() {
                break;
            }
            let j = drawn + rng.below(self.d - drawn);
            features.swap(drawn, j);
            let f = features[drawn];
            if let Some((score, threshold)) = self.best_on(idx, f, buf) {
                if best.as_ref().is_none_or(|b| score < b.score) {
                    best = Some(Split {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }

    fn grow(&self, idx: Vec<usize>, rng: &mut RngStream) -> Tree {
        let mut nodes = vec![Node::Leaf(vec![])];
        let mut stack = vec![(0usize, idx, 0usize)];
        let mut buf = Vec::new();
        while let Some((at, idx, depth)) = stack.pop() {
            let hist = self.histogram(&idx);
            let pure = hist.iter().filter(|&&c| c > 0.0).count() <= 1;
            let split = if pure || depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
                None
            } else {
                self.find_split(&idx, rng, &mut buf)
            };
            match split {
                None => {
                    let n = idx.len() as f64;
                    nodes[at] = Node::Leaf(hist.into_iter().map(|c| c / n).collect());
                }
                Some(s) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        idx.iter().partition(|&&i| self.x[i * self.d + s.feature] <= s.threshold);
                    let (left, right) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf(vec![]));
                    nodes.push(Node::Leaf(vec![]));
                    nodes[at] = Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left,
                        right,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        Tree { nodes }
    }
}

/// Trains a forest; tree `t` draws from `rng.derive("tree").derive_index(t)`.
pub fn rf_train(features: &Tensor<f64>, labels: &[usize], cfg: &ForestConfig, rng: &RngStream) -> Result<RandomForest> {
    let (n, d) = (features.rows(), features.cols());
    if labels.len() != n {
        return Err(EvalError::Length(format!("{n} rows vs {} labels", labels.len())));
    }
    if cfg.n_trees == 0 || cfg.min_samples_leaf == 0 || d == 0 {
        return Err(EvalError::Input(format!("invalid forest config {cfg:?}")));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(EvalError::Input("random forest needs at least two classes".into()));
    }
    let y: Vec<usize> = labels.iter().map(|l| classes.binary_search(l).expect("label listed")).collect();
    let mtry = cfg.max_features.unwrap_or(((d as f64).sqrt() as usize).max(1)).clamp(1, d);
    let grower = Grower {
        x: features.data(),
        d,
        y: &y,
        k: classes.len(),
        mtry,
        min_leaf: cfg.min_samples_leaf,
        max_depth: cfg.max_depth.unwrap_or(usize::MAX),
    };
    let base = rng.derive("tree");
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = base.derive_index(t as u64);
            let idx = if cfg.bootstrap {
                (0..n).map(|_| r.below(n)).collect()
            } else {
                (0..n).collect()
            };
            grower.grow(idx, &mut r)
        })
        .collect();
    Ok(RandomForest {
        classes,
        trees,
        n_features: d,
    })
}

impl RandomForest {
    /// Mean leaf class frequencies; column `k` belongs to `classes[k]`.
    pub fn predict_proba(&self, features: &Tensor<f64>) -> Result<Tensor<f64>> {
        if features.cols() != self.n_features {
            return Err(EvalError::Length(format!("{} features, forest expects {}", features.cols(), self.n_features)));
        }
        let k = self.classes.len();
        let rows: Vec<Vec<f64>> = (0..features.rows())
            .into_par_iter()
            .map(|i| {
                let x = features.row(i);
                let mut p = vec![0.0; k];
                for t in &self.trees {
                    for (a, b) in p.iter_mut().zip(t.leaf(x)) {
                        *a += b;
                    }
                }
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= s);
                p
            })
            .collect();
        Ok(Tensor::new(vec![features.rows(), k], rows.concat())?)
    }

    /// Argmax of [`predict_proba`](Self::predict_proba); ties go to the lower class.
    pub fn predict(&self, features: &Tensor<f64>) -> Result<Vec<usize>> {
        let p = self.predict_proba(features)?;
        Ok((0..p.rows())
            .map(|i| {
                let row = p.row(i);
                let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                self.classes[best]
            })
            .collect())
    }
}
