//! Class-imbalance-aware classification metrics.
//!
//! Averages run over the classes present in `y_true`; predicted classes that
//! never occur in `y_true` are reported in [`Score::excluded`].

use std::collections::BTreeMap;

use flowbridge_core::Tensor;

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub value: f64,
    /// Classes seen in predictions or scores but absent from `y_true`.
    pub excluded: Vec<usize>,
}

impl Score {
    pub fn warnings(&self, metric: &str) -> Vec<String> {
        self.excluded
            .iter()
            .map(|c| format!("{metric}: class {c} absent from ground truth, excluded from averaging"))
            .collect()
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(EvalError::Length(format!("{a} labels vs {b} predictions")));
    }
    if a == 0 {
        return Err(EvalError::Input("no samples".into()));
    }
    Ok(())
}

fn support(y: &[usize]) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for &c in y {
        *m.entry(c).or_insert(0) += 1;
    }
    m
}

fn excluded(present: &BTreeMap<usize, usize>, others: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = others.into_iter().filter(|c| !present.contains_key(c)).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Unweighted mean of per-class recall.
pub fn balanced_accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<Score> {
    check_len(y_true.len(), y_pred.len())?;
    let sup = support(y_true);
    let recall_sum: f64 = sup
        .iter()
        .map(|(&c, &n)| {
            let hit = y_true.iter().zip(y_pred).filter(|(t, p)| **t == c && **p == c).count();
            hit as f64 / n as f64
        })
        .sum();
    Ok(Score {
        value: recall_sum / sup.len() as f64,
        excluded: excluded(&sup, y_pred.iter().copied()),
    })
}

/// Support-weighted mean of per-class F1.
pub fn f1_weighted(y_true: &[usize], y_pred: &[usize]) -> Result<Score> {
    check_len(y_true.len(), y_pred.len())?;
    let sup = support(y_true);
    let mut total = 0.0;
    for (&c, &n) in &sup {
        let tp = y_true.iter().zip(y_pred).filter(|(t, p)| **t == c && **p == c).count();
        let predicted = y_pred.iter().filter(|&&p| p == c).count();
        // F1 = 2 tp / (|true c| + |predicted c|)
        let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (n + predicted) as f64 };
        total += n as f64 * f1;
    }
    Ok(Score {
        value: total / y_true.len() as f64,
        excluded: excluded(&sup, y_pred.iter().copied()),
    })
}

/// Mann-Whitney AUC of `scores` for `positive` vs the rest, ties credited 0.5.
pub fn binary_auroc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // midrank of the tie group, 1-based
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// One-vs-rest AUROC averaged with class-support weights. Column `k` of
/// `probs` scores `classes[k]`.
pub fn auroc_weighted(y_true: &[usize], probs: &Tensor<f64>, classes: &[usize]) -> Result<Score> {
    check_len(y_true.len(), probs.rows())?;
    if probs.cols() != classes.len() {
        return Err(EvalError::Length(format!("{} score columns for {} classes", probs.cols(), classes.len())));
    }
    let sup = support(y_true);
    let mut total = 0.0;
    let mut weight = 0usize;
    for (&c, &n) in &sup {
        let Some(k) = classes.iter().position(|&x| x == c) else {
            return Err(EvalError::Input(format!("class {c} has no score column")));
        };
        let scores: Vec<f64> = (0..probs.rows()).map(|i| probs.row(i)[k]).collect();
        let positive: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
        if let Some(auc) = binary_auroc(&scores, &positive) {
            total += n as f64 * auc;
            weight += n;
        }
    }
    if weight == 0 {
        return Err(EvalError::Input("AUROC needs at least two classes in ground truth".into()));
    }
    Ok(Score {
        value: total / weight as f64,
        excluded: excluded(&sup, classes.iter().copied()),
    })
}
