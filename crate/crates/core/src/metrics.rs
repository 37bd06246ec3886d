//! Group-fairness and utility metrics.
//!
//! `delta_dp` / `delta_eo` average, over the advantaged classes, the
//! population standard deviation across groups of the per-group positive rate
//! (resp. true-positive rate). With two groups and one advantaged class they
//! reduce to half the usual absolute differences.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GroupedPredictions {
    pub y_hat: Vec<usize>,
    pub y: Option<Vec<usize>>,
    pub group: Vec<usize>,
    pub advantaged: Vec<usize>,
}

impl GroupedPredictions {
    fn check(&self) -> Result<()> {
        let n = self.y_hat.len();
        if self.group.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.group.len(),
            });
        }
        if let Some(y) = &self.y {
            if y.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: y.len(),
                });
            }
        }
        if self.advantaged.is_empty() {
            return Err(Error::Config("advantaged class set is empty".into()));
        }
        if n == 0 {
            return Err(Error::EmptyGroups);
        }
        Ok(())
    }
}

fn population_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Demographic-parity dispersion.
pub fn delta_dp(gp: &GroupedPredictions) -> Result<f64> {
    gp.check()?;
    // BTreeMap keeps group order fixed so the result is bit-reproducible.
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &g) in gp.group.iter().enumerate() {
        members.entry(g).or_default().push(i);
    }
    let mut total = 0.0;
    for &class in &gp.advantaged {
        let rates: Vec<f64> = members
            .values()
            .map(|idx| {
                let hits = idx.iter().filter(|&&i| gp.y_hat[i] == class).count();
                hits as f64 / idx.len() as f64
            })
            .collect();
        total += population_std(&rates);
    }
    Ok(total / gp.advantaged.len() as f64)
}

/// Equality-of-opportunity dispersion. Groups with no member of a class are
/// left out for that class; a class seen in fewer than two groups adds 0.
pub fn delta_eo(gp: &GroupedPredictions) -> Result<f64> {
    gp.check()?;
    let y = gp
        .y
        .as_ref()
        .ok_or_else(|| Error::Config("delta_eo needs true labels".into()))?;
    let mut total = 0.0;
    for &class in &gp.advantaged {
        let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for i in 0..y.len() {
            if y[i] == class {
                let e = counts.entry(gp.group[i]).or_default();
                e.0 += 1;
                if gp.y_hat[i] == class {
                    e.1 += 1;
                }
            }
        }
        if counts.len() < 2 {
            warn!(
                "class {class} occurs in {} group(s); contributes 0 to delta_eo",
                counts.len()
            );
            continue;
        }
        let tprs: Vec<f64> = counts
            .values()
            .map(|&(n, hit)| hit as f64 / n as f64)
            .collect();
        total += population_std(&tprs);
    }
    Ok(total / gp.advantaged.len() as f64)
}

/// Link-prediction scores with the group of both endpoints.
#[derive(Debug, Clone)]
pub struct PairScores {
    pub score: Vec<f64>,
    pub is_edge: Vec<bool>,
    pub group_u: Vec<usize>,
    pub group_v: Vec<usize>,
}

/// `(ΔDP_LP, ΔEO_LP)`: absolute gap between the mean score of intra-group and
/// inter-group pairs, over all pairs and over true edges only.
pub fn lp_fairness(ps: &PairScores) -> Result<(f64, f64)> {
    let mut sums = [[0.0f64; 2]; 2];
    let mut counts = [[0usize; 2]; 2];
    for i in 0..ps.score.len() {
        let intra = usize::from(ps.group_u[i] == ps.group_v[i]);
        sums[0][intra] += ps.score[i];
        counts[0][intra] += 1;
        if ps.is_edge[i] {
            sums[1][intra] += ps.score[i];
            counts[1][intra] += 1;
        }
    }
    const NAMES: [[&str; 2]; 2] = [
        ["inter-group pairs", "intra-group pairs"],
        ["inter-group edges", "intra-group edges"],
    ];
    let mut gaps = [0.0; 2];
    for s in 0..2 {
        for k in 0..2 {
            if counts[s][k] == 0 {
                return Err(Error::EmptyStratum(NAMES[s][k]));
            }
        }
        let intra = sums[s][1] / counts[s][1] as f64;
        let inter = sums[s][0] / counts[s][0] as f64;
        gaps[s] = (intra - inter).abs();
    }
    Ok((gaps[0], gaps[1]))
}

/// Area under the ROC curve via the rank-sum statistic, ties sharing the
/// average rank.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
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
        // Ranks are 1-based; the tie block spans ranks i+1..=j+1.
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: `Σ (R_k − R_{k−1}) P_k` over descending distinct
/// score thresholds.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            seen += 1;
            if labels[k] {
                tp += 1;
            }
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / pred.len() as f64
}

/// F1 of the positive class (label 1).
pub fn f1_binary(pred: &[usize], truth: &[usize]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == 1, t == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Micro-averaged F1. For single-label multi-class prediction this equals
/// accuracy.
pub fn micro_f1(pred: &[usize], truth: &[usize]) -> f64 {
    accuracy(pred, truth)
}

/// Macro one-vs-rest AUROC over the classes present in `truth`.
pub fn auroc_ovr(probs: &[Vec<f64>], truth: &[usize]) -> Result<f64> {
    let classes = probs.first().map_or(0, Vec::len);
    let mut total = 0.0;
    let mut used = 0;
    for k in 0..classes {
        let labels: Vec<bool> = truth.iter().map(|&t| t == k).collect();
        let scores: Vec<f64> = probs.iter().map(|p| p[k]).collect();
        match auroc(&scores, &labels) {
            Ok(a) => {
                total += a;
                used += 1;
            }
            Err(Error::SingleClass) => continue,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::SingleClass);
    }
    Ok(total / used as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Node classification; `classes` distinct labels.
    NodeClassification { classes: usize },
    /// Pair scoring in `[0, 1]` thresholded at 0.5.
    LinkPrediction,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UtilityMetrics {
    pub auroc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap: Option<f64>,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub micro_f1: Option<f64>,
}

/// Utility metrics for per-instance class probabilities (`scores[i][k]`).
/// For link prediction each inner vector holds the single positive score.
pub fn utility_metrics(scores: &[Vec<f64>], y_true: &[usize], task: Task) -> Result<UtilityMetrics> {
    match task {
        Task::LinkPrediction => {
            let s: Vec<f64> = scores.iter().map(|v| v[0]).collect();
            let labels: Vec<bool> = y_true.iter().map(|&y| y == 1).collect();
            let pred: Vec<usize> = s.iter().map(|&x| usize::from(x >= 0.5)).collect();
            Ok(UtilityMetrics {
                auroc: auroc(&s, &labels)?,
                ap: Some(average_precision(&s, &labels)?),
                accuracy: accuracy(&pred, y_true),
                f1: Some(f1_binary(&pred, y_true)),
                micro_f1: None,
            })
        }
        Task::NodeClassification { classes } if classes <= 2 => {
            let s: Vec<f64> = scores.iter().map(|v| v[1]).collect();
            let labels: Vec<bool> = y_true.iter().map(|&y| y == 1).collect();
            let pred: Vec<usize> = s.iter().map(|&x| usize::from(x >= 0.5)).collect();
            Ok(UtilityMetrics {
                auroc: auroc(&s, &labels)?,
                ap: None,
                accuracy: accuracy(&pred, y_true),
                f1: Some(f1_binary(&pred, y_true)),
                micro_f1: Some(micro_f1(&pred, y_true)),
            })
        }
        Task::NodeClassification { .. } => {
            let pred: Vec<usize> = scores.iter().map(|p| argmax(p)).collect();
            Ok(UtilityMetrics {
                auroc: auroc_ovr(scores, y_true)?,
                ap: None,
                accuracy: accuracy(&pred, y_true),
                f1: None,
                micro_f1: Some(micro_f1(&pred, y_true)),
            })
        }
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}
