//! Downstream evaluation: a softmax-regression probe on node embeddings for
//! node classification, and on Hadamard pair features for link prediction.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::{self, GroupedPredictions, PairScores, Task};

/// Multinomial logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    /// `d x K`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub l2: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            l2: 1e-4,
            epochs: 300,
            lr: 0.1,
        }
    }
}

fn softmax_rows(logits: &mut DMatrix<f64>) {
    for mut row in logits.row_iter_mut() {
        let max = row.max();
        row.apply(|x| *x = (*x - max).exp());
        let sum = row.sum();
        row.unscale_mut(sum);
    }
}

impl LinearClassifier {
    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn predict_proba(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut logits = x * &self.weights;
        for mut row in logits.row_iter_mut() {
            row += self.bias.transpose();
        }
        softmax_rows(&mut logits);
        logits
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let p = self.predict_proba(x);
        p.row_iter()
            .map(|r| metrics::argmax(&r.iter().copied().collect::<Vec<_>>()))
            .collect()
    }

    /// Mean cross-entropy plus `l2/2 ‖W‖²`.
    pub fn loss(&self, x: &DMatrix<f64>, y: &[usize], l2: f64) -> f64 {
        let p = self.predict_proba(x);
        let ce: f64 = y
            .iter()
            .enumerate()
            .map(|(i, &c)| -p[(i, c)].max(1e-300).ln())
            .sum::<f64>()
            / y.len() as f64;
        ce + 0.5 * l2 * self.weights.norm_squared()
    }
}

/// Full-batch gradient descent from zero weights. Returns the classifier and
/// the regularized loss before each step plus after the last.
pub fn train_linear_classifier_traced(
    x: &DMatrix<f64>,
    y: &[usize],
    classes: usize,
    params: &ClassifierParams,
) -> Result<(LinearClassifier, Vec<f64>)> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let mut counts = vec![0usize; classes];
    for &c in y {
        if c >= classes {
            return Err(Error::IndexOutOfRange { index: c, len: classes });
        }
        counts[c] += 1;
    }
    if classes < 2 || counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::SingleClass);
    }
    let (n, d) = (x.nrows(), x.ncols());
    let mut model = LinearClassifier {
        weights: DMatrix::zeros(d, classes),
        bias: DVector::zeros(classes),
    };
    let mut onehot = DMatrix::zeros(n, classes);
    for (i, &c) in y.iter().enumerate() {
        onehot[(i, c)] = 1.0;
    }
    let xt = x.transpose();
    let mut trace = Vec::with_capacity(params.epochs + 1);
    for _ in 0..params.epochs {
        let p = model.predict_proba(x);
        trace.push(model.loss(x, y, params.l2));
        let residual = (p - &onehot) / n as f64;
        let gw = &xt * &residual + &model.weights * params.l2;
        let gb: DVector<f64> = residual.row_sum().transpose();
        model.weights -= gw * params.lr;
        model.bias -= gb * params.lr;
    }
    trace.push(model.loss(x, y, params.l2));
    Ok((model, trace))
}

pub fn train_linear_classifier(
    x: &DMatrix<f64>,
    y: &[usize],
    classes: usize,
    params: &ClassifierParams,
) -> Result<LinearClassifier> {
    train_linear_classifier_traced(x, y, classes, params).map(|(m, _)| m)
}

fn rows(e: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), e.ncols(), |i, j| e[(idx[i], j)])
}

/// Train / validation / test node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class shuffled split with `train` and `val` fractions; the rest is test.
pub fn stratified_split(labels: &[usize], train: f64, val: f64, seed: u64) -> Result<NodeSplit> {
    if !(train > 0.0 && val >= 0.0 && train + val < 1.0) {
        return Err(Error::Config(format!("bad split ratios {train}/{val}")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = NodeSplit {
        train: vec![],
        val: vec![],
        test: vec![],
    };
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64 * train).round() as usize).clamp(1, idx.len());
        let n_val = ((idx.len() as f64 * val).round() as usize).min(idx.len() - n_train);
        split.train.extend_from_slice(&idx[..n_train]);
        split.val.extend_from_slice(&idx[n_train..n_train + n_val]);
        split.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcConfig {
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub seed: u64,
    /// Advantaged classes; `None` means `{1}` for binary labels and every
    /// class otherwise.
    pub advantaged: Option<Vec<usize>>,
    pub classifier: ClassifierParams,
}

impl Default for NcConfig {
    fn default() -> Self {
        NcConfig {
            train_ratio: 0.5,
            val_ratio: 0.25,
            seed: 0,
            advantaged: None,
            classifier: ClassifierParams::default(),
        }
    }
}

/// Fairness numbers for one sensitive attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFairness {
    pub attribute: String,
    pub delta_dp: f64,
    pub delta_eo: f64,
}

/// One evaluation run. Serialized as a flat object; timings live elsewhere so
/// that reports from identical inputs compare byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub auroc: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ap: Option<f64>,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub micro_f1: Option<f64>,
    pub delta_dp: f64,
    pub delta_eo: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_attribute: Vec<GroupFairness>,
}

impl EvalReport {
    /// Named scalar metrics, for multi-run summaries.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![("auroc", self.auroc)];
        if let Some(ap) = self.ap {
            out.push(("ap", ap));
        }
        out.push(("accuracy", self.accuracy));
        if let Some(f1) = self.f1 {
            out.push(("f1", f1));
        }
        if let Some(m) = self.micro_f1 {
            out.push(("micro_f1", m));
        }
        out.push(("delta_dp", self.delta_dp));
        out.push(("delta_eo", self.delta_eo));
        out
    }
}

/// Named sensitive attribute: per-node group codes.
#[derive(Debug, Clone)]
pub struct GroupColumn {
    pub name: String,
    pub codes: Vec<usize>,
}

/// Classifier trained on the training rows of `e` only.
pub fn fit_node_classifier(e: &DMatrix<f64>, labels: &[usize], split: &NodeSplit, params: &ClassifierParams) -> Result<LinearClassifier> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let train_y: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    for c in 0..classes {
        if !train_y.contains(&c) {
            return Err(Error::ClassAbsent(c));
        }
    }
    train_linear_classifier(&rows(e, &split.train), &train_y, classes, params)
}

/// Node classification with a stratified split. Fairness is reported for
/// every group column; the first one fills `delta_dp` / `delta_eo`.
pub fn nc_evaluate(e: &DMatrix<f64>, labels: &[usize], groups: &[GroupColumn], cfg: &NcConfig) -> Result<EvalReport> {
    if labels.len() != e.nrows() {
        return Err(Error::DimensionMismatch {
            expected: e.nrows(),
            got: labels.len(),
        });
    }
    if groups.is_empty() {
        return Err(Error::EmptyGroups);
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let split = stratified_split(labels, cfg.train_ratio, cfg.val_ratio, cfg.seed)?;
    let clf = fit_node_classifier(e, labels, &split, &cfg.classifier)?;

    let x_test = rows(e, &split.test);
    let y_test: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    let probs = clf.predict_proba(&x_test);
    let prob_rows: Vec<Vec<f64>> = probs.row_iter().map(|r| r.iter().copied().collect()).collect();
    let y_hat: Vec<usize> = prob_rows.iter().map(|p| metrics::argmax(p)).collect();
    let utility = metrics::utility_metrics(&prob_rows, &y_test, Task::NodeClassification { classes })?;

    let advantaged = cfg
        .advantaged
        .clone()
        .unwrap_or_else(|| if classes <= 2 { vec![1] } else { (0..classes).collect() });
    let mut per_attribute = Vec::with_capacity(groups.len());
    for col in groups {
        let gp = GroupedPredictions {
            y_hat: y_hat.clone(),
            y: Some(y_test.clone()),
            group: split.test.iter().map(|&i| col.codes[i]).collect(),
            advantaged: advantaged.clone(),
        };
        per_attribute.push(GroupFairness {
            attribute: col.name.clone(),
            delta_dp: metrics::delta_dp(&gp)?,
            delta_eo: metrics::delta_eo(&gp)?,
        });
    }
    Ok(EvalReport {
        task: "nc".into(),
        auroc: utility.auroc,
        ap: None,
        accuracy: utility.accuracy,
        f1: if classes <= 2 { utility.f1 } else { None },
        micro_f1: utility.micro_f1,
        delta_dp: per_attribute[0].delta_dp,
        delta_eo: per_attribute[0].delta_eo,
        per_attribute: if groups.len() > 1 { per_attribute } else { vec![] },
    })
}

/// Held-out edges and sampled non-edges for link prediction.
#[derive(Debug, Clone)]
pub struct LpSplit {
    pub train_graph: Graph,
    pub train_pos: Vec<(usize, usize)>,
    pub train_neg: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
    pub seed: u64,
}

/// Removes `⌊ratio |E|⌋` uniformly chosen edges as test positives and samples
/// as many non-edges of the full graph for test, plus one non-edge per
/// remaining training edge. Self-loops are neither sampled nor removed.
pub fn lp_split(g: &Graph, ratio: f64, seed: u64) -> Result<LpSplit> {
    const MIN_EDGES: usize = 10;
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Config(format!("link-prediction ratio {ratio} outside [0, 1)")));
    }
    let mut edges: Vec<(usize, usize, f64)> = g.edges().filter(|&(u, v, _)| u != v).collect();
    if edges.len() < MIN_EDGES {
        return Err(Error::TooFewEdges {
            need: MIN_EDGES,
            have: edges.len(),
        });
    }
    let n = g.node_count();
    let n_test = (ratio * edges.len() as f64).floor() as usize;
    let n_train = edges.len() - n_test;
    let need = n_test + n_train;
    let possible = n * (n - 1) / 2 - edges.len();
    if possible < need {
        return Err(Error::NotEnoughNonEdges { need, have: possible });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges.shuffle(&mut rng);
    let mut test_pos: Vec<(usize, usize)> = edges[..n_test].iter().map(|&(u, v, _)| (u, v)).collect();
    let mut train_pos: Vec<(usize, usize)> = edges[n_test..].iter().map(|&(u, v, _)| (u, v)).collect();
    test_pos.sort_unstable();
    train_pos.sort_unstable();

    let negatives = sample_non_edges(g, need, possible, &mut rng);
    let test_neg = negatives[..n_test].to_vec();
    let train_neg = negatives[n_test..].to_vec();

    let loops = (0..n).filter_map(|u| {
        let w = g.self_loop(u);
        (w > 0.0).then_some((u, u, w))
    });
    let kept = train_pos.iter().map(|&(u, v)| (u, v, g.weight(u, v))).chain(loops);
    let train_graph = Graph::from_named_edges(g.names().to_vec(), kept.collect::<Vec<_>>())?;
    Ok(LpSplit {
        train_graph,
        train_pos,
        train_neg,
        test_pos,
        test_neg,
        seed,
    })
}

fn sample_non_edges(g: &Graph, need: usize, possible: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let n = g.node_count();
    if need * 2 > possible {
        // Dense regime: enumerate every non-edge and shuffle.
        let mut all: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| g.weight(u, v) == 0.0)
            .collect();
        all.shuffle(rng);
        all.truncate(need);
        return all;
    }
    let mut seen = HashSet::with_capacity(need);
    let mut out = Vec::with_capacity(need);
    while out.len() < need {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let pair = (u.min(v), u.max(v));
        if g.weight(pair.0, pair.1) > 0.0 || !seen.insert(pair) {
            continue;
        }
        out.push(pair);
    }
    out
}

/// Row per pair: `E[u] ⊙ E[v]`.
pub fn hadamard_features(e: &DMatrix<f64>, pairs: &[(usize, usize)]) -> Result<DMatrix<f64>> {
    let n = e.nrows();
    for &(u, v) in pairs {
        for x in [u, v] {
            if x >= n {
                return Err(Error::IndexOutOfRange { index: x, len: n });
            }
        }
    }
    Ok(DMatrix::from_fn(pairs.len(), e.ncols(), |i, j| {
        let (u, v) = pairs[i];
        e[(u, j)] * e[(v, j)]
    }))
}

/// Classifier on Hadamard features of the training pairs.
pub fn fit_link_classifier(e: &DMatrix<f64>, split: &LpSplit, params: &ClassifierParams) -> Result<LinearClassifier> {
    let pairs: Vec<(usize, usize)> = split.train_pos.iter().chain(&split.train_neg).copied().collect();
    let y: Vec<usize> = std::iter::repeat_n(1, split.train_pos.len())
        .chain(std::iter::repeat_n(0, split.train_neg.len()))
        .collect();
    train_linear_classifier(&hadamard_features(e, &pairs)?, &y, 2, params)
}

/// Link prediction on a split. `groups` supplies the sensitive attribute used
/// for the intra/inter-group score gaps.
pub fn lp_evaluate(e: &DMatrix<f64>, split: &LpSplit, groups: &GroupColumn, params: &ClassifierParams) -> Result<EvalReport> {
    if e.nrows() != split.train_graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: split.train_graph.node_count(),
            got: e.nrows(),
        });
    }
    let clf = fit_link_classifier(e, split, params)?;
    let pairs: Vec<(usize, usize)> = split.test_pos.iter().chain(&split.test_neg).copied().collect();
    let y: Vec<usize> = std::iter::repeat_n(1, split.test_pos.len())
        .chain(std::iter::repeat_n(0, split.test_neg.len()))
        .collect();
    let probs = clf.predict_proba(&hadamard_features(e, &pairs)?);
    let scores: Vec<f64> = (0..pairs.len()).map(|i| probs[(i, 1)]).collect();
    lp_report(&scores, &pairs, &y, groups)
}

/// Utility and fairness numbers for scored test pairs.
pub fn lp_report(scores: &[f64], pairs: &[(usize, usize)], y: &[usize], groups: &GroupColumn) -> Result<EvalReport> {
    let wrapped: Vec<Vec<f64>> = scores.iter().map(|&s| vec![s]).collect();
    let utility = metrics::utility_metrics(&wrapped, y, Task::LinkPrediction)?;
    let ps = PairScores {
        score: scores.to_vec(),
        is_edge: y.iter().map(|&l| l == 1).collect(),
        group_u: pairs.iter().map(|&(u, _)| groups.codes[u]).collect(),
        group_v: pairs.iter().map(|&(_, v)| groups.codes[v]).collect(),
    };
    let (dp, eo) = metrics::lp_fairness(&ps)?;
    Ok(EvalReport {
        task: "lp".into(),
        auroc: utility.auroc,
        ap: utility.ap,
        accuracy: utility.accuracy,
        f1: None,
        micro_f1: None,
        delta_dp: dp,
        delta_eo: eo,
        per_attribute: vec![],
    })
}

/// Node labels read from a `node,label` table, as dense class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    /// Class id per node, aligned with the graph the labels were read for.
    pub class: Vec<usize>,
    /// Original label text per class id.
    pub values: Vec<String>,
}

impl Labels {
    pub fn classes(&self) -> usize {
        self.values.len()
    }
}

/// Reads labels for every node of `g`. Class ids follow numeric order when all
/// labels are integers and lexicographic order otherwise.
pub fn read_labels<R: std::io::Read>(reader: R, g: &Graph) -> Result<Labels> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut raw: Vec<Option<String>> = vec![None; g.node_count()];
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::Parse {
                line: i + 2,
                msg: "expected `node,label`".into(),
            });
        }
        // Labels for nodes outside the graph are ignored.
        if let Some(u) = g.index_of(&record[0]) {
            raw[u] = Some(record[1].to_string());
        }
    }
    let raw: Vec<String> = raw
        .into_iter()
        .enumerate()
        .map(|(u, l)| l.ok_or_else(|| Error::MissingNode(g.name(u).to_string())))
        .collect::<Result<_>>()?;
    let mut values: Vec<String> = raw.clone();
    values.sort();
    values.dedup();
    if values.iter().all(|v| v.parse::<i64>().is_ok()) {
        values.sort_by_key(|v| v.parse::<i64>().unwrap());
    }
    let class = raw
        .iter()
        .map(|l| values.iter().position(|v| v == l).unwrap())
        .collect();
    Ok(Labels { class, values })
}

/// Mean and population standard deviation of each metric across runs.
pub fn summarize(reports: &[EvalReport]) -> Vec<(String, f64, f64)> {
    let Some(first) = reports.first() else {
        return vec![];
    };
    first
        .scalars()
        .into_iter()
        .enumerate()
        .map(|(k, (name, _))| {
            let xs: Vec<f64> = reports.iter().map(|r| r.scalars()[k].1).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            (name.to_string(), mean, var.sqrt())
        })
        .collect()
}

pub fn write_summary_csv<W: std::io::Write>(rows: &[(String, f64, f64)], mut out: W) -> Result<()> {
    writeln!(out, "metric,mean,std")?;
    for (name, mean, std) in rows {
        writeln!(out, "{name},{mean:?},{std:?}")?;
    }
    Ok(())
}
