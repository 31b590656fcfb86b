//! Structure-recovery metrics against a known truth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{lower_positions, SupportGraph};

/// Which `(group, position)` cells a metric is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSubset {
    Group(usize),
    /// Every group, every lower-triangular position.
    All,
    /// Every group, restricted to positions where the true graphs disagree.
    Differential,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// `TP / (TP + FN)`, 0 when there are no positives.
    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `FP / (FP + TN)`, 0 when there are no negatives.
    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn mcc(&self) -> f64 {
        mcc(self)
    }

    fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, tn: self.tn + o.tn, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Matthews correlation coefficient; 0 when any marginal count is zero.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / den.sqrt()
}

/// Positions where the `K` true indicators are not all equal.
pub fn differential_positions(truth: &SupportGraph) -> Vec<(usize, usize)> {
    lower_positions(truth.p())
        .filter(|&(j, l)| {
            let first = truth.has_edge(0, j, l);
            (1..truth.k()).any(|k| truth.has_edge(k, j, l) != first)
        })
        .collect()
}

fn cells(truth: &SupportGraph, subset: EdgeSubset) -> Result<Vec<(usize, usize, usize)>> {
    let all_groups = |positions: Vec<(usize, usize)>| {
        (0..truth.k())
            .flat_map(|k| positions.iter().map(move |&(j, l)| (k, j, l)))
            .collect::<Vec<_>>()
    };
    Ok(match subset {
        EdgeSubset::Group(k) => {
            if k >= truth.k() {
                return Err(Error::ShapeMismatch(format!("group {k} out of range for K = {}", truth.k())));
            }
            lower_positions(truth.p()).map(|(j, l)| (k, j, l)).collect()
        }
        EdgeSubset::All => all_groups(lower_positions(truth.p()).collect()),
        EdgeSubset::Differential => all_groups(differential_positions(truth)),
    })
}

fn check_shapes(p: usize, k: usize, truth: &SupportGraph) -> Result<()> {
    if p != truth.p() || k != truth.k() {
        return Err(Error::ShapeMismatch(format!(
            "estimate is {k} groups x {p} variables, truth is {} x {}",
            truth.k(),
            truth.p()
        )));
    }
    Ok(())
}

pub fn confusion(selected: &SupportGraph, truth: &SupportGraph, subset: EdgeSubset) -> Result<ConfusionCounts> {
    check_shapes(selected.p(), selected.k(), truth)?;
    let mut counts = ConfusionCounts::default();
    for (k, j, l) in cells(truth, subset)? {
        counts.record(selected.has_edge(k, j, l), truth.has_edge(k, j, l));
    }
    Ok(counts)
}

/// ROC curve points `(FPR, TPR)` from (0, 0) to (1, 1), one per distinct score.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let positives = labels.iter().filter(|&&b| b).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateRoc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    Ok(points)
}

/// Trapezoidal area under the ROC curve of `scores` against `labels`.
pub fn auc_scores(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let points = roc_points(scores, labels)?;
    Ok(points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum())
}

/// AUC of inclusion probabilities (entry `(j, l)` per group) against the truth.
pub fn auc(inclusion: &[DMatrix<f64>], truth: &SupportGraph, subset: EdgeSubset) -> Result<f64> {
    let p = inclusion.first().map(|m| m.nrows()).unwrap_or(0);
    check_shapes(p, inclusion.len(), truth)?;
    let (scores, labels) = scores_and_labels(inclusion, truth, subset)?;
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::InvalidData("inclusion probabilities must lie in [0, 1]".into()));
    }
    auc_scores(&scores, &labels)
}

pub fn scores_and_labels(
    inclusion: &[DMatrix<f64>],
    truth: &SupportGraph,
    subset: EdgeSubset,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let cells = cells(truth, subset)?;
    Ok(cells.iter().map(|&(k, j, l)| (inclusion[k][(j, l)], truth.has_edge(k, j, l))).unzip())
}

/// Edges unique to each group, and edges present in every group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeAccounting {
    pub unique: Vec<usize>,
    pub shared_by_all: usize,
}

pub fn edge_accounting(graph: &SupportGraph) -> Result<EdgeAccounting> {
    if graph.k() < 2 {
        return Err(Error::ShapeMismatch("edge accounting needs at least two groups".into()));
    }
    let mut unique = vec![0; graph.k()];
    let mut shared_by_all = 0;
    for (j, l) in lower_positions(graph.p()) {
        let owners: Vec<usize> = (0..graph.k()).filter(|&k| graph.has_edge(k, j, l)).collect();
        if owners.len() == graph.k() {
            shared_by_all += 1;
        } else if owners.len() == 1 {
            unique[owners[0]] += 1;
        }
    }
    Ok(EdgeAccounting { unique, shared_by_all })
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub group: String,
    pub measure: String,
    pub value: f64,
}

pub fn subset_label(subset: EdgeSubset) -> String {
    match subset {
        EdgeSubset::Group(k) => format!("Group {}", k + 1),
        EdgeSubset::All => "All edges".into(),
        EdgeSubset::Differential => "Differential edges".into(),
    }
}

/// TPR, FPR, MCC and (when inclusion probabilities are given) AUC rows for
/// each group and for the pooled and differential edge sets. Rows whose ROC is
/// undefined are left out; the differential block is omitted when the true
/// graphs coincide.
pub fn metrics_table(
    selected: &SupportGraph,
    inclusion: Option<&[DMatrix<f64>]>,
    truth: &SupportGraph,
) -> Result<Vec<MetricRow>> {
    let mut subsets: Vec<EdgeSubset> = (0..truth.k()).map(EdgeSubset::Group).collect();
    subsets.push(EdgeSubset::All);
    if truth.k() > 1 && !differential_positions(truth).is_empty() {
        subsets.push(EdgeSubset::Differential);
    }
    let mut rows = Vec::new();
    for subset in subsets {
        let group = subset_label(subset);
        let c = confusion(selected, truth, subset)?;
        for (measure, value) in [("TPR", c.tpr()), ("FPR", c.fpr()), ("MCC", c.mcc())] {
            rows.push(MetricRow { group: group.clone(), measure: measure.into(), value });
        }
        if let Some(inc) = inclusion {
            match auc(inc, truth, subset) {
                Ok(value) => rows.push(MetricRow { group: group.clone(), measure: "AUC".into(), value }),
                Err(Error::DegenerateRoc) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(rows)
}
