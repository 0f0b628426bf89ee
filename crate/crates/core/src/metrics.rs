//! Retrieval and classification effectiveness: Recall@K in single-conflict
//! and multi-label form, macro-averaged precision/recall/F1 over a
//! confusion matrix, and elbow-based K selection.
//!
//! Single-conflict Recall@K is the fraction of queries whose relevant set
//! intersects the top-K retrieved candidates; the multi-label form averages
//! `|topK(q) n truth(q)| / |truth(q)|` over queries. With singleton truth
//! sets the two coincide.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default marginal-gain threshold for elbow selection.
pub const DEFAULT_ELBOW_EPSILON: f64 = 0.005;

/// Which Recall@K formulation to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallMode {
    SingleConflict,
    MultiLabel,
}

/// Recall@K over ranked retrieval output.
///
/// `retrieved` maps each query to its ranked candidate ids; `truth` maps
/// each query to its non-empty relevant set. Every query in `truth` must
/// appear in `retrieved` (an empty list is fine).
pub fn recall_at_k(
    retrieved: &BTreeMap<String, Vec<String>>,
    truth: &BTreeMap<String, BTreeSet<String>>,
    k: usize,
    mode: RecallMode,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Validation("k must be >= 1".into()));
    }
    if truth.is_empty() {
        return Err(Error::Validation("truth map is empty".into()));
    }
    let mut total = 0.0;
    for (q, relevant) in truth {
        if relevant.is_empty() {
            return Err(Error::Validation(format!(
                "query '{q}' has an empty relevant set"
            )));
        }
        let ranked = retrieved
            .get(q)
            .ok_or_else(|| Error::Validation(format!("query '{q}' missing from retrieval output")))?;
        let top_k: BTreeSet<&String> = ranked[..ranked.len().min(k)].iter().collect();
        let hits = top_k.iter().filter(|id| relevant.contains(**id)).count();
        total += match mode {
            RecallMode::SingleConflict => {
                if hits > 0 {
                    1.0
                } else {
                    0.0
                }
            }
            RecallMode::MultiLabel => hits as f64 / relevant.len() as f64,
        };
    }
    Ok(total / truth.len() as f64)
}

/// Recall@K for K = 1..=k_max; non-decreasing by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub points: Vec<(usize, f64)>,
    pub mode: RecallMode,
}

pub fn compute_recall_curve(
    retrieved: &BTreeMap<String, Vec<String>>,
    truth: &BTreeMap<String, BTreeSet<String>>,
    k_max: usize,
    mode: RecallMode,
) -> Result<RecallCurve> {
    let mut points = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        points.push((k, recall_at_k(retrieved, truth, k, mode)?));
    }
    Ok(RecallCurve { points, mode })
}

impl RecallCurve {
    /// CSV export: `K,recall` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("K,recall\n");
        for (k, r) in &self.points {
            let _ = writeln!(out, "{k},{r}");
        }
        out
    }
}

/// Smallest K whose marginal recall gain to K+1 falls below `epsilon`; the
/// largest K of the curve when no such point exists.
pub fn select_k_elbow(curve: &RecallCurve, epsilon: f64) -> Result<usize> {
    if curve.points.is_empty() {
        return Err(Error::Validation("recall curve is empty".into()));
    }
    for w in curve.points.windows(2) {
        if w[1].1 < w[0].1 - 1e-12 {
            return Err(Error::Validation(format!(
                "recall curve is not monotone at K={}",
                w[1].0
            )));
        }
    }
    for w in curve.points.windows(2) {
        if w[1].1 - w[0].1 < epsilon {
            return Ok(w[0].0);
        }
    }
    Ok(curve.points.last().unwrap().0)
}

/// Per-class one-vs-rest counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

/// One-vs-rest confusion matrix over a declared class set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: BTreeMap<String, ClassCounts>,
    pub total: usize,
}

impl ConfusionMatrix {
    /// Count predictions against truth. Labels outside `classes` are
    /// rejected.
    pub fn from_labels(pred: &[String], truth: &[String], classes: &[String]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Validation(format!(
                "prediction and truth lengths differ: {} vs {}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::Validation("no labels to score".into()));
        }
        let class_set: BTreeSet<&String> = classes.iter().collect();
        for label in pred.iter().chain(truth) {
            if !class_set.contains(label) {
                return Err(Error::Validation(format!(
                    "label '{label}' outside the declared class set {classes:?}"
                )));
            }
        }
        let mut counts: BTreeMap<String, ClassCounts> = classes
            .iter()
            .map(|c| {
                (
                    c.clone(),
                    ClassCounts {
                        tp: 0,
                        fp: 0,
                        fn_: 0,
                        tn: 0,
                    },
                )
            })
            .collect();
        for (p, t) in pred.iter().zip(truth) {
            for c in classes {
                let e = counts.get_mut(c).unwrap();
                match (p == c, t == c) {
                    (true, true) => e.tp += 1,
                    (true, false) => e.fp += 1,
                    (false, true) => e.fn_ += 1,
                    (false, false) => e.tn += 1,
                }
            }
        }
        Ok(ConfusionMatrix {
            classes: classes.to_vec(),
            counts,
            total: pred.len(),
        })
    }

    /// CSV export: `class,tp,fp,fn,tn` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,tp,fp,fn,tn\n");
        for c in &self.classes {
            let e = &self.counts[c];
            let _ = writeln!(out, "{c},{},{},{},{}", e.tp, e.fp, e.fn_, e.tn);
        }
        out
    }
}

/// Precision/recall/F1 for one class; 0/0 resolves to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Macro-averaged metrics with the per-class breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: BTreeMap<String, ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MacroMetrics {
    pub fn from_confusion(matrix: &ConfusionMatrix) -> MacroMetrics {
        let mut per_class = BTreeMap::new();
        for c in &matrix.classes {
            let e = &matrix.counts[c];
            let precision = ratio(e.tp, e.tp + e.fp);
            let recall = ratio(e.tp, e.tp + e.fn_);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            per_class.insert(
                c.clone(),
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                },
            );
        }
        let n = matrix.classes.len() as f64;
        MacroMetrics {
            macro_precision: per_class.values().map(|m| m.precision).sum::<f64>() / n,
            macro_recall: per_class.values().map(|m| m.recall).sum::<f64>() / n,
            macro_f1: per_class.values().map(|m| m.f1).sum::<f64>() / n,
            per_class,
        }
    }
}

/// Macro P/R/F1 with the class set taken as the sorted union of observed
/// labels.
pub fn macro_prf(pred: &[String], truth: &[String]) -> Result<MacroMetrics> {
    let classes: Vec<String> = pred
        .iter()
        .chain(truth)
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    macro_prf_with_classes(pred, truth, &classes)
}

/// Macro P/R/F1 over an explicit class set.
pub fn macro_prf_with_classes(
    pred: &[String],
    truth: &[String],
    classes: &[String],
) -> Result<MacroMetrics> {
    let matrix = ConfusionMatrix::from_labels(pred, truth, classes)?;
    Ok(MacroMetrics::from_confusion(&matrix))
}
