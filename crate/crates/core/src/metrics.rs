//! Accuracy, ROC curves and AUC.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Index of the largest value; ties go to the smaller index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows of `probs` (one row per sample) whose argmax equals
/// the label.
pub fn accuracy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let n = probs.shape().n;
    if n == 0 || labels.len() != n {
        return Err(Error::Usage(format!(
            "accuracy needs one label per row, got {} labels for {n} rows",
            labels.len()
        )));
    }
    let hits = (0..n)
        .filter(|&i| argmax(probs.sample(i)) == labels[i])
        .count();
    Ok(hits as f64 / n as f64)
}

/// Positive-class (class 1) probability per sample.
pub fn positive_scores(probs: &Tensor) -> Result<Vec<f64>> {
    let s = probs.shape();
    if s.sample_len() < 2 {
        return Err(Error::shape(format!(
            "need at least two class columns, got {s}"
        )));
    }
    Ok((0..s.n).map(|i| probs.sample(i)[1]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    /// Samples scoring `>= threshold` are called positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// From threshold `+inf` at (0, 0) down to the lowest score at (1, 1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn class_counts(scores: &[f64], labels: &[usize]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Data(format!("score {s} is not a number")));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Data(format!("ROC needs binary labels, got {l}")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Usage(
            "ROC undefined: labels contain a single class".into(),
        ));
    }
    Ok((pos, neg))
}

/// ROC staircase over the distinct scores. Equal scores form a single step,
/// so the trapezoidal area equals the Mann–Whitney statistic exactly; the
/// area is accumulated in integers and divided once.
pub fn roc_curve(scores: &[f64], labels: &[usize]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area in units of one positive-negative pair.
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        area2 += gn as u128 * (2 * tp + gp) as u128;
        tp += gp;
        fp += gn;
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let auc = area2 as f64 / (2 * pos as u128 * neg as u128) as f64;
    Ok(RocCurve { points, auc })
}

/// Fraction of positive/negative pairs ranked correctly, ties counting one
/// half. Quadratic; used as an oracle for [`roc_curve`].
pub fn auc_from_pairs(scores: &[f64], labels: &[usize]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut twice: u128 = 0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] == 0 {
                twice += if si > sj {
                    2
                } else if si == sj {
                    1
                } else {
                    0
                };
            }
        }
    }
    Ok(twice as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// CSV with header `threshold,fpr,tpr`, one row per point, shortest
/// round-trip float formatting (`inf` for the first threshold).
pub fn roc_to_csv(curve: &RocCurve) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in &curve.points {
        w.write_record([
            p.threshold.to_string(),
            p.fpr.to_string(),
            p.tpr.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii csv"))
}

pub fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    let text = roc_to_csv(curve)?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
