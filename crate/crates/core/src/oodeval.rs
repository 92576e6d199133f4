//! Out-of-distribution detection metrics over maximum-softmax scores.
//!
//! Scores follow the convention "higher = more in-distribution". For AUPR
//! the OOD examples are the positive class, ranked by ascending score.

use std::io::Write;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::netcore::{self, NetworkParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub in_scores: Vec<f64>,
    pub out_scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new(in_scores: Vec<f64>, out_scores: Vec<f64>) -> Result<Self> {
        if in_scores.is_empty() || out_scores.is_empty() {
            return Err(LabError::input("score sets must be nonempty"));
        }
        if in_scores.iter().chain(&out_scores).any(|s| !s.is_finite()) {
            return Err(LabError::input("scores must be finite"));
        }
        Ok(Self {
            in_scores,
            out_scores,
        })
    }

    /// Roles swapped: the OOD set becomes the in-distribution set.
    pub fn swapped(&self) -> Self {
        Self {
            in_scores: self.out_scores.clone(),
            out_scores: self.in_scores.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OodMetrics {
    pub fpr95: f64,
    pub auroc: f64,
    pub aupr: f64,
}

pub fn msp_score(probs: &[f64]) -> f64 {
    probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// FPR on the OOD set at the largest threshold t keeping
/// fraction(in ≥ t) ≥ `tpr_target`.
pub fn fpr_at_tpr(scores: &ScoreSet, tpr_target: f64) -> f64 {
    assert!(
        tpr_target > 0.0 && tpr_target <= 1.0,
        "tpr target must lie in (0, 1]"
    );
    let mut sorted = scores.in_scores.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    // smallest count m with m / n ≥ target
    let m = (1..=n)
        .find(|&m| m as f64 / n as f64 >= tpr_target)
        .unwrap_or(n);
    let threshold = sorted[m - 1];
    let false_pos = scores
        .out_scores
        .iter()
        .filter(|s| **s >= threshold)
        .count();
    false_pos as f64 / scores.out_scores.len() as f64
}

/// Twice the Mann-Whitney count: 2·#(in > out) + #(in = out).
fn doubled_pair_wins(in_scores: &[f64], out_scores: &[f64]) -> u64 {
    let mut ins = in_scores.to_vec();
    let mut outs = out_scores.to_vec();
    ins.sort_by(f64::total_cmp);
    outs.sort_by(f64::total_cmp);
    let mut total = 0u64;
    let (mut below, mut upto) = (0usize, 0usize);
    for s in &ins {
        while below < outs.len() && outs[below] < *s {
            below += 1;
        }
        upto = upto.max(below);
        while upto < outs.len() && outs[upto] <= *s {
            upto += 1;
        }
        total += 2 * below as u64 + (upto - below) as u64;
    }
    total
}

pub fn auroc(scores: &ScoreSet) -> f64 {
    let pairs = scores.in_scores.len() as u64 * scores.out_scores.len() as u64;
    doubled_pair_wins(&scores.in_scores, &scores.out_scores) as f64 / (2 * pairs) as f64
}

/// Average precision with OOD as positives, sweeping thresholds upward
/// through the score blocks (equal scores enter together).
pub fn aupr(scores: &ScoreSet) -> f64 {
    let mut all: Vec<(f64, bool)> = scores
        .in_scores
        .iter()
        .map(|s| (*s, false))
        .chain(scores.out_scores.iter().map(|s| (*s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = scores.out_scores.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < all.len() {
        let score = all[i].0;
        while i < all.len() && all[i].0 == score {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

pub fn evaluate_scores(scores: &ScoreSet) -> OodMetrics {
    OodMetrics {
        fpr95: fpr_at_tpr(scores, 0.95),
        auroc: auroc(scores),
        aupr: aupr(scores),
    }
}

pub fn msp_scores(params: &NetworkParams, features: &[f64]) -> Result<Vec<f64>> {
    let d = params.input_dim();
    if features.len() % d != 0 {
        return Err(LabError::input(format!(
            "feature buffer of {} values is not a multiple of d={d}",
            features.len()
        )));
    }
    features
        .chunks_exact(d)
        .map(|x| Ok(msp_score(netcore::forward(params, x)?.probs())))
        .collect()
}

/// Scores both sets by MSP and returns FPR95, AUROC and AUPR.
pub fn evaluate_detector(
    params: &NetworkParams,
    in_test_features: &[f64],
    out_test_features: &[f64],
) -> Result<OodMetrics> {
    let scores = ScoreSet::new(
        msp_scores(params, in_test_features)?,
        msp_scores(params, out_test_features)?,
    )?;
    Ok(evaluate_scores(&scores))
}

/// `pool,fpr95,auroc,aupr` rows plus an averaged summary row.
pub fn write_metrics_csv<W: Write>(writer: W, rows: &[(String, OodMetrics)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["pool", "fpr95", "auroc", "aupr"])?;
    for (pool, m) in rows {
        w.write_record([
            pool.clone(),
            m.fpr95.to_string(),
            m.auroc.to_string(),
            m.aupr.to_string(),
        ])?;
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let mean = |f: fn(&OodMetrics) -> f64| rows.iter().map(|(_, m)| f(m)).sum::<f64>() / n;
        w.write_record([
            "average".to_string(),
            mean(|m| m.fpr95).to_string(),
            mean(|m| m.auroc).to_string(),
            mean(|m| m.aupr).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
