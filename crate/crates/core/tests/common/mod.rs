//! Brute-force oracles shared by the integration tests.

#![allow(dead_code)]

/// ‖a − b‖ / max(‖a‖, ‖b‖), or the plain distance when both are tiny.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn oracle_fpr(ins: &[f64], outs: &[f64], tpr: f64) -> f64 {
    // every score (and +inf) is a candidate threshold; keep the largest one
    // whose in-distribution acceptance reaches the target
    let mut candidates: Vec<f64> = ins.iter().chain(outs).copied().collect();
    candidates.push(f64::INFINITY);
    let mut best: Option<f64> = None;
    for &t in &candidates {
        let accepted = ins.iter().filter(|s| **s >= t).count();
        if accepted as f64 / ins.len() as f64 >= tpr && best.map_or(true, |b| t > b) {
            best = Some(t);
        }
    }
    let t = best.unwrap();
    outs.iter().filter(|s| **s >= t).count() as f64 / outs.len() as f64
}

pub fn oracle_auroc(ins: &[f64], outs: &[f64]) -> f64 {
    let mut wins = 0.0;
    for a in ins {
        for b in outs {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (ins.len() * outs.len()) as f64
}

/// OOD is the positive class and flagged when score ≤ t; thresholds visit
/// every distinct score in increasing order.
pub fn oracle_aupr(ins: &[f64], outs: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = ins.iter().chain(outs).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for t in thresholds {
        let tp = outs.iter().filter(|s| **s <= t).count();
        let fp = ins.iter().filter(|s| **s <= t).count();
        let recall = tp as f64 / outs.len() as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}
