use rand::seq::SliceRandom;
use serde::Serialize;

use super::config::TrainConfig;
use super::trainer::{tail_mean, train, TrainData};
use crate::error::{LabError, Result};
use crate::noisegen::{AuxiliaryPool, LabeledDataset, TransitionMatrix};
use crate::rng;

/// Validation accuracies are averaged over this many final epochs.
const SCORE_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaCandidateReport {
    pub eta: f64,
    /// Mean validation accuracy over the final epochs.
    pub score: f64,
    /// Best-epoch minus final-epoch validation accuracy; a large drop means
    /// late-stage overfitting and suggests a larger η.
    pub late_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaTuning {
    pub best_eta: f64,
    pub candidates: Vec<EtaCandidateReport>,
}

/// Holds out a noisy validation split, trains once per candidate and
/// returns the candidate with the best final validation accuracy. Ties go
/// to the smaller η.
pub fn tune_eta(
    config: &TrainConfig,
    dataset: &LabeledDataset,
    aux_pool: Option<&AuxiliaryPool>,
    transition: Option<&TransitionMatrix>,
    validation_fraction: f64,
    candidates: &[f64],
) -> Result<EtaTuning> {
    if candidates.is_empty() {
        return Err(LabError::config("no η candidates given"));
    }
    if !(validation_fraction > 0.0 && validation_fraction <= 0.5) {
        return Err(LabError::config("validation fraction must lie in (0, 0.5]"));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng::stream(config.seed, "validation_split"));
    let held_out = ((validation_fraction * dataset.len() as f64).round() as usize).max(1);
    let validation = dataset.subset(&order[..held_out]);
    let train_part = dataset.subset(&order[held_out..]);

    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let mut reports = Vec::with_capacity(sorted.len());
    for &eta in &sorted {
        let mut cfg = config.clone();
        cfg.eta = eta;
        let mut data = TrainData::new(&train_part).with_validation(&validation);
        data.aux = aux_pool;
        data.transition = transition;
        let outcome = train(&cfg, data)?;
        let accs: Vec<f64> = outcome.metrics.iter().filter_map(|m| m.val_acc).collect();
        let score = tail_mean(accs.iter().map(|a| Some(*a)), SCORE_WINDOW).unwrap_or(0.0);
        let best = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let late_drop = best - accs.last().copied().unwrap_or(best);
        log::info!("eta {eta}: validation score {score:.4}, late drop {late_drop:.4}");
        reports.push(EtaCandidateReport {
            eta,
            score,
            late_drop,
        });
    }
    let mut best = &reports[0];
    for r in &reports[1..] {
        if r.score > best.score {
            best = r;
        }
    }
    Ok(EtaTuning {
        best_eta: best.eta,
        candidates: reports,
    })
}
