use std::fmt;
use std::str::FromStr;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    Standard,
    Odnl,
    Sln,
    Oe,
    ForwardCorrection,
    Coteaching,
}

impl Regularizer {
    pub const ALL: [Regularizer; 6] = [
        Regularizer::Standard,
        Regularizer::Odnl,
        Regularizer::Sln,
        Regularizer::Oe,
        Regularizer::ForwardCorrection,
        Regularizer::Coteaching,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regularizer::Standard => "standard",
            Regularizer::Odnl => "odnl",
            Regularizer::Sln => "sln",
            Regularizer::Oe => "oe",
            Regularizer::ForwardCorrection => "forward_correction",
            Regularizer::Coteaching => "coteaching",
        }
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regularizer {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| LabError::Parse(format!("unknown regularizer {s:?}")))
    }
}

/// When auxiliary labels are (re)drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxLabelMode {
    /// Fresh labels for every auxiliary mini-batch.
    DynamicPerIteration,
    /// One label per pool instance, redrawn at the start of every epoch.
    DynamicPerEpoch,
    /// One permanent label per pool instance.
    Fixed,
}

impl AuxLabelMode {
    pub fn name(self) -> &'static str {
        match self {
            AuxLabelMode::DynamicPerIteration => "dynamic_per_iteration",
            AuxLabelMode::DynamicPerEpoch => "dynamic_per_epoch",
            AuxLabelMode::Fixed => "fixed",
        }
    }
}

impl fmt::Display for AuxLabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AuxLabelMode {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        [
            AuxLabelMode::DynamicPerIteration,
            AuxLabelMode::DynamicPerEpoch,
            AuxLabelMode::Fixed,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| LabError::Parse(format!("unknown aux label mode {s:?}")))
    }
}

/// Step decay: `initial · factor^(number of decay epochs ≤ epoch)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_epochs: Vec<usize>,
    pub factor: f64,
}

impl LrSchedule {
    pub fn rate(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.initial * self.factor.powi(decays as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub regularizer: Regularizer,
    /// Adds η·L2 on top of the base regularizer.
    pub compose_odnl: bool,
    pub eta: f64,
    pub lambda_oe: f64,
    pub sigma_sln: f64,
    pub label_smoothing: f64,
    pub epochs: usize,
    pub train_batch: usize,
    pub aux_batch: usize,
    pub lr: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub aux_label_mode: AuxLabelMode,
    pub coteach_forget_rate: f64,
    pub coteach_warmup: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            regularizer: Regularizer::Standard,
            compose_odnl: false,
            eta: 1.0,
            lambda_oe: 0.5,
            sigma_sln: 0.5,
            label_smoothing: 0.0,
            epochs: 200,
            train_batch: 128,
            aux_batch: 128,
            lr: LrSchedule {
                initial: 0.1,
                decay_epochs: vec![80, 140],
                factor: 0.1,
            },
            momentum: 0.9,
            weight_decay: 5e-4,
            aux_label_mode: AuxLabelMode::DynamicPerIteration,
            coteach_forget_rate: 0.4,
            coteach_warmup: 10.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Whether the open-set term η·L2 contributes to the objective.
    pub fn odnl_active(&self) -> bool {
        (self.regularizer == Regularizer::Odnl || self.compose_odnl) && self.eta > 0.0
    }

    pub fn uses_aux_pool(&self) -> bool {
        self.odnl_active() || (self.regularizer == Regularizer::Oe && self.lambda_oe > 0.0)
    }

    pub fn validate(&self, train_size: usize, pool_size: Option<usize>) -> Result<()> {
        let bad = |m: String| Err(LabError::config(m));
        if self.epochs == 0 || self.train_batch == 0 || self.aux_batch == 0 {
            return bad("epochs and batch sizes must be positive".into());
        }
        if self.train_batch > train_size {
            return bad(format!(
                "train batch {} exceeds dataset size {train_size}",
                self.train_batch
            ));
        }
        if !(self.eta >= 0.0 && self.lambda_oe >= 0.0 && self.sigma_sln >= 0.0) {
            return bad("eta, lambda_oe and sigma_sln must be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label smoothing must lie in [0, 1)".into());
        }
        if !(self.lr.initial > 0.0) || !(self.lr.factor > 0.0) {
            return bad("learning rate and decay factor must be positive".into());
        }
        if self.lr.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("decay epochs must be strictly increasing".into());
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return bad("momentum must lie in [0, 1) and weight decay be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.coteach_forget_rate) || !(self.coteach_warmup >= 0.0) {
            return bad("co-teaching forget rate must lie in [0, 1), warmup ≥ 0".into());
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden widths must be positive".into());
        }
        if self.uses_aux_pool() {
            match pool_size {
                None => return bad(format!("{} needs an auxiliary pool", self.regularizer)),
                Some(m) if self.aux_batch > m => {
                    return bad(format!(
                        "aux batch {} exceeds pool size {m}",
                        self.aux_batch
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_schedule() {
        let s = TrainConfig::default().lr;
        assert_eq!(s.rate(0), 0.1);
        assert_eq!(s.rate(79), 0.1);
        assert!((s.rate(80) - 0.01).abs() < 1e-15);
        assert!((s.rate(199) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn names_roundtrip() {
        for r in Regularizer::ALL {
            assert_eq!(r.name().parse::<Regularizer>().unwrap(), r);
        }
        assert!("dividemix".parse::<Regularizer>().is_err());
        assert_eq!(
            "fixed".parse::<AuxLabelMode>().unwrap(),
            AuxLabelMode::Fixed
        );
    }

    #[test]
    fn validation_rules() {
        let mut c = TrainConfig::default();
        c.validate(2000, None).unwrap();
        assert!(c.validate(100, None).is_err());
        c.regularizer = Regularizer::Odnl;
        assert!(c.validate(2000, None).is_err());
        c.validate(2000, Some(500)).unwrap();
        c.eta = 0.0;
        c.validate(2000, None).unwrap();
        c.lr.decay_epochs = vec![140, 80];
        assert!(c.validate(2000, None).is_err());
    }
}
