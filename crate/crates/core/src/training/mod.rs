//! Training loop and objectives.
//!
//! The base objectives are plain cross entropy, SLN, Outlier Exposure,
//! forward correction and co-teaching. Any of them can be composed with the
//! open-set auxiliary term η·L2, where L2 is the cross entropy of auxiliary
//! instances against labels redrawn uniformly from [0, k).

mod config;
mod objectives;
mod trainer;
mod tune;

pub use config::{AuxLabelMode, LrSchedule, Regularizer, TrainConfig};
pub use objectives::{
    aux_ce_term, coteach_keep_fraction, coteach_select, forward_correction_loss,
    forward_correction_term, odnl_loss_and_grad, oe_aux_loss, sample_dynamic_labels, sln_target,
    standard_term,
};
pub use trainer::{
    evaluate_dataset, train, write_metrics_csv, BatchPlan, DatasetEval, EpochMetrics, TrainData,
    TrainOutcome,
};
pub use tune::{tune_eta, EtaCandidateReport, EtaTuning};
