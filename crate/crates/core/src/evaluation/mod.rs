//! Utility and privacy measurements.
//!
//! Activity recognition is scored with macro-averaged F1 on Subject-split
//! test users. Identity leakage is scored by an attacker trained once on raw
//! Trial-split windows and applied to transformed held-out trials. DTW rank
//! and autocorrelation complement the classifier view.

mod acf;
mod dtw;
mod metrics;
mod report;

use serde::{Deserialize, Serialize};

pub use acf::{autocorrelation, write_acf_csv, Acf};
pub use dtw::{dtw_distance, dtw_rank, RankResult, RankWindow};
pub use metrics::{argmax_rows, Metrics};
pub use report::{EvaluationReport, ReportMetadata, ReportRow, RepetitionResult, Stat};

use crate::models::ArchitectureConfig;
use crate::nnkernel::{mix_seed, ModelGraph, OptimizerKind, OptimizerState};
use crate::training::{classifier_metrics, fit_classifier, Dataset, Target};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
}

impl Default for ClassifierSchedule {
    fn default() -> Self {
        ClassifierSchedule {
            epochs: 8,
            batch_size: 64,
            learning_rate: 2e-3,
            optimizer: OptimizerKind::adam(),
        }
    }
}

/// Trains a fresh regularizer-architecture classifier for `target` and
/// returns it frozen.
pub fn train_classifier(
    train: &Dataset,
    validation: Option<&Dataset>,
    target: Target,
    cfg: &ArchitectureConfig,
    schedule: &ClassifierSchedule,
    seed: u64,
) -> Result<ModelGraph> {
    let classes = match target {
        Target::Identity => cfg.num_users,
        Target::Activity => cfg.num_activities,
    };
    let input = cfg.input_dims();
    let name = match target {
        Target::Identity => "identity_classifier",
        Target::Activity => "activity_classifier",
    };
    let mut model = ModelGraph::new(name, input, cfg.classifier_specs(input, classes), mix_seed(seed, 1))?;
    let mut opt = OptimizerState::new(schedule.optimizer, schedule.learning_rate);
    let losses = fit_classifier(
        &mut model,
        &mut opt,
        &train.x,
        train.labels(target),
        schedule.epochs,
        schedule.batch_size,
        mix_seed(seed, 2),
    )?;
    if let (Some(v), Some(last)) = (validation, losses.last()) {
        if !v.is_empty() {
            let m = classifier_metrics(&model, &v.x, v.labels(target))?;
            log::info!("{name}: train loss {last:.4}, validation acc {:.3} F1 {:.3}", m.accuracy, m.macro_f1);
        }
    }
    model.freeze();
    Ok(model)
}

/// Scores a frozen classifier on `test`.
pub fn evaluate_classifier(model: &ModelGraph, test: &Dataset, target: Target) -> Result<Metrics> {
    if !model.is_frozen() {
        return Err(Error::ContractViolation(format!("`{}` must be frozen before evaluation", model.name())));
    }
    classifier_metrics(model, &test.x, test.labels(target))
}

/// The raw-trained attacker applied to transformed held-out trials.
pub fn cross_protocol_identity_eval(raw_identity_model: &ModelGraph, transformed_test: &Dataset) -> Result<Metrics> {
    evaluate_classifier(raw_identity_model, transformed_test, Target::Identity)
}
