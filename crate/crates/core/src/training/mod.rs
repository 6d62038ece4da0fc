//! Loss terms, classifier fitting and the adversarial training procedure.

mod aae;
mod fit;
mod loss;

use serde::{Deserialize, Serialize};

pub use aae::{
    adversarial_rounds, convergence_check, objective_gradient_check, pretrain_autoencoder, pretrained_models, sweep, sweep_from, train_aae, train_regularizers, Decision,
    PretrainReport, RoundMetrics, StopReason, SweepGrid, SweepPoint, SweepResult, TrainOutcome,
};
pub use fit::{
    classifier_gradients, classifier_metrics, fit_classifier, predict_classes, Dataset, Target, CHUNK,
};
pub use loss::{
    activity_loss, cross_entropy_with_grad, distortion_loss, identity_loss, identity_loss_with_grad,
    multi_objective_loss, Heads, LossComponents, TradeoffWeights, CLAMP_EPS,
};

use crate::nnkernel::{OptimizerKind, OptimizerState};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Encoder identity, decoder identity and activity heads.
    #[default]
    Full,
    /// Encoder identity head only (no decoder identity or activity term).
    RepOnly,
    /// Reconstruction only; no adversarial rounds.
    AutoencoderOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Stop once both identity heads are at or below this accuracy...
    pub identity_ceiling: f64,
    /// ...and activity F1 is at or above this.
    pub activity_floor: f64,
    /// Rounds without improvement of `F1 − max identity accuracy`.
    pub patience: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            identity_ceiling: 0.10,
            activity_floor: 0.90,
            patience: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSchedule {
    pub pretrain_epochs: usize,
    pub regularizer_epochs: usize,
    pub aae_epochs: usize,
    pub max_rounds: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: TrainingMode,
    pub thresholds: Thresholds,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub regularizer_learning_rate: f64,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        TrainingSchedule {
            pretrain_epochs: 10,
            regularizer_epochs: 2,
            aae_epochs: 2,
            max_rounds: 10,
            batch_size: 64,
            seed: 0,
            mode: TrainingMode::Full,
            thresholds: Thresholds::default(),
            optimizer: OptimizerKind::adam(),
            learning_rate: 1e-3,
            regularizer_learning_rate: 1e-3,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.regularizer_epochs == 0 || self.aae_epochs == 0 || self.max_rounds == 0 {
            return Err(Error::Config("phase epochs and max_rounds must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.regularizer_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn optimizer(&self) -> OptimizerState {
        OptimizerState::new(self.optimizer, self.learning_rate)
    }

    pub(crate) fn regularizer_optimizer(&self) -> OptimizerState {
        OptimizerState::new(self.optimizer, self.regularizer_learning_rate)
    }
}
