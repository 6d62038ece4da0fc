use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{Baseline, Granularity};
use crate::evaluation::ClassifierSchedule;
use crate::ingest::{HeldOutTrial, DEFAULT_SAMPLING_RATE, DEFAULT_STRIDE, DEFAULT_WINDOW};
use crate::models::ArchitectureConfig;
use crate::synth::SynthConfig;
use crate::training::{SweepGrid, TradeoffWeights, TrainingSchedule};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// MotionSense device-motion root. When absent the synthetic corpus
    /// described by `synthetic` is generated in memory.
    pub root: Option<PathBuf>,
    pub synthetic: SynthConfig,
    pub window: usize,
    pub stride: usize,
    pub sampling_rate: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            root: None,
            synthetic: SynthConfig::default(),
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
            sampling_rate: DEFAULT_SAMPLING_RATE,
        }
    }
}

impl DataConfig {
    pub fn source_label(&self) -> String {
        match &self.root {
            Some(p) => format!("motionsense:{}", p.display()),
            None => format!("synthetic(seed={}, users={})", self.synthetic.seed, self.synthetic.users),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Subject-split test users; by default the two lowest-id female and
    /// male users.
    pub test_users: Option<Vec<usize>>,
    /// Trial-split held-out trial per activity; by default the highest
    /// trial number.
    pub held_out: Vec<HeldOutTrial>,
    pub validation_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_users: None,
            held_out: Vec::new(),
            validation_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub resample_rates: Vec<f64>,
    pub ssa_components: Vec<usize>,
    pub ssa_window_length: usize,
    pub granularity: Granularity,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            resample_rates: vec![10.0, 5.0],
            ssa_components: vec![2, 1],
            ssa_window_length: 50,
            granularity: Granularity::Trial,
        }
    }
}

impl BaselineConfig {
    pub fn baselines(&self) -> Vec<Baseline> {
        let mut out: Vec<Baseline> = self.resample_rates.iter().map(|&rate| Baseline::Resample { rate }).collect();
        out.extend(self.ssa_components.iter().map(|&components| Baseline::Ssa {
            components,
            window_length: self.ssa_window_length,
        }));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub classifier: ClassifierSchedule,
    /// Each repetition retrains the evaluation classifiers and redraws the
    /// DTW pairs with a fresh seed.
    pub repetitions: usize,
    pub dtw_pairs: usize,
    /// Magnitude channel compared by DTW (0 rotation rate, 1 acceleration).
    pub dtw_channel: usize,
    /// Also train an attacker on transformed Trial-split data (a stress
    /// test reported as `identity_accuracy_retrained`).
    pub retrained_attacker: bool,
    /// Include the RepOnly anonymizer row.
    pub rep_ablation: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            classifier: ClassifierSchedule::default(),
            repetitions: 5,
            dtw_pairs: 30,
            dtw_channel: 1,
            retrained_attacker: false,
            rep_ablation: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every stage seed is derived from it by stage name.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub architecture: ArchitectureConfig,
    /// The schedule's own `seed` is replaced by the derived stage seed.
    pub schedule: TrainingSchedule,
    /// Fixed trade-off weights; when absent `sweep` selects them.
    pub weights: Option<TradeoffWeights>,
    pub sweep: SweepGrid,
    pub baselines: BaselineConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            split: SplitConfig::default(),
            architecture: ArchitectureConfig::default(),
            schedule: TrainingSchedule::default(),
            weights: None,
            sweep: SweepGrid::default(),
            baselines: BaselineConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(root) = &self.data.root {
            if !root.is_dir() {
                return Err(Error::Config(format!("data.root {} is not a directory", root.display())));
            }
        }
        if self.data.window != self.architecture.window {
            return Err(Error::Config(format!(
                "data.window {} differs from architecture.window {}",
                self.data.window, self.architecture.window
            )));
        }
        if self.data.stride == 0 || !(self.data.sampling_rate > 0.0) {
            return Err(Error::Config("stride and sampling_rate must be positive".into()));
        }
        if !(self.split.validation_fraction > 0.0 && self.split.validation_fraction < 1.0) {
            return Err(Error::Config("split.validation_fraction must be in (0,1)".into()));
        }
        self.architecture.validate()?;
        self.schedule.validate()?;
        match &self.weights {
            Some(w) => w.validate()?,
            None if self.sweep.points().is_empty() => {
                return Err(Error::Config("either weights or a non-empty sweep grid is required".into()))
            }
            None => {
                for w in self.sweep.points() {
                    w.validate()?;
                }
            }
        }
        for &r in &self.baselines.resample_rates {
            if !(r > 0.0 && r <= self.data.sampling_rate) {
                return Err(Error::Config(format!("resample rate {r} outside (0, sampling_rate]")));
            }
        }
        if self.baselines.ssa_components.contains(&0) || self.baselines.ssa_window_length < 2 {
            return Err(Error::Config("ssa components must be ≥ 1 and window length ≥ 2".into()));
        }
        let e = &self.evaluation;
        if e.repetitions == 0 || e.dtw_pairs == 0 || e.classifier.epochs == 0 || e.classifier.batch_size == 0 {
            return Err(Error::Config("evaluation counts must be positive".into()));
        }
        if e.dtw_channel >= self.architecture.input_channels {
            return Err(Error::Config(format!("dtw_channel {} out of range", e.dtw_channel)));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form. Object keys are sorted, so
    /// key order in the source file does not matter; `output_dir` is left
    /// out so moving the output tree keeps the cache valid.
    pub fn hash(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        let canonical = serde_json::to_string(&sort_keys(value))?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }
}

const KEY_DOCS: &[(&str, &str)] = &[
    ("seed", "master seed; stage seeds derive from it by stage name"),
    ("output_dir", "artifacts go to <output_dir>/<config hash>/"),
    ("data.root", "MotionSense device-motion root; omit to use the synthetic corpus"),
    ("data.window", "samples per window (must equal architecture.window)"),
    ("data.stride", "samples between window starts"),
    ("data.sampling_rate", "Hz"),
    ("data.synthetic.users", "synthetic corpus: number of users"),
    ("data.synthetic.sampling_rate", "synthetic corpus: Hz"),
    ("data.synthetic.long_trial_samples", "synthetic corpus: samples in trials 1-10"),
    ("data.synthetic.short_trial_samples", "synthetic corpus: samples in trials 11-16"),
    ("data.synthetic.seed", "synthetic corpus: generator seed"),
    ("split.test_users", "Subject-split test users; default: two lowest-id female and male users"),
    ("split.held_out", "Trial-split held-out trials [{activity, trial}]; default: highest trial per activity"),
    ("split.validation_fraction", "validation share of the non-test windows"),
    ("architecture.input_channels", "magnitude channels (rotation rate, acceleration)"),
    ("architecture.window", "input width W"),
    ("architecture.latent_length", "latent code length L"),
    ("architecture.encoder_filters", "filters per encoder conv block"),
    ("architecture.encoder_kernel", "encoder/decoder kernel width"),
    ("architecture.pool", "max-pool / upsample factor per block"),
    ("architecture.autoencoder_l2", "L2 coefficient on encoder/decoder weights"),
    ("architecture.num_users", "identity classes N"),
    ("architecture.num_activities", "activity classes B"),
    ("architecture.classifier.filters", "regularizer/evaluation classifier conv filters"),
    ("architecture.classifier.kernel_width", "classifier kernel width"),
    ("architecture.classifier.dense_units", "classifier hidden units"),
    ("architecture.classifier.dropout", "classifier dropout rate"),
    ("architecture.classifier.l2", "classifier L2 coefficient"),
    ("schedule.pretrain_epochs", "autoencoder reconstruction-only epochs"),
    ("schedule.regularizer_epochs", "regularizer epochs per round"),
    ("schedule.aae_epochs", "anonymizer epochs per round"),
    ("schedule.max_rounds", "adversarial round budget"),
    ("schedule.batch_size", "mini-batch size"),
    ("schedule.seed", "ignored in runs: replaced by the derived train seed"),
    ("schedule.mode", "full | rep_only | autoencoder_only"),
    ("schedule.learning_rate", "encoder/decoder learning rate"),
    ("schedule.regularizer_learning_rate", "regularizer learning rate"),
    ("schedule.thresholds.identity_ceiling", "stop when both identity heads are at or below this accuracy"),
    ("schedule.thresholds.activity_floor", "and activity F1 is at or above this"),
    ("schedule.thresholds.patience", "rounds without score improvement before stopping"),
    ("schedule.optimizer.kind", "sgd | adam"),
    ("weights.beta_i", "identity weight (set [weights] to skip the sweep)"),
    ("weights.beta_a", "activity weight"),
    ("weights.beta_d", "distortion weight"),
    ("sweep.beta_i", "grid of identity weights"),
    ("sweep.beta_a", "grid of activity weights"),
    ("sweep.beta_d", "grid of distortion weights"),
    ("baselines.resample_rates", "round-trip resampling targets in Hz"),
    ("baselines.ssa_components", "leading SSA components kept, one row per entry"),
    ("baselines.ssa_window_length", "SSA embedding window L"),
    ("baselines.granularity", "trial | window"),
    ("evaluation.repetitions", "evaluation repetitions (mean and std reported)"),
    ("evaluation.dtw_pairs", "DTW window pairs per (k, l) user pair"),
    ("evaluation.dtw_channel", "0 rotation rate, 1 acceleration"),
    ("evaluation.retrained_attacker", "also train an attacker on transformed data"),
    ("evaluation.rep_ablation", "include the RepOnly anonymizer row"),
    ("evaluation.classifier.epochs", "evaluation classifier epochs"),
    ("evaluation.classifier.batch_size", "evaluation classifier batch size"),
    ("evaluation.classifier.learning_rate", "evaluation classifier learning rate"),
];

/// The default configuration as TOML, each key preceded by a comment.
pub fn config_schema() -> Result<String> {
    let text = RunConfig::default().to_toml()?;
    let mut out = String::from("# motion-anon run configuration (all values shown are defaults)\n");
    let mut table = String::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
            table = name.to_string();
        } else if let Some((key, _)) = trimmed.split_once(" = ") {
            let path = if table.is_empty() { key.to_string() } else { format!("{table}.{key}") };
            if let Some((_, doc)) = KEY_DOCS.iter().find(|(k, _)| *k == path) {
                out.push_str(&format!("# {doc}\n"));
            }
        }
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("\n# Optional, absent by default:\n");
    for key in ["data.root", "split.test_users", "weights.beta_i", "weights.beta_a", "weights.beta_d"] {
        let doc = KEY_DOCS.iter().find(|(k, _)| *k == key).map_or("", |(_, d)| d);
        out.push_str(&format!("# {key}: {doc}\n"));
    }
    Ok(out)
}

fn sort_keys(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Stage seed: the master seed mixed with a hash of the stage name.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let digest = Sha256::digest(stage.as_bytes());
    let mut salt = [0u8; 8];
    salt.copy_from_slice(&digest[..8]);
    crate::nnkernel::mix_seed(master, u64::from_le_bytes(salt))
}
