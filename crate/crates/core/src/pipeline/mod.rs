//! Staged experiment orchestration: ingest → train → evaluate → report.
//!
//! Artifacts live under `<output_dir>/<config hash>/<stage>/`. A stage whose
//! artifact exists is loaded instead of recomputed, unless a rerun from that
//! stage (or an earlier one) is requested. Every stage seed is derived from
//! the master seed and the stage name, so any stage can be rerun alone.

mod config;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{config_schema, stage_seed, BaselineConfig, DataConfig, EvaluationConfig, RunConfig, SplitConfig};
pub use store::{
    load_anonymizer, load_windows, save_anonymizer, save_windows, series_from_bytes, series_to_bytes, windows_from_bytes,
    windows_to_bytes, Anonymizer, SeriesSet, BUNDLE_FORMAT_VERSION, SERIES_FORMAT_VERSION, WINDOW_FORMAT_VERSION,
};

use crate::baselines::{transform_series, transform_windows, Baseline, Granularity};
use crate::evaluation::{
    autocorrelation, cross_protocol_identity_eval, dtw_rank, evaluate_classifier, train_classifier, write_acf_csv,
    EvaluationReport, RankWindow, ReportMetadata, RepetitionResult,
};
use crate::ingest::{
    apply_standardizer, compute_magnitudes, fit_standardizer, label_windows, load_corpus, make_split, Activity,
    ChannelStats, DatasetSplit, LabeledWindow, SensorWindow, SplitSpec, SplitStrategy,
};
use crate::nnkernel::{mix_seed, predict_batched};
use crate::training::{
    adversarial_rounds, pretrained_models, sweep_from, Dataset, PretrainReport, RoundMetrics, StopReason, SweepPoint, Target, TradeoffWeights, TrainingMode,
};
use crate::{exec, synth, Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const TRANSFORM_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Train,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Ingest, Stage::Train, Stage::Evaluate, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Per-run record of what was produced and with which seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub data_source: String,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: BTreeMap<String, Vec<PathBuf>>,
}

impl RunManifest {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let seeds = ["split", "train", "evaluate"]
            .into_iter()
            .map(|s| (s.to_string(), stage_seed(cfg.seed, s)))
            .collect();
        Ok(RunManifest {
            config_hash: cfg.hash()?,
            tool_version: TOOL_VERSION.to_string(),
            master_seed: cfg.seed,
            data_source: cfg.data.source_label(),
            seeds,
            artifacts: BTreeMap::new(),
        })
    }

    pub fn seed(&self, stage: &str) -> u64 {
        self.seeds[stage]
    }
}

/// The run directory `<output_dir>/<hash>`.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub dir: PathBuf,
}

impl Workspace {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(Workspace {
            dir: cfg.output_dir.join(cfg.hash()?),
        })
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.dir.join(stage.name())
    }

    pub fn series_path(&self) -> PathBuf {
        self.stage_dir(Stage::Ingest).join("series.mser")
    }

    pub fn anonymizer_dir(&self, name: &str) -> PathBuf {
        self.stage_dir(Stage::Train).join(name)
    }

    pub fn training_summary_path(&self) -> PathBuf {
        self.stage_dir(Stage::Train).join("training.json")
    }

    pub fn report_json_path(&self) -> PathBuf {
        self.stage_dir(Stage::Evaluate).join("report.json")
    }

    pub fn acf_path(&self) -> PathBuf {
        self.stage_dir(Stage::Evaluate).join("acf.csv")
    }

    pub fn report_table_path(&self) -> PathBuf {
        self.stage_dir(Stage::Report).join("report.txt")
    }
}

// ---------------------------------------------------------------- ingest

/// Loads the corpus (or generates the synthetic one) and computes the
/// magnitude channels of every experiment-activity trial.
pub fn ingest(data: &DataConfig) -> Result<SeriesSet> {
    let (trials, num_users, genders) = match &data.root {
        Some(root) => {
            let corpus = load_corpus(root)?;
            let n = corpus.num_users();
            (corpus.trials, n, corpus.genders)
        }
        None => (
            synth::generate_trials(&data.synthetic),
            data.synthetic.users,
            Some(synth::subject_genders(&data.synthetic)),
        ),
    };
    let series: Vec<_> = trials
        .iter()
        .filter(|t| Activity::EXPERIMENT.contains(&t.activity))
        .map(compute_magnitudes)
        .collect();
    if series.is_empty() {
        return Err(Error::MissingData("no trials of the experiment activities".into()));
    }
    Ok(SeriesSet {
        num_users,
        genders,
        series,
    })
}

pub fn windows(set: &SeriesSet, data: &DataConfig) -> Result<Vec<LabeledWindow>> {
    label_windows(&set.series, data.window, data.stride, set.num_users, &Activity::EXPERIMENT)
}

/// The two evaluation protocols over the same windows.
#[derive(Clone, Debug)]
pub struct Splits {
    /// Unseen test users (activity recognition).
    pub subject: DatasetSplit,
    /// One held-out trial per user and activity (identity leakage); also the
    /// anonymizer's training data.
    pub trial: DatasetSplit,
}

pub fn make_splits(set: &SeriesSet, windows: Vec<LabeledWindow>, cfg: &RunConfig, seed: u64) -> Result<Splits> {
    let test_users = match &cfg.split.test_users {
        Some(u) => u.clone(),
        None => SplitSpec::default_test_users(set.num_users, set.genders.as_deref()),
    };
    let subject = SplitSpec {
        strategy: SplitStrategy::Subject { test_users },
        validation_fraction: cfg.split.validation_fraction,
        seed: mix_seed(seed, 1),
    };
    let trial = SplitSpec {
        strategy: SplitStrategy::Trial {
            held_out: cfg.split.held_out.clone(),
        },
        validation_fraction: cfg.split.validation_fraction,
        seed: mix_seed(seed, 2),
    };
    Ok(Splits {
        subject: make_split(windows.clone(), &subject)?,
        trial: make_split(windows, &trial)?,
    })
}

/// Standardizes windows and packs them as a training dataset.
pub fn dataset(windows: &[LabeledWindow], stats: &ChannelStats) -> Result<Dataset> {
    let std: Vec<LabeledWindow> = exec::try_map(windows, |w| {
        Ok::<_, Error>(LabeledWindow {
            window: apply_standardizer(stats, &w.window)?,
            ..w.clone()
        })
    })?;
    Dataset::from_windows(&std)
}

/// Per-channel standardizer fitted on raw windows.
pub fn raw_stats(windows: &[LabeledWindow]) -> Result<ChannelStats> {
    let ws: Vec<SensorWindow> = windows.iter().map(|w| w.window.clone()).collect();
    fit_standardizer(&ws)
}

// ----------------------------------------------------------------- train

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnonymizerSummary {
    pub weights: TradeoffWeights,
    pub history: Vec<RoundMetrics>,
    pub best_round: usize,
    pub stop: StopReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub pretrain: PretrainReport,
    pub sweep: Vec<SweepPoint>,
    pub aae: AnonymizerSummary,
    pub rep: Option<AnonymizerSummary>,
}

#[derive(Clone, Debug)]
pub struct TrainArtifacts {
    pub aae: Anonymizer,
    pub rep: Option<Anonymizer>,
    pub summary: TrainingSummary,
}

/// Trains the anonymizer on the Trial-split training windows (weights from
/// the config or the sweep), plus the RepOnly ablation with the same
/// weights and pretrained start.
pub fn train_stage(cfg: &RunConfig, splits: &Splits, seed: u64) -> Result<TrainArtifacts> {
    let stats = raw_stats(&splits.trial.train)?;
    let train = dataset(&splits.trial.train, &stats)?;
    let validation = dataset(&splits.trial.validation, &stats)?;
    let schedule = crate::training::TrainingSchedule {
        seed,
        ..cfg.schedule.clone()
    };
    let arch = &cfg.architecture;
    let (set, pretrain) = pretrained_models(arch, &train, &validation, &schedule)?;

    let (outcome, sweep) = match &cfg.weights {
        Some(w) => (adversarial_rounds(set.clone(), pretrain.clone(), &train, &validation, &schedule, w)?, Vec::new()),
        None => {
            let r = sweep_from(&set, &pretrain, &train, &validation, &schedule, &cfg.sweep)?;
            log::info!("sweep selected {:?}", r.points[r.selected].weights);
            (r.outcome, r.points)
        }
    };
    let weights = match &cfg.weights {
        Some(w) => *w,
        None => sweep.iter().find(|p| p.best == *outcome.best()).map(|p| p.weights).unwrap_or_default(),
    };
    let summarize = |o: &crate::training::TrainOutcome, w| AnonymizerSummary {
        weights: w,
        history: o.history.clone(),
        best_round: o.best_round,
        stop: o.stop,
    };
    let aae_summary = summarize(&outcome, weights);

    let rep = if cfg.evaluation.rep_ablation && schedule.mode == TrainingMode::Full {
        let rep_schedule = crate::training::TrainingSchedule {
            mode: TrainingMode::RepOnly,
            ..schedule.clone()
        };
        let o = adversarial_rounds(set, pretrain.clone(), &train, &validation, &rep_schedule, &weights)?;
        Some((
            Anonymizer {
                models: o.models.clone(),
                stats: stats.clone(),
                architecture: arch.clone(),
            },
            summarize(&o, weights),
        ))
    } else {
        None
    };

    Ok(TrainArtifacts {
        aae: Anonymizer {
            models: outcome.models,
            stats,
            architecture: arch.clone(),
        },
        summary: TrainingSummary {
            pretrain,
            sweep,
            aae: aae_summary,
            rep: rep.as_ref().map(|(_, s)| s.clone()),
        },
        rep: rep.map(|(a, _)| a),
    })
}

/// `X′ = decode(encode(standardize(X)))`, mapped back to raw units.
pub fn transform(anonymizer: &Anonymizer, windows: &[LabeledWindow]) -> Result<Vec<LabeledWindow>> {
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    let expected = anonymizer.architecture.input_dims();
    let first = &windows[0].window;
    if [1, first.channels(), first.width()] != expected {
        return Err(Error::shape(0, &expected, &[1, first.channels(), first.width()]));
    }
    let stats = &anonymizer.stats;
    let x = dataset(windows, stats)?.x;
    let y = predict_batched(&anonymizer.models.encoder, &x, TRANSFORM_CHUNK)?;
    let xr = predict_batched(&anonymizer.models.decoder, &y, TRANSFORM_CHUNK)?;
    let (m, w) = (first.channels(), first.width());
    windows
        .iter()
        .enumerate()
        .map(|(i, lw)| {
            let mut sw = SensorWindow::new(m, w, xr.row(i).to_vec())?;
            sw.standardized = true;
            Ok(LabeledWindow {
                window: stats.invert(&sw)?,
                ..lw.clone()
            })
        })
        .collect()
}

// -------------------------------------------------------------- evaluate

fn window_key(w: &LabeledWindow) -> u64 {
    (w.user() as u64) << 40 | (w.trial_index as u64) << 24 | w.offset as u64
}

/// A transformation applied to the windows of both protocols.
#[derive(Clone, Debug)]
pub struct View {
    pub label: String,
    pub subject: DatasetSplit,
    /// Only filled when the retrained-attacker stress test is enabled.
    pub trial_train: Vec<LabeledWindow>,
    pub trial_test: Vec<LabeledWindow>,
}

fn map_split(split: &DatasetSplit, f: &dyn Fn(&[LabeledWindow]) -> Result<Vec<LabeledWindow>>) -> Result<DatasetSplit> {
    Ok(DatasetSplit {
        train: f(&split.train)?,
        validation: f(&split.validation)?,
        test: f(&split.test)?,
    })
}

/// Applies a baseline to every relevant split, per trial (then re-windowed
/// at the same offsets) or per window.
pub fn baseline_view(
    baseline: &Baseline,
    granularity: Granularity,
    set: &SeriesSet,
    splits: &Splits,
    data: &DataConfig,
    with_trial_train: bool,
) -> Result<View> {
    let apply: Box<dyn Fn(&[LabeledWindow]) -> Result<Vec<LabeledWindow>>> = match granularity {
        Granularity::Window => Box::new(|ws: &[LabeledWindow]| transform_windows(ws, baseline, data.sampling_rate)),
        Granularity::Trial => {
            let series = transform_series(&set.series, baseline, data.sampling_rate)?;
            let transformed = windows(&SeriesSet { series, ..set.clone() }, data)?;
            let by_key: HashMap<u64, SensorWindow> = transformed.into_iter().map(|w| (window_key(&w), w.window)).collect();
            Box::new(move |ws: &[LabeledWindow]| {
                ws.iter()
                    .map(|w| {
                        let t = by_key
                            .get(&window_key(w))
                            .ok_or_else(|| Error::ContractViolation("window missing after transformation".into()))?;
                        Ok(LabeledWindow { window: t.clone(), ..w.clone() })
                    })
                    .collect()
            })
        }
    };
    Ok(View {
        label: baseline.label(),
        subject: map_split(&splits.subject, &apply)?,
        trial_train: if with_trial_train { apply(&splits.trial.train)? } else { Vec::new() },
        trial_test: apply(&splits.trial.test)?,
    })
}

pub fn anonymizer_view(label: &str, a: &Anonymizer, splits: &Splits, with_trial_train: bool) -> Result<View> {
    let apply = |ws: &[LabeledWindow]| transform(a, ws);
    Ok(View {
        label: label.to_string(),
        subject: map_split(&splits.subject, &apply)?,
        trial_train: if with_trial_train { transform(a, &splits.trial.train)? } else { Vec::new() },
        trial_test: transform(a, &splits.trial.test)?,
    })
}

pub fn raw_view(splits: &Splits, with_trial_train: bool) -> View {
    View {
        label: "raw".into(),
        subject: splits.subject.clone(),
        trial_train: if with_trial_train { splits.trial.train.clone() } else { Vec::new() },
        trial_test: splits.trial.test.clone(),
    }
}

/// Every report row in order: raw, baselines, rep, aae.
pub fn views(cfg: &RunConfig, set: &SeriesSet, splits: &Splits, trained: &TrainArtifacts) -> Result<Vec<View>> {
    let tt = cfg.evaluation.retrained_attacker;
    let mut out = vec![raw_view(splits, tt)];
    for b in cfg.baselines.baselines() {
        out.push(baseline_view(&b, cfg.baselines.granularity, set, splits, &cfg.data, tt)?);
    }
    if let Some(rep) = &trained.rep {
        out.push(anonymizer_view("rep", rep, splits, tt)?);
    }
    out.push(anonymizer_view("aae", &trained.aae, splits, tt)?);
    Ok(out)
}

fn rank_windows(windows: &[LabeledWindow], channel: usize) -> BTreeMap<usize, Vec<RankWindow>> {
    let mut map: BTreeMap<usize, Vec<RankWindow>> = BTreeMap::new();
    for w in windows {
        map.entry(w.user()).or_default().push(RankWindow {
            activity: w.activity.index(),
            key: window_key(w),
            values: w.window.row(channel).to_vec(),
        });
    }
    map
}

/// Trains the raw attacker and one activity classifier per view, for every
/// repetition, and aggregates the measurements.
pub fn evaluate_views(cfg: &RunConfig, splits: &Splits, views: &[View], seed: u64) -> Result<EvaluationReport> {
    let ev = &cfg.evaluation;
    let arch = &cfg.architecture;
    let id_stats = raw_stats(&splits.trial.train)?;
    let act_stats = raw_stats(&splits.subject.train)?;
    let attacker_train = dataset(&splits.trial.train, &id_stats)?;
    let attacker_val = dataset(&splits.trial.validation, &id_stats)?;
    let raw_ranks = rank_windows(&splits.trial.test, ev.dtw_channel);

    let mut results = Vec::new();
    for rep in 0..ev.repetitions {
        let rs = mix_seed(seed, rep as u64);
        let attacker = train_classifier(
            &attacker_train,
            Some(&attacker_val),
            Target::Identity,
            arch,
            &ev.classifier,
            mix_seed(rs, 0x1D),
        )?;
        for v in views {
            let act_train = dataset(&v.subject.train, &act_stats)?;
            let act_val = dataset(&v.subject.validation, &act_stats)?;
            let act_model =
                train_classifier(&act_train, Some(&act_val), Target::Activity, arch, &ev.classifier, mix_seed(rs, 0xAC))?;
            let act = evaluate_classifier(&act_model, &dataset(&v.subject.test, &act_stats)?, Target::Activity)?;
            let id = cross_protocol_identity_eval(&attacker, &dataset(&v.trial_test, &id_stats)?)?;
            let rank = dtw_rank(&rank_windows(&v.trial_test, ev.dtw_channel), &raw_ranks, ev.dtw_pairs, mix_seed(rs, 0xD7))?;
            log::info!(
                "repetition {rep} {}: act F1 {:.3}, id acc {:.3}, rank {:.2}",
                v.label,
                act.macro_f1,
                id.accuracy,
                rank.mean_rank
            );
            let retrained = if ev.retrained_attacker {
                let m = train_classifier(
                    &dataset(&v.trial_train, &id_stats)?,
                    None,
                    Target::Identity,
                    arch,
                    &ev.classifier,
                    mix_seed(rs, 0x2D),
                )?;
                Some(evaluate_classifier(&m, &dataset(&v.trial_test, &id_stats)?, Target::Identity)?.accuracy)
            } else {
                None
            };
            results.push(RepetitionResult {
                transformation: v.label.clone(),
                activity_f1: act.macro_f1,
                activity_accuracy: act.accuracy,
                identity_accuracy: id.accuracy,
                identity_f1: id.macro_f1,
                rank_mean: rank.mean_rank,
                rank_variance: rank.rank_variance,
                identity_accuracy_retrained: retrained,
            });
        }
    }
    let metadata = ReportMetadata {
        seed: cfg.seed,
        config_hash: cfg.hash()?,
        tool_version: TOOL_VERSION.to_string(),
        repetitions: ev.repetitions,
        f1_averaging: "macro".into(),
        data_source: cfg.data.source_label(),
    };
    Ok(EvaluationReport::from_repetitions(metadata, &results))
}

/// Autocorrelation of the first held-out window's DTW channel under every
/// view (plot-ready CSV rows).
pub fn acf_rows(views: &[View], channel: usize, max_lag: usize) -> Result<Vec<(String, crate::evaluation::Acf)>> {
    views
        .iter()
        .filter_map(|v| v.trial_test.first().map(|w| (v, w)))
        .map(|(v, w)| Ok((v.label.clone(), autocorrelation(w.window.row(channel), max_lag)?)))
        .collect()
}

// ------------------------------------------------------------------- run

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Recompute this stage and every later one even when cached.
    pub rerun_from: Option<Stage>,
    /// Stop after this stage.
    pub until: Option<Stage>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub report: Option<EvaluationReport>,
    pub workspace: Workspace,
}

fn stale(stage: Stage, opts: &RunOptions) -> bool {
    opts.rerun_from.is_some_and(|s| s <= stage)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn load_or_ingest(cfg: &RunConfig, ws: &Workspace, opts: &RunOptions) -> Result<SeriesSet> {
    let path = ws.series_path();
    if path.exists() && !stale(Stage::Ingest, opts) {
        log::info!("ingest: cached {}", path.display());
        return series_from_bytes(&fs::read(&path)?);
    }
    let set = ingest(&cfg.data)?;
    fs::create_dir_all(ws.stage_dir(Stage::Ingest))?;
    fs::write(&path, series_to_bytes(&set))?;
    Ok(set)
}

pub fn load_or_train(cfg: &RunConfig, ws: &Workspace, splits: &Splits, seed: u64, opts: &RunOptions) -> Result<TrainArtifacts> {
    let summary_path = ws.training_summary_path();
    if summary_path.exists() && !stale(Stage::Train, opts) {
        log::info!("train: cached {}", ws.stage_dir(Stage::Train).display());
        let summary: TrainingSummary = serde_json::from_str(&fs::read_to_string(&summary_path)?)?;
        let rep = match summary.rep {
            Some(_) => Some(load_anonymizer(&ws.anonymizer_dir("rep"))?),
            None => None,
        };
        return Ok(TrainArtifacts {
            aae: load_anonymizer(&ws.anonymizer_dir("aae"))?,
            rep,
            summary,
        });
    }
    let t = train_stage(cfg, splits, seed)?;
    save_anonymizer(&t.aae, &ws.anonymizer_dir("aae"))?;
    if let Some(rep) = &t.rep {
        save_anonymizer(rep, &ws.anonymizer_dir("rep"))?;
    }
    // Written last: its presence marks the stage complete.
    write_json(&summary_path, &t.summary)?;
    Ok(t)
}

/// Runs (or resumes) the staged pipeline.
pub fn run(cfg: &RunConfig, opts: RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let ws = Workspace::new(cfg)?;
    fs::create_dir_all(&ws.dir)?;
    fs::write(ws.dir.join("config.toml"), cfg.to_toml()?)?;
    let mut manifest = RunManifest::new(cfg)?;
    let done = |stage: Stage| opts.until == Some(stage);
    let finish = |manifest: &RunManifest, report| -> Result<RunOutcome> {
        write_json(&ws.dir.join("manifest.json"), manifest)?;
        Ok(RunOutcome {
            manifest: manifest.clone(),
            report,
            workspace: ws.clone(),
        })
    };

    let set = load_or_ingest(cfg, &ws, &opts).map_err(|e| e.in_stage("ingest"))?;
    manifest.artifacts.insert("ingest".into(), vec![ws.series_path()]);
    if done(Stage::Ingest) {
        return finish(&manifest, None);
    }
    let all = windows(&set, &cfg.data).map_err(|e| e.in_stage("ingest"))?;
    let splits = make_splits(&set, all, cfg, manifest.seed("split")).map_err(|e| e.in_stage("split"))?;

    let trained = load_or_train(cfg, &ws, &splits, manifest.seed("train"), &opts).map_err(|e| e.in_stage("train"))?;
    manifest.artifacts.insert(
        "train".into(),
        vec![ws.anonymizer_dir("aae"), ws.anonymizer_dir("rep"), ws.training_summary_path()],
    );
    if done(Stage::Train) {
        return finish(&manifest, None);
    }

    let report_path = ws.report_json_path();
    let report = if report_path.exists() && !stale(Stage::Evaluate, &opts) {
        log::info!("evaluate: cached {}", report_path.display());
        EvaluationReport::from_json(&fs::read_to_string(&report_path)?)?
    } else {
        (|| -> Result<EvaluationReport> {
            let vs = views(cfg, &set, &splits, &trained)?;
            let report = evaluate_views(cfg, &splits, &vs, manifest.seed("evaluate"))?;
            fs::create_dir_all(ws.stage_dir(Stage::Evaluate))?;
            write_acf_csv(&ws.acf_path(), &acf_rows(&vs, cfg.evaluation.dtw_channel, 50)?)?;
            fs::write(&report_path, report.to_json()?)?;
            Ok(report)
        })()
        .map_err(|e| e.in_stage("evaluate"))?
    };
    manifest.artifacts.insert("evaluate".into(), vec![report_path, ws.acf_path()]);
    if done(Stage::Evaluate) {
        return finish(&manifest, Some(report));
    }

    let table = ws.report_table_path();
    (|| -> Result<()> {
        fs::create_dir_all(ws.stage_dir(Stage::Report))?;
        fs::write(&table, report.render_table())?;
        Ok(())
    })()
    .map_err(|e| e.in_stage("report"))?;
    manifest.artifacts.insert("report".into(), vec![table]);
    finish(&manifest, Some(report))
}
