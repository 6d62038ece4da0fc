use std::fs;

use motion_anon::pipeline::{
    self, load_anonymizer, save_anonymizer, RunConfig, RunManifest, RunOptions, Stage, TrainingSummary, Workspace,
};
use motion_anon::training::TradeoffWeights;

fn small_config(out: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.output_dir = out.to_path_buf();
    cfg.seed = 3;
    cfg.data.stride = 128;
    cfg.schedule.pretrain_epochs = 1;
    cfg.schedule.max_rounds = 1;
    cfg.schedule.regularizer_epochs = 1;
    cfg.schedule.aae_epochs = 1;
    cfg.weights = Some(TradeoffWeights::new(1.0, 1.0, 1.0));
    cfg.baselines.resample_rates = vec![10.0];
    cfg.baselines.ssa_components = vec![1];
    cfg.evaluation.repetitions = 1;
    cfg.evaluation.dtw_pairs = 3;
    cfg.evaluation.classifier.epochs = 1;
    cfg
}

#[test]
fn cached_stages_are_reused_and_rerun_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let first = pipeline::run(&cfg, RunOptions::default()).unwrap();
    let ws = &first.workspace;
    assert_eq!(ws.dir, dir.path().join(cfg.hash().unwrap()));
    for p in [ws.series_path(), ws.training_summary_path(), ws.report_json_path(), ws.acf_path(), ws.report_table_path()] {
        assert!(p.exists(), "missing {}", p.display());
    }
    assert!(ws.dir.join("manifest.json").exists());
    assert_eq!(RunConfig::load(&ws.dir.join("config.toml")).unwrap(), cfg);

    let trained_at = fs::metadata(ws.training_summary_path()).unwrap().modified().unwrap();
    let report = first.report.unwrap();
    fs::remove_file(ws.report_json_path()).unwrap();
    let second = pipeline::run(&cfg, RunOptions::default()).unwrap();
    assert_eq!(second.report.unwrap(), report);
    assert_eq!(fs::metadata(ws.training_summary_path()).unwrap().modified().unwrap(), trained_at);

    let summary = fs::read(ws.training_summary_path()).unwrap();
    let third = pipeline::run(
        &cfg,
        RunOptions {
            rerun_from: Some(Stage::Train),
            until: None,
        },
    )
    .unwrap();
    assert_ne!(fs::metadata(ws.training_summary_path()).unwrap().modified().unwrap(), trained_at);
    assert_eq!(fs::read(ws.training_summary_path()).unwrap(), summary);
    assert_eq!(third.report.unwrap(), report);
}

#[test]
fn until_stops_after_the_requested_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = pipeline::run(
        &cfg,
        RunOptions {
            rerun_from: None,
            until: Some(Stage::Ingest),
        },
    )
    .unwrap();
    assert!(out.report.is_none());
    assert!(out.workspace.series_path().exists());
    assert!(!out.workspace.stage_dir(Stage::Train).exists());
}

#[test]
fn saved_anonymizer_transforms_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let manifest = RunManifest::new(&cfg).unwrap();
    let set = pipeline::ingest(&cfg.data).unwrap();
    let all = pipeline::windows(&set, &cfg.data).unwrap();
    let splits = pipeline::make_splits(&set, all, &cfg, manifest.seed("split")).unwrap();
    let trained = pipeline::train_stage(&cfg, &splits, manifest.seed("train")).unwrap();

    let bundle = dir.path().join("bundle");
    save_anonymizer(&trained.aae, &bundle).unwrap();
    let loaded = load_anonymizer(&bundle).unwrap();
    let a = pipeline::transform(&trained.aae, &splits.trial.test).unwrap();
    let b = pipeline::transform(&loaded, &splits.trial.test).unwrap();
    assert_eq!(a.len(), splits.trial.test.len());
    assert_eq!(a, b);
    assert!(a.iter().zip(&splits.trial.test).all(|(t, r)| t.identity == r.identity && t.offset == r.offset));

    let summary: TrainingSummary = serde_json::from_str(&serde_json::to_string(&trained.summary).unwrap()).unwrap();
    assert_eq!(summary.aae.weights, TradeoffWeights::new(1.0, 1.0, 1.0));
    assert!(summary.rep.is_some());
}

#[test]
fn invalid_config_fails_before_any_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.data.window = 64;
    assert!(matches!(pipeline::run(&cfg, RunOptions::default()), Err(motion_anon::Error::Config(_))));
    assert!(!Workspace::new(&cfg).unwrap().dir.exists());
}
