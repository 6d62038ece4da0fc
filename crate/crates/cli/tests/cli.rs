use std::path::Path;
use std::process::{Command, Output};

fn motion_anon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motion-anon"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SMALL: &str = r#"
seed = 5

[data]
stride = 128

[schedule]
pretrain_epochs = 1
max_rounds = 1
regularizer_epochs = 1
aae_epochs = 1

[weights]
beta_i = 1.0
beta_a = 1.0
beta_d = 1.0

[baselines]
resample_rates = [10]
ssa_components = [1]

[evaluation]
repetitions = 1
dtw_pairs = 3

[evaluation.classifier]
epochs = 1
"#;

#[test]
fn unknown_config_key_exits_with_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "seed = 1\n[schedule]\nmax_round = 3\n");
    let o = motion_anon(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("max_round"), "{}", stderr(&o));
}

#[test]
fn invalid_value_and_unknown_stage_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "[data]\nstride = 0\n");
    let o = motion_anon(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = motion_anon(&["run", "--stage", "polish", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_corpus_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    write(&cfg, &format!("[data]\nroot = \"{}\"\n", dir.path().join("absent").display()));
    let o = motion_anon(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_schema_documents_every_key_and_parses() {
    let o = motion_anon(&["config-schema"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for key in ["seed", "stride", "max_rounds", "repetitions", "dtw_channel"] {
        assert!(text.contains(key), "schema lacks {key}");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("schema.toml");
    write(&path, &text);
    let o = motion_anon(&["ingest", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn synth_writes_a_loadable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let o = motion_anon(&["synth", "--out", corpus.to_str().unwrap(), "--users", "24", "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(corpus.join("data_subjects_info.csv").exists());
    assert!(corpus.join("wlk_7").join("sub_1.csv").exists());

    let cfg = dir.path().join("c.toml");
    write(&cfg, &format!("[data]\nroot = \"{}\"\n", corpus.display()));
    let o = motion_anon(&["ingest", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("of 24 users"), "{}", stdout(&o));
}

#[test]
fn run_then_transform_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    write(&cfg, SMALL);
    let out = dir.path().join("out");
    let common = ["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];

    let o = motion_anon(&[&["run"][..], &common].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    for row in ["raw", "resample10", "ssa(1)", "rep", "aae"] {
        assert!(table.contains(row), "report lacks {row}:\n{table}");
    }

    let o = motion_anon(&[&["baseline"][..], &common].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let run_dir = std::fs::read_dir(&out).unwrap().next().unwrap().unwrap().path();
    let windows = run_dir.join("baseline").join("resample10.mwin");
    assert!(windows.exists());

    let transformed = dir.path().join("t.mwin");
    let o = motion_anon(
        &[&["transform"][..], &common, &["--input", windows.to_str().unwrap(), "--output", transformed.to_str().unwrap()]].concat(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(transformed.exists());

    let o = motion_anon(&[&["report"][..], &common].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().next(), table.lines().next());
}

#[test]
fn transform_rejects_a_damaged_window_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mwin");
    write(&bad, "not a window file");
    let model = dir.path().join("model");
    std::fs::create_dir_all(&model).unwrap();
    let o = motion_anon(&[
        "transform",
        "--input",
        bad.to_str().unwrap(),
        "--output",
        dir.path().join("o.mwin").to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
