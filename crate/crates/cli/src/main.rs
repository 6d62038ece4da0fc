//! `motion-anon`: staged anonymization experiments from a TOML run config.
//!
//! Exit codes: 0 success, 2 configuration error, 3 stage failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use motion_anon::baselines::Baseline;
use motion_anon::pipeline::{
    self, load_anonymizer, load_windows, save_windows, RunConfig, RunOptions, Stage, TrainingSummary, Workspace,
};
use motion_anon::synth::{self, SynthConfig};
use motion_anon::Error;

#[derive(Parser)]
#[command(name = "motion-anon", version, about = "Anonymizing autoencoder experiments on motion-sensor data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Recompute this stage and every later one (ingest, train, evaluate, report).
    #[arg(long)]
    stage: Option<String>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load (or generate) the corpus and cache magnitude trials.
    Ingest(Common),
    /// Train the anonymizer (and the RepOnly ablation).
    Train(Common),
    /// Apply the trained anonymizer to an MWIN window file.
    Transform {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Model-set directory; defaults to the run's trained `aae`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write baseline-transformed Trial-split test windows as MWIN files.
    Baseline(Common),
    /// Train and score the evaluation classifiers and DTW ranks.
    Evaluate(Common),
    /// Render the report table (running missing stages first).
    Report(Common),
    /// Run the trade-off sweep and print every grid point.
    Sweep(Common),
    /// All stages end to end.
    Run(Common),
    /// Print the default configuration with every key documented.
    ConfigSchema,
    /// Write a synthetic corpus in the MotionSense directory layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthConfig::default().users)]
        users: usize,
        #[arg(long, default_value_t = SynthConfig::default().seed)]
        seed: u64,
    },
}

/// Failure class, mapped to the process exit code.
enum Failure {
    Config(anyhow::Error),
    Stage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Config(_) | Error::InvalidSpec(_)) => Failure::Config(e),
            _ => Failure::Stage(e),
        }
    }
}

fn config_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn load_config(c: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).map_err(config_error)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

fn options(c: &Common, until: Option<Stage>) -> Result<RunOptions, Failure> {
    let rerun_from = match &c.stage {
        Some(name) => Some(
            Stage::from_name(name).ok_or_else(|| config_error(anyhow!("unknown stage `{name}`")))?,
        ),
        None => None,
    };
    Ok(RunOptions { rerun_from, until })
}

fn run_until(c: &Common, until: Option<Stage>) -> Result<pipeline::RunOutcome, Failure> {
    let cfg = load_config(c)?;
    let opts = options(c, until)?;
    Ok(pipeline::run(&cfg, opts).map_err(anyhow::Error::from)?)
}

fn print_summary(path: &Path) -> anyhow::Result<()> {
    let s: TrainingSummary = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    println!(
        "pretrain validation mse {:.5} -> {:.5}",
        s.pretrain.initial_validation_mse, s.pretrain.final_validation_mse
    );
    for p in &s.sweep {
        println!(
            "sweep beta_i={} beta_a={} beta_d={}: act F1 {:.3}, id acc {:.3}, score {:.3} ({:?})",
            p.weights.beta_i,
            p.weights.beta_a,
            p.weights.beta_d,
            p.best.activity_f1,
            p.best.identity_accuracy(),
            p.best.score(),
            p.stop
        );
    }
    for (name, a) in [("aae", Some(&s.aae)), ("rep", s.rep.as_ref())] {
        let Some(a) = a else { continue };
        let b = &a.history[a.best_round];
        println!(
            "{name}: weights {:?}, round {} of {} ({:?}), act F1 {:.3}, id acc enc {:.3} dec {:.3}, mse {:.4}",
            (a.weights.beta_i, a.weights.beta_a, a.weights.beta_d),
            a.best_round,
            a.history.len(),
            a.stop,
            b.activity_f1,
            b.identity_accuracy_enc,
            b.identity_accuracy_dec,
            b.mse
        );
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Ingest(c) => {
            let out = run_until(&c, Some(Stage::Ingest))?;
            let set = motion_anon::pipeline::series_from_bytes(
                &std::fs::read(out.workspace.series_path()).map_err(anyhow::Error::from)?,
            )
            .map_err(anyhow::Error::from)?;
            println!(
                "{} trials of {} users cached at {}",
                set.series.len(),
                set.num_users,
                out.workspace.series_path().display()
            );
        }
        Command::Train(c) => {
            let out = run_until(&c, Some(Stage::Train))?;
            print_summary(&out.workspace.training_summary_path())?;
        }
        Command::Sweep(c) => {
            let mut cfg = load_config(&c)?;
            cfg.weights = None;
            let out = pipeline::run(&cfg, options(&c, Some(Stage::Train))?).map_err(anyhow::Error::from)?;
            print_summary(&out.workspace.training_summary_path())?;
        }
        Command::Transform { common, input, output, model } => {
            let cfg = load_config(&common)?;
            let dir = match model {
                Some(m) => m,
                None => Workspace::new(&cfg).map_err(anyhow::Error::from)?.anonymizer_dir("aae"),
            };
            let a = load_anonymizer(&dir).with_context(|| format!("loading model set from {}", dir.display()))?;
            let windows = load_windows(&input).with_context(|| format!("reading {}", input.display()))?;
            let out = pipeline::transform(&a, &windows).map_err(anyhow::Error::from)?;
            save_windows(&out, &output).map_err(anyhow::Error::from)?;
            println!("{} windows written to {}", out.len(), output.display());
        }
        Command::Baseline(c) => {
            let cfg = load_config(&c)?;
            let outcome = pipeline::run(&cfg, options(&c, Some(Stage::Ingest))?).map_err(anyhow::Error::from)?;
            let set = pipeline::series_from_bytes(
                &std::fs::read(outcome.workspace.series_path()).map_err(anyhow::Error::from)?,
            )
            .map_err(anyhow::Error::from)?;
            let all = pipeline::windows(&set, &cfg.data).map_err(anyhow::Error::from)?;
            let splits = pipeline::make_splits(&set, all, &cfg, outcome.manifest.seed("split"))
                .map_err(anyhow::Error::from)?;
            let dir = outcome.workspace.dir.join("baseline");
            std::fs::create_dir_all(&dir).map_err(anyhow::Error::from)?;
            let kinds: Vec<Baseline> = cfg.baselines.baselines();
            for b in kinds {
                let view = pipeline::baseline_view(&b, cfg.baselines.granularity, &set, &splits, &cfg.data, false)
                    .map_err(anyhow::Error::from)?;
                let path = dir.join(format!("{}.mwin", view.label));
                save_windows(&view.trial_test, &path).map_err(anyhow::Error::from)?;
                println!("{}: {} windows -> {}", view.label, view.trial_test.len(), path.display());
            }
        }
        Command::Evaluate(c) => {
            let out = run_until(&c, Some(Stage::Evaluate))?;
            if let Some(r) = out.report {
                print!("{}", r.render_table());
            }
        }
        Command::Report(c) | Command::Run(c) => {
            let out = run_until(&c, None)?;
            if let Some(r) = out.report {
                print!("{}", r.render_table());
            }
            println!("artifacts: {}", out.workspace.dir.display());
        }
        Command::ConfigSchema => {
            print!("{}", pipeline::config_schema().map_err(anyhow::Error::from)?);
        }
        Command::Synth { out, users, seed } => {
            let cfg = SynthConfig { users, seed, ..SynthConfig::default() };
            synth::write_corpus(&out, &cfg).map_err(anyhow::Error::from)?;
            println!("synthetic corpus with {users} users written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
