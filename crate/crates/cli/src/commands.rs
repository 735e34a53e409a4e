use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use pinlogger::activity::{analyze, ActivityWindowConfig};
use pinlogger::classifier::{Classifier, MlpModel, TrainConfig};
use pinlogger::eval::{evaluate, survey_correlation, LikertTable, SplitRatios};
use pinlogger::ingest::{parse_session, SegmentationConfig};
use pinlogger::model::DatasetMode;
use pinlogger::pipeline::{
    build_dataset, feature_csv_bytes, featurize, label_space_for, list_sessions, load_sessions,
    read_dataset, read_features, report_text, run_pipeline, train_with_split, write_dataset,
    write_output, write_sessions, PinListFile, PipelineConfig, RunManifest,
};
use pinlogger::synth::{gen_activity_trace, gen_sessions, SynthConfig};
use pinlogger_collect::ServerConfig;

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<pinlogger::Error> for Failure {
    fn from(e: pinlogger::Error) -> Self {
        if e.is_validation() {
            Failure::invalid(e.to_string())
        } else {
            Failure::runtime(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "pinlogger", version, about = "Motion-sensor PIN inference toolkit")]
pub struct Cli {
    /// JSON file with the command's settings; flags given on the command line
    /// take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic PIN-entry sessions.
    Synth(SynthArgs),
    /// Parse session files and cut labelled segments.
    Ingest(IngestArgs),
    /// Extract the 114 features from every valid segment.
    Featurize(FeaturizeArgs),
    /// Split features and train the network.
    Train(TrainArgs),
    /// Top-k identification rates of a trained model.
    Eval(EvalArgs),
    /// Call events and sitting/walking/running labels for one trace.
    Activity(ActivityArgs),
    /// Spearman correlation of sensor knowledge and concern rankings.
    Survey(SurveyArgs),
    /// Run the collection server.
    Serve(ServeArgs),
    /// synth, ingest, featurize, train and eval in one run.
    Pipeline(PipelineArgs),
}

pub fn run(cli: Cli) -> CmdResult {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Synth(a) => synth(a, config),
        Command::Ingest(a) => ingest(a, config),
        Command::Featurize(a) => featurize_cmd(a, config),
        Command::Train(a) => train(a, config),
        Command::Eval(a) => eval(a, config),
        Command::Activity(a) => activity(a, config),
        Command::Survey(a) => survey(a, config),
        Command::Serve(a) => serve(a, config),
        Command::Pipeline(a) => pipeline(a, config),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))
}

fn finish(manifest: &RunManifest, dir: &Path) -> CmdResult {
    let path = manifest.write(dir)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn parse_mode(s: &str) -> Result<DatasetMode, String> {
    s.parse().map_err(|e: pinlogger::Error| e.to_string())
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "out/synth")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    sample_rate: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    error_rate: Option<f64>,
}

fn synth(a: SynthArgs, config: Option<&Path>) -> CmdResult {
    let mut cfg: SynthConfig = load_config(config)?;
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.n_users = a.users.unwrap_or(cfg.n_users);
    cfg.reps = a.reps.unwrap_or(cfg.reps);
    cfg.sample_rate_hz = a.sample_rate.unwrap_or(cfg.sample_rate_hz);
    cfg.noise_sigma = a.noise.unwrap_or(cfg.noise_sigma);
    cfg.error_rate = a.error_rate.unwrap_or(cfg.error_rate);
    cfg.check()?;

    out_dir(&a.out)?;
    let mut manifest = RunManifest::new("synth", &cfg)?.seed("synth", cfg.seed);
    let sessions = gen_sessions(&cfg)?;
    let paths = write_sessions(&mut manifest, &a.out.join("sessions"), &sessions)?;
    let pins = PinListFile {
        seed: cfg.seed,
        pins: cfg.pin_list(),
    };
    write_output(&mut manifest, &a.out.join("pins.json"), pins.to_json().as_bytes())?;
    println!("{} sessions written to {}", paths.len(), a.out.join("sessions").display());
    finish(&manifest, &a.out)
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
struct IngestConfig {
    mode: Option<DatasetMode>,
    segmentation: SegmentationConfig,
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of `*.jsonl` session files.
    #[arg(long)]
    sessions: PathBuf,
    #[arg(long, default_value = "out/ingest")]
    out: PathBuf,
    /// pin50 or digit10.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<DatasetMode>,
}

fn ingest(a: IngestArgs, config: Option<&Path>) -> CmdResult {
    let mut cfg: IngestConfig = load_config(config)?;
    let mode = a.mode.or(cfg.mode).unwrap_or(DatasetMode::Pin50);
    cfg.mode = Some(mode);
    cfg.segmentation.check()?;

    out_dir(&a.out)?;
    let mut manifest = RunManifest::new("ingest", &cfg)?;
    let paths = list_sessions(&a.sessions)?;
    if paths.is_empty() {
        return Err(Failure::invalid(format!("no session files in {}", a.sessions.display())));
    }
    for p in &paths {
        manifest.input(p)?;
    }
    let parsed = load_sessions(&paths)?;
    let (dataset, stats) = build_dataset(&parsed, mode, &cfg.segmentation)?;
    write_dataset(&mut manifest, &a.out.join("dataset.json"), &dataset)?;
    let stats_json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    write_output(&mut manifest, &a.out.join("ingest_stats.json"), stats_json.as_bytes())?;
    println!(
        "{} sessions, {} segments ({} invalid, {} windows dropped)",
        stats.sessions, stats.segments, stats.invalid_segments, stats.dropped_windows
    );
    finish(&manifest, &a.out)
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "out/features")]
    out: PathBuf,
}

fn featurize_cmd(a: FeaturizeArgs, config: Option<&Path>) -> CmdResult {
    let cfg: serde_json::Value = match config {
        Some(_) => load_config(config)?,
        None => serde_json::json!({}),
    };
    out_dir(&a.out)?;
    let mut manifest = RunManifest::new("featurize", &cfg)?;
    manifest.input(&a.dataset)?;
    let dataset = read_dataset(&a.dataset)?;
    let rows = featurize(&dataset)?;
    write_output(&mut manifest, &a.out.join("features.csv"), &feature_csv_bytes(&rows)?)?;
    println!("{} feature vectors", rows.len());
    finish(&manifest, &a.out)
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct TrainCmdConfig {
    mode: DatasetMode,
    split: SplitRatios,
    split_seed: u64,
    train: TrainConfig,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        TrainCmdConfig {
            mode: p.mode,
            split: p.split,
            split_seed: p.split_seed,
            train: p.train,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "out/train")]
    out: PathBuf,
    /// Seeds both the split and the weight initialisation.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<DatasetMode>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
}

fn train(a: TrainArgs, config: Option<&Path>) -> CmdResult {
    let mut cfg: TrainCmdConfig = load_config(config)?;
    if let Some(s) = a.seed {
        cfg.split_seed = s;
        cfg.train.seed = s;
    }
    cfg.mode = a.mode.unwrap_or(cfg.mode);
    cfg.train.hidden_dim = a.hidden.unwrap_or(cfg.train.hidden_dim);
    cfg.train.max_epochs = a.max_epochs.unwrap_or(cfg.train.max_epochs);
    cfg.train.check()?;

    out_dir(&a.out)?;
    let mut manifest = RunManifest::new("train", &cfg)?
        .seed("split", cfg.split_seed)
        .seed("train", cfg.train.seed);
    manifest.input(&a.features)?;
    let rows = read_features(&a.features)?;
    let labels = label_space_for(&rows, cfg.mode);
    let outcome = train_with_split(&rows, &labels, cfg.split, cfg.split_seed, &cfg.train)?;
    write_output(&mut manifest, &a.out.join("model.json"), outcome.model.to_json()?.as_bytes())?;
    let history = serde_json::to_string_pretty(&outcome.history).expect("history serializes");
    write_output(&mut manifest, &a.out.join("history.json"), history.as_bytes())?;
    for (name, part) in [("train.csv", &outcome.split.train), ("val.csv", &outcome.split.val), ("test.csv", &outcome.split.test)] {
        write_output(&mut manifest, &a.out.join(name), &feature_csv_bytes(part)?)?;
    }
    println!(
        "trained {} -> {} -> {} in {} iterations ({:?}); split {}/{}/{}",
        outcome.model.dims.input,
        outcome.model.dims.hidden,
        outcome.model.dims.output,
        outcome.history.train_loss.len() - 1,
        outcome.history.stop_reason,
        outcome.split.train.len(),
        outcome.split.val.len(),
        outcome.split.test.len()
    );
    finish(&manifest, &a.out)
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct EvalConfig {
    mode: DatasetMode,
    ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: DatasetMode::Pin50,
            ks: vec![1, 2, 3],
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV to score, usually the `test.csv` written by `train`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "out/eval")]
    out: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<DatasetMode>,
    /// Comma-separated attempt counts.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
}

fn eval(a: EvalArgs, config: Option<&Path>) -> CmdResult {
    let mut cfg: EvalConfig = load_config(config)?;
    cfg.mode = a.mode.unwrap_or(cfg.mode);
    cfg.ks = a.ks.unwrap_or(cfg.ks);

    out_dir(&a.out)?;
    let mut manifest = RunManifest::new("eval", &cfg)?;
    manifest.input(&a.model)?;
    manifest.input(&a.features)?;
    let text = fs::read_to_string(&a.model).map_err(|e| Failure::runtime(format!("{}: {e}", a.model.display())))?;
    let model = MlpModel::from_json(&text)?;
    if model.label_space().len() != cfg.mode.label_count() {
        return Err(Failure::invalid(format!(
            "model has {} classes but mode {} needs {}",
            model.label_space().len(),
            cfg.mode,
            cfg.mode.label_count()
        )));
    }
    let rows = read_features(&a.features)?;
    let report = evaluate(&model, &rows, &cfg.ks, cfg.mode)?;
    report.check_invariants(&rows)?;
    write_output(&mut manifest, &a.out.join("report.json"), report.to_json()?.as_bytes())?;
    let text = report_text(&report, "model");
    write_output(&mut manifest, &a.out.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    finish(&manifest, &a.out)
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
struct ActivityConfig {
    window: ActivityWindowConfig,
    synth: SynthConfig,
    /// Synthetic script used when no session file is given.
    script: Vec<(String, f64)>,
}

#[derive(Args)]
struct ActivityArgs {
    /// Session file to analyse.
    #[arg(long, conflicts_with = "script")]
    session: Option<PathBuf>,
    /// Synthetic script instead of a session, e.g. `sitting:10,call_event:12,walking:20`.
    #[arg(long)]
    script: Option<String>,
    #[arg(long, default_value = "out/activity")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_script(s: &str) -> Result<Vec<(String, f64)>, Failure> {
    s.split(',')
        .map(|part| {
            let (name, secs) = part
                .split_once(':')
                .ok_or_else(|| Failure::invalid(format!("script entry {part:?} is not activity:seconds")))?;
            let secs: f64 = secs
                .trim()
                .parse()
                .map_err(|_| Failure::invalid(format!("bad duration in {part:?}")))?;
            Ok((name.trim().to_string(), secs))
        })
        .collect()
}

fn activity(a: ActivityArgs, config: Option<&Path>) -> CmdResult {
    let mut cfg: ActivityConfig = load_config(config)?;
    cfg.synth.seed = a.seed.unwrap_or(cfg.synth.seed);
    if let Some(s) = &a.script {
        cfg.script = parse_script(s)?;
    }
    cfg.window.check()?;

    out_dir(&a.out)?;
    let mut manifest = RunManifest::new("activity", &cfg)?;
    let (trace, truth) = match &a.session {
        Some(path) => {
            manifest.input(path)?;
            let bytes = fs::read(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
            (parse_session(&bytes)?.trace, None)
        }
        None => {
            if cfg.script.is_empty() {
                return Err(Failure::invalid("give --session, --script or a script in the config"));
            }
            manifest = manifest.seed("synth", cfg.synth.seed);
            let (trace, truth) = gen_activity_trace(&cfg.synth, &cfg.script)?;
            (trace, Some(truth))
        }
    };
    let report = analyze(&trace, &cfg.window)?;
    let mut doc = serde_json::to_value(&report).expect("report serializes");
    if let Some(truth) = truth {
        doc["truth"] = serde_json::to_value(truth).expect("truth serializes");
    }
    let text = serde_json::to_string_pretty(&doc).expect("report serializes");
    write_output(&mut manifest, &a.out.join("activity.json"), text.as_bytes())?;
    for e in &report.events {
        println!("call event {:.2} s - {:.2} s", e.start_s, e.end_s);
    }
    let mut counts = std::collections::BTreeMap::new();
    for w in &report.windows {
        *counts.entry(w.label.name()).or_insert(0usize) += 1;
    }
    println!("{} windows: {counts:?}", report.windows.len());
    finish(&manifest, &a.out)
}

#[derive(Args)]
struct SurveyArgs {
    /// Likert CSV for "how well do you know this sensor".
    #[arg(long)]
    knowledge: PathBuf,
    /// Likert CSV for "how concerned are you about this sensor".
    #[arg(long)]
    concern: PathBuf,
    #[arg(long, default_value = "out/survey")]
    out: PathBuf,
}

fn read_likert(path: &Path) -> Result<LikertTable, Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    LikertTable::from_csv(file).map_err(|e| {
        let f = Failure::from(e);
        Failure {
            message: format!("{}: {}", path.display(), f.message),
            ..f
        }
    })
}

fn survey(a: SurveyArgs, config: Option<&Path>) -> CmdResult {
    let cfg: serde_json::Value = match config {
        Some(_) => load_config(config)?,
        None => serde_json::json!({}),
    };
    out_dir(&a.out)?;
    let mut manifest = RunManifest::new("survey", &cfg)?;
    manifest.input(&a.knowledge)?;
    manifest.input(&a.concern)?;
    let result = survey_correlation(&read_likert(&a.knowledge)?, &read_likert(&a.concern)?)?;
    let json = serde_json::to_string_pretty(&result).expect("survey serializes");
    write_output(&mut manifest, &a.out.join("survey.json"), json.as_bytes())?;
    let table = result.to_table();
    write_output(&mut manifest, &a.out.join("survey.txt"), table.as_bytes())?;
    print!("{table}");
    finish(&manifest, &a.out)
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "PINLOGGER_BIND")]
    bind: Option<std::net::SocketAddr>,
    #[arg(long, env = "PINLOGGER_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Origin allowed by CORS; `*` for any.
    #[arg(long, env = "PINLOGGER_ORIGIN")]
    origin: Option<String>,
    /// Seed of the PIN list served to the collector.
    #[arg(long)]
    seed: Option<u64>,
}

fn serve(a: ServeArgs, config: Option<&Path>) -> CmdResult {
    let mut cfg: ServerConfig = load_config(config)?;
    cfg.bind = a.bind.unwrap_or(cfg.bind);
    cfg.data_dir = a.data_dir.unwrap_or(cfg.data_dir);
    cfg.allowed_origin = a.origin.unwrap_or(cfg.allowed_origin);
    cfg.pin_seed = a.seed.unwrap_or(cfg.pin_seed);

    out_dir(&cfg.data_dir)?;
    let manifest = RunManifest::new("serve", &cfg)?.seed("pins", cfg.pin_seed);
    finish(&manifest, &cfg.data_dir)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::runtime(e.to_string()))?;
    runtime.block_on(pinlogger_collect::serve(cfg)).map_err(|e| match e {
        pinlogger_collect::ServeError::Config(m) => Failure::invalid(m),
        other => Failure::runtime(other.to_string()),
    })
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, default_value = "out/pipeline")]
    out: PathBuf,
    /// Seeds generation, splitting and training.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<DatasetMode>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Train on permuted labels (chance-level control).
    #[arg(long)]
    shuffle_labels: bool,
}

fn pipeline(a: PipelineArgs, config: Option<&Path>) -> CmdResult {
    let mut cfg: PipelineConfig = load_config(config)?;
    if let Some(s) = a.seed {
        cfg = cfg.with_seed(s);
    }
    cfg.mode = a.mode.unwrap_or(cfg.mode);
    cfg.synth.n_users = a.users.unwrap_or(cfg.synth.n_users);
    cfg.synth.reps = a.reps.unwrap_or(cfg.synth.reps);
    cfg.train.hidden_dim = a.hidden.unwrap_or(cfg.train.hidden_dim);
    cfg.shuffle_labels |= a.shuffle_labels;

    let outcome = run_pipeline(&cfg, &a.out)?;
    let column = if cfg.shuffle_labels { "shuffled" } else { "synthetic" };
    print!("{}", report_text(&outcome.report, column));
    println!("outputs in {}", a.out.display());
    Ok(())
}
