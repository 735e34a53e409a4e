//! File-level steps shared by the CLI and the examples: session files to a
//! dataset, features, training with a stratified split, evaluation, and the
//! run manifest written next to every set of outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{train_scg, MlpModel, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::eval::{evaluate, format_rate_table, split_features, EvalReport, Split, SplitRatios};
use crate::features::{extract_all, write_feature_csv, FeatureVector};
use crate::ingest::{
    merge_listeners, parse_session, segment_digits, segment_pins, write_session, ParsedSession,
    SegmentationConfig,
};
use crate::model::{validate_trace, Dataset, DatasetMode, Pin};
use crate::reference;
use crate::synth::{gen_sessions, make_pin_list, SynthConfig, SynthSession};

pub const TOOL_NAME: &str = "pinlogger";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A written file and its SHA-256 digest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    pub fn of_bytes(path: &Path, data: &[u8]) -> Self {
        let digest = Sha256::digest(data);
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        Artifact {
            path: path.display().to_string(),
            sha256,
            bytes: data.len() as u64,
        }
    }

    pub fn of_file(path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Artifact::of_bytes(path, &data))
    }
}

/// Record of one command run: enough to repeat it and check the outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(RunManifest {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(Artifact::of_file(path)?);
        Ok(())
    }

    /// Writes `manifest.json` into `dir` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Writes `data` to `path` and records it as an output.
pub fn write_output(manifest: &mut RunManifest, path: &Path, data: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, data).map_err(|e| Error::io(path, e))?;
    manifest.outputs.push(Artifact::of_bytes(path, data));
    Ok(())
}

/// `pins.json`: the target PIN list shared by the collector page, the
/// collection server and the synthetic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinListFile {
    pub seed: u64,
    pub pins: Vec<Pin>,
}

impl PinListFile {
    pub fn generate(seed: u64) -> Self {
        PinListFile {
            seed,
            pins: make_pin_list(seed),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pin list always serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PinListFile = serde_json::from_str(text)?;
        if file.pins.is_empty() {
            return Err(Error::invalid("pin list is empty"));
        }
        Ok(file)
    }
}

pub fn session_file_name(session_id: &str) -> String {
    format!("{session_id}.jsonl")
}

/// Writes each session as `<session_id>.jsonl` under `dir`.
pub fn write_sessions(manifest: &mut RunManifest, dir: &Path, sessions: &[SynthSession]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let encoded: Vec<(PathBuf, String)> = sessions
        .par_iter()
        .map(|s| {
            let path = dir.join(session_file_name(&s.meta.session_id));
            (path, write_session(&s.meta, &s.trace, &s.events))
        })
        .collect();
    let mut paths = Vec::with_capacity(encoded.len());
    for (path, text) in encoded {
        write_output(manifest, &path, text.as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}

/// Session files in `dir` (`*.jsonl`), sorted by name.
pub fn list_sessions(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "jsonl") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Parses every file, prefixing errors with the file name.
pub fn load_sessions(paths: &[PathBuf]) -> Result<Vec<ParsedSession>> {
    paths
        .par_iter()
        .map(|path| {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_session(&bytes).map_err(|e| match e {
                Error::Parse { line, message } => Error::Parse {
                    line,
                    message: format!("{}: {message}", path.display()),
                },
                other => other,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub sessions: usize,
    pub samples: usize,
    pub merged_samples: usize,
    pub events: usize,
    pub segments: usize,
    pub invalid_segments: usize,
    pub dropped_windows: usize,
}

/// Merges listener streams, validates, and segments every session.
pub fn build_dataset(
    sessions: &[ParsedSession],
    mode: DatasetMode,
    cfg: &SegmentationConfig,
) -> Result<(Dataset, IngestStats)> {
    if mode == DatasetMode::Activity3 {
        return Err(Error::invalid("activity3 datasets are not built from PIN sessions"));
    }
    let per_session: Vec<_> = sessions
        .par_iter()
        .map(|s| {
            let merged = merge_listeners(&s.trace);
            if let Some(v) = validate_trace(&merged).first() {
                return Err(Error::invalid(format!("session {}: {v}", s.meta.session_id)));
            }
            let seg = match mode {
                DatasetMode::Pin50 => segment_pins(&merged, &s.events, cfg, &s.meta.user_id)?,
                _ => segment_digits(&merged, &s.events, cfg, &s.meta.user_id)?,
            };
            Ok((s.trace.samples.len(), merged.samples.len(), s.events.len(), seg))
        })
        .collect::<Result<_>>()?;
    let mut stats = IngestStats {
        sessions: sessions.len(),
        ..IngestStats::default()
    };
    let mut segments = Vec::new();
    for (raw, merged, events, seg) in per_session {
        stats.samples += raw;
        stats.merged_samples += merged;
        stats.events += events;
        stats.dropped_windows += seg.dropped;
        segments.extend(seg.segments);
    }
    stats.segments = segments.len();
    stats.invalid_segments = segments.iter().filter(|s| !s.valid).count();
    let label_space: Vec<String> = match mode {
        DatasetMode::Digit10 => (0..10).map(|d| d.to_string()).collect(),
        _ => {
            let mut labels: Vec<String> = segments.iter().map(|s| s.label.clone()).collect();
            labels.sort();
            labels.dedup();
            labels
        }
    };
    Ok((Dataset::new(segments, label_space, mode)?, stats))
}

pub fn write_dataset(manifest: &mut RunManifest, path: &Path, dataset: &Dataset) -> Result<()> {
    let mut buf = BufWriter::new(Vec::new());
    serde_json::to_writer(&mut buf, dataset)?;
    buf.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    let data = buf.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_output(manifest, path, &data)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let dataset: Dataset = serde_json::from_slice(&bytes)?;
    dataset.check()?;
    Ok(dataset)
}

/// Feature vectors of the valid segments, in dataset order.
pub fn featurize(dataset: &Dataset) -> Result<Vec<FeatureVector>> {
    let valid: Vec<_> = dataset.valid_segments().collect();
    extract_all(valid)
}

pub fn feature_csv_bytes(rows: &[FeatureVector]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_feature_csv(&mut out, rows)?;
    Ok(out)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureVector>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    crate::features::read_feature_csv(std::io::BufReader::new(file))
}

/// Label-shuffled copy of `rows`: labels are permuted across rows, so class
/// sizes are kept while any link to the features is destroyed.
pub fn shuffle_labels(rows: &[FeatureVector], seed: u64) -> Vec<FeatureVector> {
    let mut labels: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    rows.iter()
        .zip(labels)
        .map(|(r, label)| FeatureVector { label, ..r.clone() })
        .collect()
}

/// Sorted distinct labels of `rows`, or the fixed digit labels.
pub fn label_space_for(rows: &[FeatureVector], mode: DatasetMode) -> Vec<String> {
    match mode {
        DatasetMode::Digit10 => (0..10).map(|d| d.to_string()).collect(),
        _ => {
            let mut labels: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
            labels.sort();
            labels.dedup();
            labels
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub history: TrainHistory,
    pub split: Split<FeatureVector>,
}

/// Stratified split, then SCG training on the train part with early stopping
/// on the validation part.
pub fn train_with_split(
    rows: &[FeatureVector],
    label_space: &[String],
    ratios: SplitRatios,
    split_seed: u64,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let split = split_features(rows, ratios, split_seed)?;
    let (model, history) = train_scg(&split.train, &split.val, label_space, cfg)?;
    Ok(TrainOutcome { model, history, split })
}

/// Plain-text report: the rate table, baselines and derived values.
pub fn report_text(report: &EvalReport, column: &str) -> String {
    let mut out = format_rate_table(&[(column, report)]);
    out.push('\n');
    out.push_str(&format!("test samples: {}\n", report.n_test));
    for (name, v) in &report.baselines {
        out.push_str(&format!("{name}: {v:.4}\n"));
    }
    for (name, v) in &report.derived {
        out.push_str(&format!("{name}: {v:.4}\n"));
    }
    if let Some(r) = reference::rates(report.mode, false) {
        out.push_str(&format!(
            "reference (human-subject, multiple-users): {:.2}% / {:.2}% / {:.2}%\n",
            100.0 * r[0],
            100.0 * r[1],
            100.0 * r[2]
        ));
    }
    if report.mode == DatasetMode::Digit10 {
        out.push_str(&reference::search_space_note());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub segmentation: SegmentationConfig,
    pub mode: DatasetMode,
    pub split: SplitRatios,
    pub split_seed: u64,
    pub train: TrainConfig,
    pub ks: Vec<usize>,
    /// Train and test on permuted labels (chance-level control).
    pub shuffle_labels: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            synth: SynthConfig::default(),
            segmentation: SegmentationConfig::default(),
            mode: DatasetMode::Pin50,
            split: SplitRatios::default(),
            split_seed: 0,
            train: TrainConfig {
                hidden_dim: 64,
                ..TrainConfig::default()
            },
            ks: vec![1, 2, 3],
            shuffle_labels: false,
        }
    }
}

impl PipelineConfig {
    /// Uses `seed` for generation, splitting, label shuffling and training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.synth.seed = seed;
        self.split_seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn manifest(&self, command: &str) -> Result<RunManifest> {
        Ok(RunManifest::new(command, self)?
            .seed("synth", self.synth.seed)
            .seed("split", self.split_seed)
            .seed("train", self.train.seed))
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub stats: IngestStats,
    pub features: Vec<FeatureVector>,
    pub train: TrainOutcome,
    pub report: EvalReport,
    pub manifest: RunManifest,
}

/// synth → session files → ingest → features → train → evaluate, writing
/// every intermediate under `out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<PipelineOutcome> {
    cfg.synth.check()?;
    cfg.segmentation.check()?;
    cfg.train.check()?;
    let mut manifest = cfg.manifest("pipeline")?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let sessions = gen_sessions(&cfg.synth)?;
    let paths = write_sessions(&mut manifest, &out_dir.join("sessions"), &sessions)?;
    drop(sessions);
    log::info!("wrote {} session files", paths.len());

    let parsed = load_sessions(&paths)?;
    let (dataset, stats) = build_dataset(&parsed, cfg.mode, &cfg.segmentation)?;
    drop(parsed);
    write_dataset(&mut manifest, &out_dir.join("dataset.json"), &dataset)?;
    log::info!("{} segments ({} invalid)", stats.segments, stats.invalid_segments);

    let mut features = featurize(&dataset)?;
    if cfg.shuffle_labels {
        features = shuffle_labels(&features, cfg.split_seed ^ 0x5A5A);
    }
    write_output(&mut manifest, &out_dir.join("features.csv"), &feature_csv_bytes(&features)?)?;

    let train = train_with_split(&features, &dataset.label_space, cfg.split, cfg.split_seed, &cfg.train)?;
    log::info!(
        "training stopped after {} iterations ({:?})",
        train.history.train_loss.len() - 1,
        train.history.stop_reason
    );
    write_output(&mut manifest, &out_dir.join("model.json"), train.model.to_json()?.as_bytes())?;
    let history = serde_json::to_string_pretty(&train.history)?;
    write_output(&mut manifest, &out_dir.join("history.json"), history.as_bytes())?;
    write_output(&mut manifest, &out_dir.join("test.csv"), &feature_csv_bytes(&train.split.test)?)?;

    let report = evaluate(&train.model, &train.split.test, &cfg.ks, cfg.mode)?;
    report.check_invariants(&train.split.test)?;
    write_output(&mut manifest, &out_dir.join("report.json"), report.to_json()?.as_bytes())?;
    let column = if cfg.shuffle_labels { "shuffled" } else { "synthetic" };
    write_output(&mut manifest, &out_dir.join("report.txt"), report_text(&report, column).as_bytes())?;
    manifest.write(out_dir)?;
    Ok(PipelineOutcome {
        stats,
        features,
        train,
        report,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PipelineConfig {
        let mut cfg = PipelineConfig::default().with_seed(3);
        cfg.synth.n_users = 2;
        cfg.synth.reps = 3;
        cfg.train.hidden_dim = 8;
        cfg.train.max_epochs = 30;
        cfg
    }

    #[test]
    fn pin_list_file_round_trips() {
        let file = PinListFile::generate(5);
        assert_eq!(file.pins.len(), 50);
        assert!(file.to_json().contains("\"pins\""));
        assert_eq!(PinListFile::from_json(&file.to_json()).unwrap(), file);
        assert!(PinListFile::from_json(r#"{"seed":1,"pins":["12a4"]}"#).is_err());
        assert!(PinListFile::from_json(r#"{"seed":1,"pins":[]}"#).is_err());
    }

    #[test]
    fn artifact_digest() {
        let a = Artifact::of_bytes(Path::new("x"), b"abc");
        assert_eq!(a.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(a.bytes, 3);
    }

    #[test]
    fn small_pipeline_writes_everything_listed() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_pipeline(&small(), dir.path()).unwrap();
        assert_eq!(out.stats.segments, 300);
        assert_eq!(out.features.len(), 300);
        let names: Vec<String> = out
            .manifest
            .outputs
            .iter()
            .map(|a| Path::new(&a.path).file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        for want in ["dataset.json", "features.csv", "model.json", "history.json", "report.json", "report.txt"] {
            assert!(names.iter().any(|n| n == want), "{want} missing");
        }
        for a in &out.manifest.outputs {
            assert_eq!(&Artifact::of_file(Path::new(&a.path)).unwrap(), a);
        }
        assert!(dir.path().join("manifest.json").exists());
        assert_eq!(out.report.n_test, out.train.split.test.len());
    }

    #[test]
    fn digit_mode_dataset() {
        let cfg = SynthConfig {
            n_users: 1,
            reps: 1,
            ..SynthConfig::default()
        };
        let sessions = gen_sessions(&cfg).unwrap();
        let parsed: Vec<ParsedSession> = sessions
            .iter()
            .map(|s| parse_session(write_session(&s.meta, &s.trace, &s.events).as_bytes()).unwrap())
            .collect();
        let (ds, stats) = build_dataset(&parsed, DatasetMode::Digit10, &SegmentationConfig::default()).unwrap();
        assert_eq!(stats.segments, 200);
        assert_eq!(ds.label_space.len(), 10);
        for d in 0..10 {
            assert_eq!(ds.segments.iter().filter(|s| s.label == d.to_string()).count(), 20);
        }
    }

    #[test]
    fn shuffled_labels_keep_class_sizes() {
        let rows: Vec<FeatureVector> = (0..30)
            .map(|i| FeatureVector {
                values: vec![i as f64],
                label: format!("c{}", i % 3),
                user_id: "u".into(),
            })
            .collect();
        let s = shuffle_labels(&rows, 1);
        assert_ne!(s, rows);
        for c in 0..3 {
            let l = format!("c{c}");
            assert_eq!(s.iter().filter(|r| r.label == l).count(), 10);
        }
        assert_eq!(s.iter().map(|r| r.values[0]).collect::<Vec<_>>(), rows.iter().map(|r| r.values[0]).collect::<Vec<_>>());
    }

    #[test]
    fn report_text_for_digits_includes_note() {
        let report = EvalReport {
            mode: DatasetMode::Digit10,
            n_test: 1,
            label_space: (0..10).map(|d| d.to_string()).collect(),
            top_k_rates: [(1, 0.5), (3, 0.9)].into_iter().collect(),
            confusion: vec![vec![0; 10]; 10],
            baselines: crate::eval::random_baselines(DatasetMode::Digit10),
            derived: BTreeMap::new(),
        };
        let t = report_text(&report, "digits");
        assert!(t.contains("random_pin_attempts_81: 0.0081"));
        assert!(t.contains("quoted"));
    }
}
