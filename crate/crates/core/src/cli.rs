//! Command surface: run configuration, checkpoints, report files and the
//! `train` / `evaluate` / `predict` / `inspect` / `sweep` commands.
//!
//! Everything here writes to caller-supplied sinks so the commands can be
//! driven in-process; the `core-kge` binary is a thin wrapper around [`run`].

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{evaluate, pattern_check, MetricsReport, PatternKind, PatternReport, HITS_AT};
use crate::geometry::NormKind;
use crate::kg_store::{build_filter_index, FilterIndex, KnowledgeGraphDataset, Split, Vocabulary};
use crate::model::{EntityParams, Model, ModelConfig, Query, RelationParams, Side};
use crate::trainer::{train, Gradients, HistoryRecord, OptimizerState, TrainConfig, TrainOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const THREADS_ENV: &str = "CORE_KGE_THREADS";
pub const LOCK_FILE: &str = ".core-kge.lock";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "lambda,mrr,hits1,hits3,hits10,mean_width";

/// Exit status for an error, by category.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Config(_) | Error::Locked(_) => EXIT_USAGE,
        Error::Parse { .. }
        | Error::Vocabulary(_)
        | Error::MissingSplit(_)
        | Error::CannotCorrupt(_)
        | Error::Checkpoint(_)
        | Error::Incompatible(_)
        | Error::Io { .. }
        | Error::Json(_) => EXIT_DATA,
        Error::NonFiniteLoss { .. } => EXIT_RUNTIME,
    }
}

// ---------------------------------------------------------------------------
// Run configuration

/// Everything a command needs. Built from defaults, then a `key = value`
/// config file, then command-line flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub split: Split,
    pub top_k: usize,
    /// `None` means the command's own default (on for evaluation, off for
    /// prediction).
    pub filtered: Option<bool>,
    pub lambdas: Vec<f64>,
    pub samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: None,
            out: None,
            checkpoint: None,
            split: Split::Test,
            top_k: 10,
            filtered: None,
            lambdas: (1..=10).map(|i| i as f64 / 10.0).collect(),
            samples: 10_000,
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "data",
    "out",
    "checkpoint",
    "dim",
    "norm",
    "torus",
    "bump",
    "seed",
    "init_width",
    "init_bump",
    "margin",
    "alpha",
    "lambda",
    "lr",
    "batch",
    "negatives",
    "max_steps",
    "valid_interval",
    "patience",
    "valid_sample",
    "split",
    "top_k",
    "filtered",
    "lambdas",
    "samples",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key} expects true or false, got '{value}'"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn nearest<'a>(name: &str, candidates: impl Iterator<Item = &'a str>, n: usize) -> Vec<&'a str> {
    let mut scored: Vec<(f64, &str)> = candidates
        .map(|c| (strsim::normalized_levenshtein(name, c), c))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(n).map(|(_, c)| c).collect()
}

impl RunConfig {
    /// Applies one `key = value` setting. Keys match the long flag names with
    /// `_` in place of `-`; `torus` and `bump` take booleans.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "data" => self.data = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "dim" => self.model.dim = parse_value(k, value)?,
            "norm" => self.model.norm = NormKind::from_str(value).map_err(|e| Error::Config(e.to_string()))?,
            "torus" => self.model.torus_enabled = parse_bool(k, value)?,
            "bump" => self.model.bump_enabled = parse_bool(k, value)?,
            "seed" => {
                let seed = parse_value(k, value)?;
                self.model.seed = seed;
                self.train.seed = seed;
            }
            "init_width" => self.model.init_width = parse_value(k, value)?,
            "init_bump" => self.model.init_bump = parse_value(k, value)?,
            "margin" => self.train.margin = parse_value(k, value)?,
            "alpha" => self.train.adversarial_temperature = parse_value(k, value)?,
            "lambda" => self.train.reg_lambda = parse_value(k, value)?,
            "lr" => self.train.learning_rate = parse_value(k, value)?,
            "batch" => self.train.batch_size = parse_value(k, value)?,
            "negatives" => self.train.negatives_per_positive = parse_value(k, value)?,
            "max_steps" => self.train.max_steps = parse_value(k, value)?,
            "valid_interval" => self.train.valid_interval = parse_value(k, value)?,
            "patience" => self.train.patience = parse_value(k, value)?,
            "valid_sample" => self.train.valid_sample = parse_value(k, value)?,
            "split" => self.split = Split::from_str(value).map_err(|e| Error::Config(e.to_string()))?,
            "top_k" => self.top_k = parse_value(k, value)?,
            "filtered" => self.filtered = Some(parse_bool(k, value)?),
            "lambdas" => self.lambdas = parse_list(k, value)?,
            "samples" => self.samples = parse_value(k, value)?,
            _ => {
                let hint = nearest(k, CONFIG_KEYS.iter().copied(), 1);
                return Err(Error::Config(format!(
                    "unknown config key '{k}' (did you mean '{}'?)",
                    hint.first().copied().unwrap_or("")
                )));
            }
        }
        Ok(())
    }

    /// Applies a flat config file: one `key = value` per line, `#` starts a
    /// comment, blank lines are ignored.
    pub fn apply_config_text(&mut self, text: &str, source: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected 'key = value', got '{line}'",
                    source.display(),
                    i + 1
                ))
            })?;
            self.set(key, value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}:{}: {m}", source.display(), i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_config_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_config_text(&text, path)
    }

    /// Bounds of the model and training configs, plus the sweep list.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if let Some(bad) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::Config(format!("sweep lambda must be >= 0, got {bad}")));
        }
        Ok(())
    }

    fn require_data(&self) -> Result<&Path> {
        let dir = self
            .data
            .as_deref()
            .ok_or_else(|| Error::Config("--data DIR is required".into()))?;
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
            ));
        }
        Ok(dir)
    }

    fn require_out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("--out DIR is required".into()))
    }

    fn require_checkpoint(&self) -> Result<&Path> {
        let path = self
            .checkpoint
            .as_deref()
            .ok_or_else(|| Error::Config("--checkpoint PATH is required".into()))?;
        if !path.is_file() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
            ));
        }
        Ok(path)
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

pub const CHECKPOINT_FORMAT: &str = "core-kge-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
const DTYPE: &str = "f64le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub dtype: String,
    /// Byte offset into the blob.
    pub offset: u64,
    /// Number of elements.
    pub len: usize,
}

/// The text half of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub step: usize,
    pub model_config: ModelConfig,
    pub num_entities: usize,
    pub num_relations: usize,
    pub dim: usize,
    /// File name of the blob, relative to the manifest.
    pub blob: String,
    pub blob_bytes: u64,
    pub arrays: Vec<ArrayEntry>,
    pub optimizer_step: Option<u64>,
    pub entities: Vec<String>,
    pub relations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Vocabulary,
    pub step: usize,
    pub optimizer: Option<OptimizerState>,
}

const ARRAY_NAMES: [&str; 6] = [
    "entity_base",
    "entity_bump",
    "head_center_raw",
    "head_width_raw",
    "tail_center_raw",
    "tail_width_raw",
];

fn blob_path(manifest_path: &Path) -> PathBuf {
    let mut name = manifest_path.file_name().map(OsString::from).unwrap_or_default();
    name.push(".bin");
    manifest_path.with_file_name(name)
}

fn params_from(arrays: [Vec<f64>; 6]) -> (EntityParams, RelationParams) {
    let [base, bump, head_center_raw, head_width_raw, tail_center_raw, tail_width_raw] = arrays;
    (
        EntityParams { base, bump },
        RelationParams {
            head_center_raw,
            head_width_raw,
            tail_center_raw,
            tail_width_raw,
        },
    )
}

impl Checkpoint {
    /// Writes `path` (the manifest) and `path.bin` (the arrays).
    pub fn save(&self, path: &Path) -> Result<()> {
        if self.vocab.num_entities() != self.model.num_entities()
            || self.vocab.num_relations() != self.model.num_relations()
        {
            return Err(Error::Checkpoint("vocabulary size does not match the model".into()));
        }
        let mut groups: Vec<(String, &[f64])> = self
            .model
            .arrays()
            .into_iter()
            .map(|(n, a)| (n.to_owned(), a))
            .collect();
        if let Some(opt) = &self.optimizer {
            for (prefix, moment) in [("adam_m", &opt.first_moment), ("adam_v", &opt.second_moment)] {
                for (n, a) in ARRAY_NAMES.iter().zip(moment.arrays()) {
                    groups.push((format!("{prefix}.{n}"), a));
                }
            }
        }

        let blob = blob_path(path);
        let file = File::create(&blob).map_err(|e| Error::io(&blob, e))?;
        let mut w = BufWriter::new(file);
        let mut arrays = Vec::with_capacity(groups.len());
        let mut offset = 0u64;
        for (name, data) in &groups {
            for v in *data {
                w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&blob, e))?;
            }
            arrays.push(ArrayEntry {
                name: name.clone(),
                dtype: DTYPE.into(),
                offset,
                len: data.len(),
            });
            offset += 8 * data.len() as u64;
        }
        w.flush().map_err(|e| Error::io(&blob, e))?;

        let manifest = Manifest {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            step: self.step,
            model_config: self.model.config.clone(),
            num_entities: self.model.num_entities(),
            num_relations: self.model.num_relations(),
            dim: self.model.dim(),
            blob: blob
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            blob_bytes: offset,
            arrays,
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            entities: self.vocab.entities().map(str::to_owned).collect(),
            relations: self.vocab.relations().map(str::to_owned).collect(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if manifest.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unrecognized format '{}'", manifest.format)));
        }
        if manifest.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (this build reads {CHECKPOINT_VERSION})",
                manifest.version
            )));
        }
        if manifest.model_config.dim != manifest.dim {
            return Err(Error::Checkpoint("dim disagrees with model config".into()));
        }
        let (ne, nr, d) = (manifest.num_entities, manifest.num_relations, manifest.dim);
        if manifest.entities.len() != ne || manifest.relations.len() != nr {
            return Err(Error::Checkpoint("vocabulary size disagrees with counts".into()));
        }

        let blob_file = path.with_file_name(&manifest.blob);
        let mut bytes = Vec::new();
        File::open(&blob_file)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&blob_file, e))?;
        if bytes.len() as u64 != manifest.blob_bytes {
            return Err(Error::Checkpoint(format!(
                "{} holds {} bytes, manifest says {}",
                blob_file.display(),
                bytes.len(),
                manifest.blob_bytes
            )));
        }

        let read = |name: &str| -> Result<Vec<f64>> {
            let entry = manifest
                .arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("array '{name}' missing")))?;
            if entry.dtype != DTYPE {
                return Err(Error::Checkpoint(format!("array '{name}' has dtype {}", entry.dtype)));
            }
            let base = name.rsplit('.').next().unwrap_or(name);
            let rows = if base.starts_with("entity") { ne } else { nr };
            if entry.len != rows * d {
                return Err(Error::Checkpoint(format!(
                    "array '{name}' has {} elements, expected {}",
                    entry.len,
                    rows * d
                )));
            }
            let start = entry.offset as usize;
            let end = start + 8 * entry.len;
            let slice = bytes
                .get(start..end)
                .ok_or_else(|| Error::Checkpoint(format!("array '{name}' runs past the blob")))?;
            Ok(slice
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect())
        };
        let read_group = |prefix: &str| -> Result<[Vec<f64>; 6]> {
            let mut out: [Vec<f64>; 6] = Default::default();
            for (slot, n) in out.iter_mut().zip(ARRAY_NAMES) {
                *slot = if prefix.is_empty() {
                    read(n)?
                } else {
                    read(&format!("{prefix}.{n}"))?
                };
            }
            Ok(out)
        };

        let (entities, relations) = params_from(read_group("")?);
        let model = Model::from_parts(manifest.model_config.clone(), entities, relations)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let optimizer = match manifest.optimizer_step {
            None => None,
            Some(step) => {
                let (me, mr) = params_from(read_group("adam_m")?);
                let (ve, vr) = params_from(read_group("adam_v")?);
                Some(OptimizerState {
                    first_moment: Gradients {
                        entities: me,
                        relations: mr,
                    },
                    second_moment: Gradients {
                        entities: ve,
                        relations: vr,
                    },
                    step,
                })
            }
        };
        let vocab = Vocabulary::from_names(&manifest.entities, &manifest.relations)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            model,
            vocab,
            step: manifest.step,
            optimizer,
        })
    }

    /// Errors unless `vocab` assigns the same ids to the same names.
    pub fn check_compatible(&self, vocab: &Vocabulary) -> Result<()> {
        for (what, ours, theirs) in [
            (
                "entities",
                self.vocab.entities().collect::<Vec<_>>(),
                vocab.entities().collect::<Vec<_>>(),
            ),
            (
                "relations",
                self.vocab.relations().collect(),
                vocab.relations().collect(),
            ),
        ] {
            if ours.len() != theirs.len() {
                return Err(Error::Incompatible(format!(
                    "checkpoint has {} {what}, dataset has {}",
                    ours.len(),
                    theirs.len()
                )));
            }
            if let Some(i) = ours.iter().zip(&theirs).position(|(a, b)| a != b) {
                return Err(Error::Incompatible(format!(
                    "{what} id {i} is '{}' in the checkpoint but '{}' in the dataset",
                    ours[i], theirs[i]
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Output directory lock

/// Advisory lock on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

// ---------------------------------------------------------------------------
// Report files

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn append_jsonl<T: Serialize>(path: &Path, record: &T) -> Result<()> {
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .and_then(|mut f| f.write_all(line.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// One line of `metrics_<split>.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub split: Split,
    pub checkpoint: PathBuf,
    pub step: usize,
    pub filtered: bool,
    pub head: crate::evaluator::DirectionMetrics,
    pub tail: crate::evaluator::DirectionMetrics,
    pub overall: crate::evaluator::DirectionMetrics,
}

pub fn metrics_file_name(split: Split) -> String {
    format!("metrics_{split}.jsonl")
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub mean_width: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.lambda, r.mrr, r.hits1, r.hits3, r.hits10, r.mean_width
        );
    }
    s
}

// ---------------------------------------------------------------------------
// Commands

fn unfiltered_index() -> FilterIndex {
    FilterIndex::from_triples(std::iter::empty())
}

fn print_metrics(out: &mut dyn Write, label: &str, report: &MetricsReport) -> std::io::Result<()> {
    write!(out, "{label}: MRR {:.4}", report.mrr())?;
    for k in HITS_AT {
        write!(out, "  Hits@{k} {:.4}", report.hits_at(k))?;
    }
    writeln!(out, "  ({} queries)", report.overall.count)
}

pub struct TrainSummary {
    pub outcome: TrainOutcome,
    pub best_path: PathBuf,
    pub final_path: PathBuf,
    pub history_path: PathBuf,
}

/// Trains on `--data`, writing `best.ckpt`, `final.ckpt` and `history.jsonl`
/// under `--out`.
pub fn cmd_train(config: &RunConfig, out: &mut dyn Write) -> Result<TrainSummary> {
    config.validate()?;
    let data = config.require_data()?;
    let out_dir = config.require_out()?;
    let dataset = KnowledgeGraphDataset::load(data)?;
    let _lock = OutputLock::acquire(out_dir)?;

    let outcome = train(&dataset, &config.model, &config.train)?;

    let history_path = out_dir.join(HISTORY_FILE);
    write_jsonl(&history_path, &outcome.history)?;
    let best_path = out_dir.join("best.ckpt");
    Checkpoint {
        model: outcome.best.clone(),
        vocab: dataset.vocab.clone(),
        step: outcome.best_step,
        optimizer: None,
    }
    .save(&best_path)?;
    let final_path = out_dir.join("final.ckpt");
    Checkpoint {
        model: outcome.last.clone(),
        vocab: dataset.vocab.clone(),
        step: outcome.steps,
        optimizer: Some(outcome.optimizer.clone()),
    }
    .save(&final_path)?;

    let io = |e| Error::io("<stdout>", e);
    writeln!(
        out,
        "trained {} steps; best step {} (valid MRR {})",
        outcome.steps,
        outcome.best_step,
        outcome
            .best_mrr
            .map(|m| format!("{m:.4}"))
            .unwrap_or_else(|| "n/a".into())
    )
    .map_err(io)?;
    writeln!(out, "wrote {}", best_path.display()).map_err(io)?;
    writeln!(out, "wrote {}", final_path.display()).map_err(io)?;
    writeln!(out, "wrote {}", history_path.display()).map_err(io)?;
    Ok(TrainSummary {
        outcome,
        best_path,
        final_path,
        history_path,
    })
}

/// Ranks every query of `--split` with the model in `--checkpoint`, prints the
/// report and appends it to `metrics_<split>.jsonl` (under `--out`, or next to
/// the checkpoint).
pub fn cmd_evaluate(config: &RunConfig, out: &mut dyn Write) -> Result<MetricsRecord> {
    let data = config.require_data()?;
    let ckpt_path = config.require_checkpoint()?;
    let dataset = KnowledgeGraphDataset::load(data)?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    ckpt.check_compatible(&dataset.vocab)?;

    let filtered = config.filtered.unwrap_or(true);
    let filter = if filtered {
        build_filter_index(&dataset)
    } else {
        unfiltered_index()
    };
    let report = evaluate(&ckpt.model, dataset.split(config.split), &filter)?;
    let io = |e| Error::io("<stdout>", e);
    let label = format!("{} ({})", config.split, if filtered { "filtered" } else { "raw" });
    print_metrics(out, &label, &report).map_err(io)?;

    let record = MetricsRecord {
        split: config.split,
        checkpoint: ckpt_path.to_path_buf(),
        step: ckpt.step,
        filtered,
        head: report.head,
        tail: report.tail,
        overall: report.overall,
    };
    let dir = match &config.out {
        Some(d) => d.clone(),
        None => ckpt_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(metrics_file_name(config.split));
    append_jsonl(&path, &record)?;
    writeln!(out, "wrote {}", path.display()).map_err(io)?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub entity: String,
    pub score: f64,
}

/// Splits `"h r ?"` / `"? r t"` on tabs when present, otherwise on whitespace.
pub fn parse_query(text: &str) -> Result<[String; 3]> {
    let parts: Vec<&str> = if text.contains('\t') {
        text.split('\t').map(str::trim).collect()
    } else {
        text.split_whitespace().collect()
    };
    match parts.as_slice() {
        [h, r, t] if (*h == "?") != (*t == "?") => Ok([h.to_string(), r.to_string(), t.to_string()]),
        _ => Err(Error::invalid(format!(
            "query must look like 'head relation ?' or '? relation tail', got '{text}'"
        ))),
    }
}

fn lookup<'a>(
    kind: &str,
    name: &str,
    id: Option<usize>,
    names: impl Iterator<Item = &'a str>,
) -> Result<usize> {
    id.ok_or_else(|| {
        Error::Vocabulary(format!(
            "unknown {kind} '{name}'; nearest: {}",
            nearest(name, names, 3).join(", ")
        ))
    })
}

fn resolve_relation(vocab: &Vocabulary, name: &str) -> Result<usize> {
    lookup("relation", name, vocab.relation_id(name), vocab.relations())
}

fn resolve_entity(vocab: &Vocabulary, name: &str) -> Result<usize> {
    lookup("entity", name, vocab.entity_id(name), vocab.entities())
}

/// Top-k completions of a query, best first. Known-true completions from the
/// dataset are dropped when filtering is on (off by default).
pub fn cmd_predict(config: &RunConfig, query: &str, out: &mut dyn Write) -> Result<Vec<Prediction>> {
    let ckpt = Checkpoint::load(config.require_checkpoint()?)?;
    let [h, r, t] = parse_query(query)?;
    let vocab = &ckpt.vocab;
    let relation = resolve_relation(vocab, &r)?;
    let q = if t == "?" {
        Query::Tail {
            head: resolve_entity(vocab, &h)?,
            relation,
        }
    } else {
        Query::Head {
            relation,
            tail: resolve_entity(vocab, &t)?,
        }
    };

    let mut masked: Vec<usize> = Vec::new();
    if config.filtered.unwrap_or(false) {
        let dataset = KnowledgeGraphDataset::load(config.require_data()?)?;
        ckpt.check_compatible(&dataset.vocab)?;
        let filter = build_filter_index(&dataset);
        masked = match q {
            Query::Tail { head, relation } => filter.true_tails(head, relation).to_vec(),
            Query::Head { relation, tail } => filter.true_heads(relation, tail).to_vec(),
        };
    }

    let scores = ckpt.model.score_all_candidates(q)?;
    let mut order: Vec<usize> = (0..scores.len())
        .filter(|e| masked.binary_search(e).is_err())
        .collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(config.top_k);

    let io = |e| Error::io("<stdout>", e);
    let mut preds = Vec::with_capacity(order.len());
    for (i, e) in order.into_iter().enumerate() {
        let name = vocab.entity_name(e).unwrap_or("?").to_owned();
        writeln!(out, "{}\t{}\t{:.6}", i + 1, name, scores[e]).map_err(io)?;
        preds.push(Prediction {
            entity: name,
            score: scores[e],
        });
    }
    Ok(preds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl WidthStats {
    pub fn of(widths: &[f64]) -> Self {
        let n = widths.len().max(1) as f64;
        Self {
            min: widths.iter().copied().fold(f64::INFINITY, f64::min),
            mean: widths.iter().sum::<f64>() / n,
            max: widths.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationSummary {
    pub relation: String,
    pub head: WidthStats,
    pub tail: WidthStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inspection {
    pub relations: Vec<RelationSummary>,
    pub pattern: Option<PatternReport>,
}

fn fmt_vec(v: &[f64], limit: usize) -> String {
    let mut s: Vec<String> = v.iter().take(limit).map(|x| format!("{x:.4}")).collect();
    if v.len() > limit {
        s.push(format!("... ({} more)", v.len() - limit));
    }
    format!("[{}]", s.join(", "))
}

/// Region statistics for the named relations (all of them when none are
/// given) and, with `pattern`, the pattern check over those relations in
/// order.
pub fn cmd_inspect(
    config: &RunConfig,
    relations: &[String],
    pattern: Option<PatternKind>,
    out: &mut dyn Write,
) -> Result<Inspection> {
    let ckpt = Checkpoint::load(config.require_checkpoint()?)?;
    let vocab = &ckpt.vocab;
    let ids: Vec<usize> = if relations.is_empty() {
        if pattern.is_some() {
            return Err(Error::invalid("a pattern check needs --relation for each argument"));
        }
        (0..vocab.num_relations()).collect()
    } else {
        relations
            .iter()
            .map(|n| resolve_relation(vocab, n))
            .collect::<Result<_>>()?
    };
    if let Some(kind) = pattern {
        if ids.len() != kind.arity() {
            return Err(Error::invalid(format!(
                "{kind} takes {} relation(s), got {}",
                kind.arity(),
                ids.len()
            )));
        }
    }

    let io = |e| Error::io("<stdout>", e);
    let mut summaries = Vec::with_capacity(ids.len());
    for &r in &ids {
        let name = vocab.relation_name(r).unwrap_or("?").to_owned();
        writeln!(out, "relation {name}").map_err(io)?;
        let mut stats = [WidthStats::of(&[]); 2];
        for (slot, side) in stats.iter_mut().zip([Side::Head, Side::Tail]) {
            let region = ckpt.model.realized_region(r, side)?;
            *slot = WidthStats::of(region.width());
            let label = if side == Side::Head { "head" } else { "tail" };
            writeln!(
                out,
                "  {label}: width min {:.6} mean {:.6} max {:.6}  center {}",
                slot.min,
                slot.mean,
                slot.max,
                fmt_vec(region.center(), 8)
            )
            .map_err(io)?;
        }
        summaries.push(RelationSummary {
            relation: name,
            head: stats[0],
            tail: stats[1],
        });
    }

    let report = match pattern {
        Some(kind) => {
            let rep = pattern_check(&ckpt.model, kind, &ids, config.samples)?;
            writeln!(out, "pattern {kind}: verdict {}", rep.verdict).map_err(io)?;
            writeln!(out, "  slack {}", fmt_vec(&rep.slack, usize::MAX)).map_err(io)?;
            writeln!(
                out,
                "  counterexamples {} of {} samples",
                rep.counterexamples, rep.samples
            )
            .map_err(io)?;
            Some(rep)
        }
        None => None,
    };
    Ok(Inspection {
        relations: summaries,
        pattern: report,
    })
}

/// Trains one model per λ with everything else fixed, evaluates the
/// best-validation model on `--split` and writes `sweep.csv` under `--out`.
/// `mean_width` is taken from the final parameters of each run.
pub fn cmd_sweep(config: &RunConfig, out: &mut dyn Write) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if config.lambdas.is_empty() {
        return Err(Error::Config("the lambda list is empty".into()));
    }
    let data = config.require_data()?;
    let out_dir = config.require_out()?;
    let dataset = KnowledgeGraphDataset::load(data)?;
    let _lock = OutputLock::acquire(out_dir)?;
    let filter = build_filter_index(&dataset);
    let io = |e| Error::io("<stdout>", e);

    let mut rows = Vec::with_capacity(config.lambdas.len());
    for &lambda in &config.lambdas {
        let tc = TrainConfig {
            reg_lambda: lambda,
            ..config.train.clone()
        };
        let outcome = train(&dataset, &config.model, &tc)?;
        let report = evaluate(&outcome.best, dataset.split(config.split), &filter)?;
        let row = SweepRow {
            lambda,
            mrr: report.mrr(),
            hits1: report.hits_at(1),
            hits3: report.hits_at(3),
            hits10: report.hits_at(10),
            mean_width: outcome.last.mean_width(),
        };
        writeln!(
            out,
            "lambda {lambda}: MRR {:.4}  Hits@1 {:.4}  mean width {:.4}",
            row.mrr, row.hits1, row.mean_width
        )
        .map_err(io)?;
        rows.push(row);
    }
    let path = out_dir.join(SWEEP_FILE);
    fs::write(&path, sweep_csv(&rows)).map_err(|e| Error::io(&path, e))?;
    writeln!(out, "wrote {}", path.display()).map_err(io)?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Argument parsing

#[derive(Debug, Parser)]
#[command(name = "core-kge", version, about = "Cyclic orthotope knowledge graph embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write checkpoints plus a history file.
    Train(CommonArgs),
    /// Filtered MRR and Hits@K of a checkpoint on one split.
    Evaluate(CommonArgs),
    /// Rank candidate entities for "h r ?" or "? r t".
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        /// The query, e.g. "alice knows ?".
        query: String,
    },
    /// Region statistics and relation-pattern checks.
    Inspect {
        #[command(flatten)]
        common: CommonArgs,
        /// Relation name; repeat for pattern checks over several relations.
        #[arg(long = "relation")]
        relations: Vec<String>,
        /// symmetry, anti-symmetry, inversion, subsumption, intersection or
        /// mutual-exclusion.
        #[arg(long)]
        pattern: Option<String>,
    },
    /// Train and evaluate once per regularization coefficient.
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    /// Margin gamma.
    #[arg(long)]
    margin: Option<f64>,
    /// Self-adversarial temperature.
    #[arg(long)]
    alpha: Option<f64>,
    /// Width regularization coefficient.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["l1", "l2", "el2"])]
    norm: Option<String>,
    #[arg(long)]
    no_torus: bool,
    #[arg(long)]
    no_bump: bool,
    #[arg(long)]
    valid_interval: Option<usize>,
    /// Validation rounds without improvement before stopping; 0 disables.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, value_parser = ["train", "valid", "test"])]
    split: Option<String>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, value_parser = clap::builder::BoolishValueParser::new())]
    filtered: Option<bool>,
    /// Comma-separated list for `sweep`.
    #[arg(long)]
    lambdas: Option<String>,
    /// Monte-Carlo sample count for pattern checks.
    #[arg(long)]
    samples: Option<usize>,
}

impl CommonArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        if let Some(path) = &self.config {
            c.apply_config_file(path)?;
        }
        let mut pairs: Vec<(&str, String)> = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k, v));
            }
        };
        let s = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        push("data", s(&self.data));
        push("out", s(&self.out));
        push("checkpoint", s(&self.checkpoint));
        push("dim", self.dim.map(|v| v.to_string()));
        push("margin", self.margin.map(|v| v.to_string()));
        push("alpha", self.alpha.map(|v| v.to_string()));
        push("lambda", self.lambda.map(|v| v.to_string()));
        push("lr", self.lr.map(|v| v.to_string()));
        push("batch", self.batch.map(|v| v.to_string()));
        push("negatives", self.negatives.map(|v| v.to_string()));
        push("max_steps", self.max_steps.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("norm", self.norm);
        push("valid_interval", self.valid_interval.map(|v| v.to_string()));
        push("patience", self.patience.map(|v| v.to_string()));
        push("split", self.split);
        push("top_k", self.top_k.map(|v| v.to_string()));
        push("filtered", self.filtered.map(|v| v.to_string()));
        push("lambdas", self.lambdas);
        push("samples", self.samples.map(|v| v.to_string()));
        for (k, v) in pairs {
            c.set(k, &v)?;
        }
        // PathBuf::display is lossy; keep the originals.
        if let Some(p) = self.data {
            c.data = Some(p);
        }
        if let Some(p) = self.out {
            c.out = Some(p);
        }
        if let Some(p) = self.checkpoint {
            c.checkpoint = Some(p);
        }
        if self.no_torus {
            c.model.torus_enabled = false;
        }
        if self.no_bump {
            c.model.bump_enabled = false;
        }
        c.validate()?;
        Ok(c)
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(&a.into_config()?, out).map(drop),
        Command::Evaluate(a) => cmd_evaluate(&a.into_config()?, out).map(drop),
        Command::Predict { common, query } => cmd_predict(&common.into_config()?, &query, out).map(drop),
        Command::Inspect {
            common,
            relations,
            pattern,
        } => {
            let kind = pattern.as_deref().map(PatternKind::from_str).transpose()?;
            cmd_inspect(&common.into_config()?, &relations, kind, out).map(drop)
        }
        Command::Sweep(a) => cmd_sweep(&a.into_config()?, out).map(drop),
    }
}

/// Parses `args` (including the program name) and runs the command. Normal
/// output goes to `out`, diagnostics to `err`; the return value is the
/// process exit status.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    let result = thread_pool().and_then(|pool| pool.install(|| dispatch(cli.command, out)));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
