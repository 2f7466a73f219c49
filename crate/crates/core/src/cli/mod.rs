//! Command implementations behind the `heartformer` binary.
//!
//! Every command resolves its settings as built-in defaults, then the
//! `--config` file, then command-line flags, and writes `run.txt` into its
//! output directory. `run.txt` uses the config grammar (see
//! [`parse_kv`]): the resolved settings as `key = value` lines, followed by
//! `# output <path> <sha256>` comments for every artifact. Passing it back
//! as `--config` re-runs the command with identical settings.
//!
//! Keys:
//!
//! ```text
//! seed = <u64>                  base seed (generate: dataset; train: run)
//! threads = <n>                 worker threads, 0 = automatic
//! scale = desk | full           default budgets and network size
//! gen.n = <n>                   records to generate
//! gen.levels = none|mild|medium|strong|severe|uniform|w0,w1,w2,w3,w4
//! gen.model_seed = <u64>        seed of the procedural shape model
//! gen.sparse_points, gen.dense_points, gen.surface_points = <n>
//! data.train, data.val = <dataset dir>
//! resume = <checkpoint>         continue a training run
//! model.* , train.*             see ModelConfig / TrainConfig
//! checkpoint = <path>           complete / evaluate
//! input = <cloud.lpc | cloud.ply>
//! ply = true | false            complete: also write PLY
//! data = <dir>[,<dir>...]       evaluate: datasets
//! predictor = model | replicate | gt   evaluate: what is scored against GT
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::acquisition::{ensure_writable, generate_split, load_split, LevelMix, RecordSpec, StoredRecord};
use crate::diffcore::Checkpoint;
pub use crate::heartformer::parse_kv;
use crate::evalmetrics::MetricReport;
use crate::formats::lpc::{read_lpc_file, write_lpc};
use crate::formats::ply::{read_cloud_ply, read_text, write_cloud_ply};
use crate::geokernels::LabeledPointCloud;
use crate::heartformer::{load_model, replication_baseline, HeartFormer, Mode, ModelConfig, Sample, TrainConfig, Trainer};
use crate::phantom::build_default_model;
use crate::{Error, Result};

pub const RUN_MANIFEST: &str = "run.txt";
pub const DEFAULT_MODEL_SEED: u64 = 1;

/// Resolved settings of one command.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Config file (if any) overlaid with flag values.
    pub fn resolve(config_file: Option<&Path>, flags: &BTreeMap<String, String>) -> Result<Self> {
        let mut values = match config_file {
            Some(p) => parse_kv(&read_text(p)?)?,
            None => BTreeMap::new(),
        };
        for (k, v) in flags {
            values.insert(k.clone(), v.clone());
        }
        Ok(RunConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::invalid(format!("bad value {v:?} for {key}"))),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::invalid(format!("missing setting {key}")))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    fn set_default(&mut self, key: &str, value: impl ToString) {
        self.values.entry(key.to_string()).or_insert_with(|| value.to_string());
    }

    fn full_scale(&self) -> Result<bool> {
        match self.get("scale").unwrap_or("desk") {
            "desk" => Ok(false),
            "full" => Ok(true),
            other => Err(Error::invalid(format!("scale must be desk or full, got {other:?}"))),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `run.txt`: the resolved settings plus output digests. Output
/// paths are relative to `out`.
pub fn write_run_manifest(out: &Path, command: &str, config: &RunConfig, outputs: &[PathBuf]) -> Result<()> {
    let mut s = format!("# heartformer-run 1\n# command {command}\n");
    s.push_str(&config.to_text());
    for rel in outputs {
        let _ = writeln!(s, "# output {} {}", rel.display(), sha256_file(&out.join(rel))?);
    }
    let path = out.join(RUN_MANIFEST);
    fs::write(&path, s).map_err(|e| Error::io(&path, e))
}

/// `(relative path, sha256)` pairs listed in a run manifest.
pub fn manifest_outputs(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.strip_prefix("# output "))
        .filter_map(|l| l.rsplit_once(' '))
        .map(|(p, d)| (p.to_string(), d.to_string()))
        .collect()
}

pub fn configure_threads(config: &RunConfig) -> Result<()> {
    let n: usize = config.get_or("threads", 0)?;
    if n > 0 {
        // A pool may already exist (e.g. in tests); keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn record_spec(config: &RunConfig) -> Result<RecordSpec> {
    let mut spec = if config.full_scale()? { RecordSpec::full() } else { RecordSpec::desk() };
    spec.sparse_points = config.get_or("gen.sparse_points", spec.sparse_points)?;
    spec.dense_points = config.get_or("gen.dense_points", spec.dense_points)?;
    spec.surface_points = config.get_or("gen.surface_points", spec.surface_points)?;
    Ok(spec)
}

/// `generate`: a dataset split under `out`.
pub fn cmd_generate(config: &mut RunConfig, out: &Path) -> Result<()> {
    ensure_writable(out)?;
    config.set_default("seed", 0);
    config.set_default("gen.n", 10);
    config.set_default("gen.levels", "none");
    config.set_default("gen.model_seed", DEFAULT_MODEL_SEED);
    let spec = record_spec(config)?;
    config.set("gen.sparse_points", spec.sparse_points);
    config.set("gen.dense_points", spec.dense_points);
    config.set("gen.surface_points", spec.surface_points);
    let seed: u64 = config.get_or("seed", 0)?;
    let n: usize = config.get_or("gen.n", 10)?;
    let mix = LevelMix::parse(config.require("gen.levels")?)?;
    let model = build_default_model(config.get_or("gen.model_seed", DEFAULT_MODEL_SEED)?);
    let manifest = generate_split(&model, n, &mix, out, seed, &spec)?;
    let mut outputs = vec![PathBuf::from(crate::acquisition::MANIFEST_NAME)];
    for e in &manifest.entries {
        outputs.push(PathBuf::from(format!("{}.sparse.lpc", e.stem)));
        outputs.push(PathBuf::from(format!("{}.gt.lpc", e.stem)));
    }
    write_run_manifest(out, "generate", config, &outputs)
}

fn load_samples(dir: &str) -> Result<Vec<Sample>> {
    let (_, records) = load_split(Path::new(dir))?;
    Ok(records
        .into_iter()
        .map(|r| Sample {
            sparse: r.sparse,
            gt: r.dense_gt,
        })
        .collect())
}

/// Model and training settings: defaults for the scale, then `model.*` and
/// `train.*` keys. `seed` seeds both initialization and data order unless
/// `model.init_seed` / `train.seed` are given.
pub fn training_configs(config: &RunConfig) -> Result<(ModelConfig, TrainConfig)> {
    let full = config.full_scale()?;
    let mut model = if full { ModelConfig::full() } else { ModelConfig::desk() };
    let mut train = if full { TrainConfig::full() } else { TrainConfig::desk() };
    let seed: u64 = config.get_or("seed", 0)?;
    model.init_seed = seed;
    train.seed = seed;
    model.apply(&config.values)?;
    train.apply(&config.values)?;
    model.validate()?;
    train.validate()?;
    Ok((model, train))
}

/// `train`: checkpoints and a loss curve under `out`.
pub fn cmd_train(config: &mut RunConfig, out: &Path) -> Result<()> {
    ensure_writable(out)?;
    config.set_default("seed", 0);
    let train_set = load_samples(config.require("data.train")?)?;
    let val_set = load_samples(config.require("data.val")?)?;
    let mut trainer = match config.get("resume") {
        Some(path) => {
            let epochs = config.get("train.epochs").map(str::parse).transpose().map_err(|_| Error::invalid("bad train.epochs"))?;
            Trainer::resume(&Checkpoint::load(Path::new(path))?, epochs)?
        }
        None => {
            let (m, t) = training_configs(config)?;
            Trainer::new(m, t, train_set.len())?
        }
    };
    for line in trainer.model.config.to_text().lines().chain(trainer.config.to_text().lines()) {
        if let Some((k, v)) = line.split_once(" = ") {
            config.set(k, v);
        }
    }
    let result = trainer.run(&train_set, &val_set, Some(out));
    let mut outputs = vec![PathBuf::from(crate::heartformer::LOSS_CSV)];
    for name in [crate::heartformer::BEST_CHECKPOINT, crate::heartformer::LAST_CHECKPOINT] {
        if out.join(name).exists() {
            outputs.push(PathBuf::from(name));
        }
    }
    write_run_manifest(out, "train", config, &outputs)?;
    result
}

pub fn read_cloud(path: &Path) -> Result<LabeledPointCloud> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => read_cloud_ply(&read_text(path)?),
        _ => read_lpc_file(path),
    }
}

/// `complete`: the fine cloud of one input.
pub fn cmd_complete(config: &mut RunConfig, out: &Path) -> Result<()> {
    ensure_writable(out)?;
    let model = load_model(Path::new(config.require("checkpoint")?))?;
    let input = PathBuf::from(config.require("input")?);
    let ply: bool = config.get_or("ply", false)?;
    config.set("ply", ply);
    let cloud = read_cloud(&input)?;
    let fine = model.forward(&cloud, Mode::Eval)?.p_fine;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud").trim_end_matches(".sparse");
    let lpc_name = PathBuf::from(format!("{stem}.fine.lpc"));
    let path = out.join(&lpc_name);
    fs::write(&path, write_lpc(&fine)).map_err(|e| Error::io(&path, e))?;
    let mut outputs = vec![lpc_name];
    if ply {
        let ply_name = PathBuf::from(format!("{stem}.fine.ply"));
        let path = out.join(&ply_name);
        fs::write(&path, write_cloud_ply(&fine)).map_err(|e| Error::io(&path, e))?;
        outputs.push(ply_name);
    }
    write_run_manifest(out, "complete", config, &outputs)
}

/// What `evaluate` scores against the ground truth.
pub enum Predictor {
    Model(Box<HeartFormer>),
    /// Class-balanced coarse sampling replicated to the fine size.
    Replicate(ModelConfig),
    GroundTruth,
}

impl Predictor {
    pub fn predict(&self, record: &StoredRecord) -> Result<LabeledPointCloud> {
        match self {
            Predictor::Model(m) => Ok(m.forward(&record.sparse, Mode::Eval)?.p_fine),
            Predictor::Replicate(cfg) => replication_baseline(&record.sparse, cfg),
            Predictor::GroundTruth => Ok(record.dense_gt.clone()),
        }
    }
}

/// Per-record reports grouped by misalignment level, in level order.
pub fn evaluate_records(predictor: &Predictor, records: &[StoredRecord]) -> Result<Vec<(String, Vec<MetricReport>)>> {
    let reports = records
        .par_iter()
        .map(|r| MetricReport::compute(&predictor.predict(r)?, &r.dense_gt))
        .collect::<Result<Vec<_>>>()?;
    let mut by_level: BTreeMap<usize, (String, Vec<MetricReport>)> = BTreeMap::new();
    for (r, rep) in records.iter().zip(reports) {
        by_level
            .entry(r.entry.level.index())
            .or_insert_with(|| (r.entry.level.to_string(), Vec::new()))
            .1
            .push(rep);
    }
    Ok(by_level.into_values().collect())
}

/// `evaluate`: `<level>.csv` and `<level>.json` mean reports plus
/// `records.csv` with one row per record.
pub fn cmd_evaluate(config: &mut RunConfig, out: &Path) -> Result<()> {
    ensure_writable(out)?;
    config.set_default("predictor", "model");
    let predictor = match config.require("predictor")? {
        "model" => Predictor::Model(Box::new(load_model(Path::new(config.require("checkpoint")?))?)),
        "replicate" => Predictor::Replicate(training_configs(config)?.0),
        "gt" => Predictor::GroundTruth,
        other => return Err(Error::invalid(format!("unknown predictor {other:?}"))),
    };
    let mut records = Vec::new();
    for dir in config.require("data")?.split(',') {
        records.extend(load_split(Path::new(dir.trim()))?.1);
    }
    if records.is_empty() {
        return Err(Error::invalid("no records to evaluate"));
    }
    let grouped = evaluate_records(&predictor, &records)?;
    let mut outputs = Vec::new();
    let mut rows = String::from("level,index,cd_mm,hd_mm,ssd_mm,sa_cd_mm\n");
    for (level, reports) in &grouped {
        let mean = MetricReport::mean(reports).expect("non-empty group");
        for (ext, text) in [("csv", mean.to_csv()), ("json", mean.to_json())] {
            let name = PathBuf::from(format!("{level}.{ext}"));
            let path = out.join(&name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            outputs.push(name);
        }
        for (i, r) in reports.iter().enumerate() {
            let _ = writeln!(rows, "{level},{i},{:?},{:?},{:?},{:?}", r.cd_mm, r.hd_mm, r.ssd_mm, r.sa_cd_mm);
        }
    }
    let path = out.join("records.csv");
    fs::write(&path, rows).map_err(|e| Error::io(&path, e))?;
    outputs.push(PathBuf::from("records.csv"));
    write_run_manifest(out, "evaluate", config, &outputs)
}

/// Dispatches by command name.
pub fn run_command(command: &str, config: &mut RunConfig, out: &Path) -> Result<()> {
    configure_threads(config)?;
    match command {
        "generate" => cmd_generate(config, out),
        "train" => cmd_train(config, out),
        "complete" => cmd_complete(config, out),
        "evaluate" => cmd_evaluate(config, out),
        other => Err(Error::invalid(format!("unknown command {other:?}"))),
    }
}
