use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::{parse_kv, ModelConfig};
use super::network::{HeartFormer, Mode};
use crate::diffcore::{Checkpoint, Gradients, Graph, OptimState, WarmupCosine};
use crate::evalmetrics::{sa_cd, StageMask};
use crate::geokernels::LabeledPointCloud;
use crate::rng::{derive_seed, derived_rng};
use crate::{Error, Result};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const LOSS_CSV: &str = "loss.csv";
pub const LOSS_CSV_HEADER: &str = "epoch,lr,train_loss,val_coarse,val_mid,val_fine,best";

/// Optimization settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_epochs: u32,
    pub weight_decay: f64,
    pub seed: u64,
    pub mask: StageMask,
}

impl TrainConfig {
    /// Paper schedule: 420 epochs, batch 8, AdamW 2e-4 → 1e-5 after 20
    /// warmup epochs, weight decay 5e-4.
    pub fn full() -> Self {
        TrainConfig {
            epochs: 420,
            batch_size: 8,
            base_lr: 2e-4,
            min_lr: 1e-5,
            warmup_epochs: 20,
            weight_decay: 5e-4,
            seed: 0,
            mask: StageMask::ALL,
        }
    }

    /// Short single-CPU schedule.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 50,
            base_lr: 1e-3,
            warmup_epochs: 2,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be >= 1"));
        }
        if !(self.base_lr > 0.0 && self.min_lr >= 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::invalid("learning rates and weight decay must be non-negative"));
        }
        if self.mask.is_empty() {
            return Err(Error::invalid("stage mask selects no stage"));
        }
        Ok(())
    }

    pub fn schedule(&self, steps_per_epoch: u64) -> WarmupCosine {
        WarmupCosine {
            base_lr: self.base_lr,
            min_lr: self.min_lr,
            warmup_epochs: self.warmup_epochs,
            total_epochs: self.epochs,
            steps_per_epoch,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "train.epochs = {}", self.epochs);
        let _ = writeln!(s, "train.batch_size = {}", self.batch_size);
        let _ = writeln!(s, "train.base_lr = {:?}", self.base_lr);
        let _ = writeln!(s, "train.min_lr = {:?}", self.min_lr);
        let _ = writeln!(s, "train.warmup_epochs = {}", self.warmup_epochs);
        let _ = writeln!(s, "train.weight_decay = {:?}", self.weight_decay);
        let _ = writeln!(s, "train.seed = {}", self.seed);
        let _ = writeln!(s, "train.mask = {}", self.mask);
        s
    }

    /// Applies `train.*` keys; other keys are ignored.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::invalid(format!("bad value {v:?} for {k}")))
        }
        for (k, v) in kv {
            let Some(name) = k.strip_prefix("train.") else {
                continue;
            };
            match name {
                "epochs" => self.epochs = parse(k, v)?,
                "batch_size" => self.batch_size = parse(k, v)?,
                "base_lr" => self.base_lr = parse(k, v)?,
                "min_lr" => self.min_lr = parse(k, v)?,
                "warmup_epochs" => self.warmup_epochs = parse(k, v)?,
                "weight_decay" => self.weight_decay = parse(k, v)?,
                "seed" => self.seed = parse(k, v)?,
                "mask" => self.mask = v.parse()?,
                _ => return Err(Error::invalid(format!("unknown key {k}"))),
            }
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// One training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub sparse: LabeledPointCloud,
    pub gt: LabeledPointCloud,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    /// Learning rate at the start of the epoch.
    pub lr: f64,
    /// Mean masked loss over training batches.
    pub train_loss: f64,
    /// Mean validation SA-CD per stage (coarse, mid, fine).
    pub val: [f64; 3],
    /// Fine-stage validation improved on every earlier epoch.
    pub best: bool,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{}",
            self.epoch, self.lr, self.train_loss, self.val[0], self.val[1], self.val[2], self.best as u8
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        let err = || Error::format("loss csv", format!("bad row {line:?}"));
        if f.len() != 7 {
            return Err(err());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err());
        Ok(EpochRecord {
            epoch: f[0].parse().map_err(|_| err())?,
            lr: num(f[1])?,
            train_loss: num(f[2])?,
            val: [num(f[3])?, num(f[4])?, num(f[5])?],
            best: f[6] == "1",
        })
    }
}

/// Model, optimizer, and history of a run.
pub struct Trainer {
    pub model: HeartFormer,
    pub optim: OptimState,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
}

fn batches(n: usize, batch: usize) -> u64 {
    n.div_ceil(batch) as u64
}

/// Masked loss and parameter gradients of one sample.
pub fn sample_gradients(
    model: &HeartFormer,
    sample: &Sample,
    mode: Mode,
    mask: StageMask,
) -> Result<(f64, Gradients)> {
    let mut g = Graph::new(&model.params);
    let out = model.forward_graph(&mut g, &sample.sparse, mode)?;
    let (loss, _) = model.loss_graph(&mut g, &out, &sample.gt, mask)?;
    let value = g.value(loss).item();
    Ok((value, g.backward(loss)?))
}

/// Mean per-stage SA-CD of eval-mode predictions.
pub fn validate(model: &HeartFormer, samples: &[Sample]) -> Result<[f64; 3]> {
    if samples.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    let per: Vec<[f64; 3]> = samples
        .par_iter()
        .map(|s| {
            let out = model.forward(&s.sparse, Mode::Eval)?;
            let mut v = [0.0; 3];
            for (i, stage) in out.stages().iter().enumerate() {
                v[i] = sa_cd(stage, &s.gt)?.value;
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let mut mean = [0.0; 3];
    for v in &per {
        for i in 0..3 {
            mean[i] += v[i];
        }
    }
    Ok(mean.map(|m| m / samples.len() as f64))
}

impl Trainer {
    pub fn new(model_config: ModelConfig, config: TrainConfig, n_train: usize) -> Result<Self> {
        config.validate()?;
        let model = HeartFormer::new(model_config)?;
        let optim = OptimState::new(
            &model.params,
            config.schedule(batches(n_train, config.batch_size)),
            config.weight_decay,
        );
        Ok(Trainer {
            model,
            optim,
            config,
            history: Vec::new(),
        })
    }

    pub fn epochs_done(&self) -> u32 {
        self.history.last().map_or(0, |r| r.epoch)
    }

    pub fn best_val(&self) -> Option<f64> {
        self.history.iter().map(|r| r.val[2]).reduce(f64::min)
    }

    /// One pass over `train` in a seed-determined order. Per-sample
    /// gradients are computed in parallel and summed in batch order.
    pub fn train_epoch(&mut self, epoch: u32, train: &[Sample]) -> Result<(f64, f64)> {
        let lr = self.optim.current_lr();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut derived_rng(self.config.seed, epoch as u64));
        let mut total = 0.0;
        let mut nb = 0usize;
        for batch in order.chunks(self.config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let jitter_seed = derive_seed(derive_seed(self.config.seed, epoch as u64), 1 + i as u64);
                    sample_gradients(&self.model, &train[i], Mode::Train { jitter_seed }, self.config.mask)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = Gradients::default();
            let mut loss = 0.0;
            for (l, g) in &results {
                loss += l;
                grads.accumulate(g);
            }
            let inv = 1.0 / batch.len() as f64;
            grads.scale(inv);
            loss *= inv;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFinite { op: "training step" });
            }
            self.optim.step(&mut self.model.params, &grads)?;
            total += loss;
            nb += 1;
        }
        Ok((lr, total / nb as f64))
    }

    /// Trains up to `config.epochs`, validating after every epoch. With an
    /// output directory, writes `last.ckpt` every epoch, `best.ckpt` whenever
    /// the fine-stage validation SA-CD improves, and `loss.csv`. A non-finite
    /// loss aborts the run and leaves the last good checkpoints in place.
    pub fn run(&mut self, train: &[Sample], val: &[Sample], out_dir: Option<&Path>) -> Result<()> {
        if train.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            self.write_csv(dir)?;
        }
        for epoch in self.epochs_done() + 1..=self.config.epochs {
            let (lr, train_loss) = self.train_epoch(epoch, train)?;
            let v = validate(&self.model, val)?;
            let best = self.best_val().map_or(true, |b| v[2] < b);
            let record = EpochRecord {
                epoch,
                lr,
                train_loss,
                val: v,
                best,
            };
            log::info!("{}", record.csv_row());
            self.history.push(record);
            if let Some(dir) = out_dir {
                if best {
                    self.checkpoint().save(&dir.join(BEST_CHECKPOINT))?;
                }
                self.checkpoint().save(&dir.join(LAST_CHECKPOINT))?;
                self.write_csv(dir)?;
            }
        }
        Ok(())
    }

    fn write_csv(&self, dir: &Path) -> Result<()> {
        let path = dir.join(LOSS_CSV);
        fs::write(&path, self.loss_csv()).map_err(|e| Error::io(&path, e))
    }

    pub fn loss_csv(&self) -> String {
        let mut s = format!("{LOSS_CSV_HEADER}\n");
        for r in &self.history {
            let _ = writeln!(s, "{}", r.csv_row());
        }
        s
    }

    /// Model and optimizer state with the run configuration and history.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::capture(
            format!("{}{}", self.model.config.to_text(), self.config.to_text()),
            &self.model.params,
            Some(&self.optim),
            self.config.seed,
        );
        ck.meta.insert("epoch".into(), self.epochs_done().to_string());
        ck.meta.insert("history".into(), self.loss_csv());
        ck
    }

    /// Restores a run from a checkpoint written by [`Trainer::checkpoint`].
    /// `epochs` may extend the stored target.
    pub fn resume(ck: &Checkpoint, epochs: Option<u32>) -> Result<Self> {
        let kv = parse_kv(&ck.config)?;
        let model_config = ModelConfig::from_text(&ck.config)?;
        let mut config = TrainConfig::full();
        config.apply(&kv)?;
        if let Some(e) = epochs {
            config.epochs = e;
        }
        let mut model = HeartFormer::new(model_config)?;
        ck.restore_into(&mut model.params)?;
        let mut optim = ck
            .optimizer
            .clone()
            .ok_or_else(|| Error::format("checkpoint", "no optimizer state to resume from"))?;
        optim.schedule.total_epochs = config.epochs;
        let history = ck
            .meta
            .get("history")
            .map(|h| {
                h.lines()
                    .skip(1)
                    .map(EpochRecord::parse_csv_row)
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?
            .unwrap_or_default();
        Ok(Trainer {
            model,
            optim,
            config,
            history,
        })
    }
}

/// Loads a model for inference from any checkpoint carrying a model config.
pub fn load_model(path: &Path) -> Result<HeartFormer> {
    let ck = Checkpoint::load(path)?;
    let mut model = HeartFormer::new(ModelConfig::from_text(&ck.config)?)?;
    ck.restore_into(&mut model.params)?;
    Ok(model)
}

pub fn checkpoint_path(dir: &Path, best: bool) -> PathBuf {
    dir.join(if best { BEST_CHECKPOINT } else { LAST_CHECKPOINT })
}
