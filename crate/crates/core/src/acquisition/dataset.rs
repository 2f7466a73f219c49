//! On-disk datasets.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.txt
//! records/00000.sparse.lpc
//! records/00000.gt.lpc
//! ...
//! ```
//!
//! `manifest.txt` starts with `#`-prefixed `key value` header lines (format
//! signature, base seed, budgets, slice geometry, model digest, level sigma
//! table) followed by one row per record:
//!
//! ```text
//! <stem> <record seed> <level> <sha256 of sparse bytes ++ gt bytes> ok|degenerate
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::misalign::MisalignmentLevel;
use super::record::{make_record, DatasetRecord, RecordSpec, STREAM_LEVEL};
use crate::formats::lpc::{read_lpc_file, write_lpc};
use crate::formats::ply::{read_text, write_text};
use crate::geokernels::LabeledPointCloud;
use crate::phantom::ShapeModel;
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.txt";
const MANIFEST_SIGNATURE: &str = "# heartformer-dataset 1";

/// How misalignment levels are assigned to records.
#[derive(Clone, Debug, PartialEq)]
pub enum LevelMix {
    Fixed(MisalignmentLevel),
    Uniform,
    /// Relative weights in level order (none → severe).
    Weighted([f64; 5]),
}

impl LevelMix {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" | "mixed" => Ok(LevelMix::Uniform),
            _ if s.contains(',') => {
                let w: Vec<f64> = s
                    .split(',')
                    .map(|t| t.trim().parse().map_err(|_| Error::invalid(format!("bad level weight {t:?}"))))
                    .collect::<Result<_>>()?;
                let w: [f64; 5] = w
                    .try_into()
                    .map_err(|_| Error::invalid("level weights need exactly five values"))?;
                if w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::invalid("level weights must be >= 0 with a positive sum"));
                }
                Ok(LevelMix::Weighted(w))
            }
            _ => Ok(LevelMix::Fixed(s.parse()?)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            LevelMix::Fixed(l) => l.to_string(),
            LevelMix::Uniform => "uniform".into(),
            LevelMix::Weighted(w) => w.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(","),
        }
    }

    /// Level for a record, drawn from its own stream.
    pub fn level_for(&self, record_seed: u64) -> MisalignmentLevel {
        let weights = match self {
            LevelMix::Fixed(l) => return *l,
            LevelMix::Uniform => [1.0; 5],
            LevelMix::Weighted(w) => *w,
        };
        let u: f64 = rng_from_seed(derive_seed(record_seed, STREAM_LEVEL)).gen::<f64>() * weights.iter().sum::<f64>();
        let mut acc = 0.0;
        for (level, w) in MisalignmentLevel::ALL.into_iter().zip(weights) {
            acc += w;
            if u < acc {
                return level;
            }
        }
        *MisalignmentLevel::ALL
            .iter()
            .rev()
            .zip(weights.iter().rev())
            .find(|(_, w)| **w > 0.0)
            .map(|(l, _)| l)
            .expect("positive weight")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub stem: String,
    pub seed: u64,
    pub level: MisalignmentLevel,
    pub digest: String,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub header: BTreeMap<String, String>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn base_seed(&self) -> Result<u64> {
        self.header_value("base_seed")
    }

    pub fn record_spec(&self) -> Result<RecordSpec> {
        let mut spec = RecordSpec::full();
        spec.sparse_points = self.header_value("sparse_points")?;
        spec.dense_points = self.header_value("dense_points")?;
        spec.surface_points = self.header_value("surface_points")?;
        spec.coeff_clip = self.header_value("coeff_clip")?;
        spec.landmark_sigma_mm = self.header_value("landmark_sigma_mm")?;
        spec.geometry.sax_count = self.header_value("sax_count")?;
        spec.geometry.sax_spacing_mm = self.header_value("sax_spacing_mm")?;
        spec.geometry.thickness_mm = self.header_value("slab_thickness_mm")?;
        spec.geometry.four_chamber_azimuth_deg = self.header_value("four_chamber_azimuth_deg")?;
        Ok(spec)
    }

    pub fn header_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.header
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format("dataset manifest", format!("missing or bad header {key:?}")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MANIFEST_SIGNATURE}");
        for (k, v) in &self.header {
            let _ = writeln!(s, "# {k} {v}");
        }
        for e in &self.entries {
            let status = if e.degenerate { "degenerate" } else { "ok" };
            let _ = writeln!(s, "{} {} {} {} {status}", e.stem, e.seed, e.level, e.digest);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |m: String| Error::format("dataset manifest", m);
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_SIGNATURE) {
            return Err(err("bad signature".into()));
        }
        let mut header = BTreeMap::new();
        let mut entries = Vec::new();
        for line in lines {
            if let Some(rest) = line.strip_prefix("# ") {
                let (k, v) = rest.split_once(' ').ok_or_else(|| err(format!("bad header {line:?}")))?;
                header.insert(k.to_string(), v.to_string());
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(err(format!("expected 5 fields, got {line:?}")));
            }
            entries.push(ManifestEntry {
                stem: f[0].to_string(),
                seed: f[1].parse().map_err(|_| err(format!("bad seed in {line:?}")))?,
                level: f[2].parse()?,
                digest: f[3].to_string(),
                degenerate: match f[4] {
                    "ok" => false,
                    "degenerate" => true,
                    other => return Err(err(format!("bad status {other:?}"))),
                },
            });
        }
        Ok(Manifest { header, entries })
    }
}

/// SHA-256 over the mean vertices, mode sigmas, and modes as little-endian f64.
pub fn model_digest(model: &ShapeModel) -> String {
    let mut h = Sha256::new();
    for v in &model.mean.vertices {
        for x in v {
            h.update(x.to_le_bytes());
        }
    }
    for s in &model.mode_sigmas {
        h.update(s.to_le_bytes());
    }
    for m in &model.modes {
        for x in m {
            h.update(x.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn record_digest(sparse_bytes: &[u8], gt_bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(sparse_bytes);
    h.update(gt_bytes);
    hex::encode(h.finalize())
}

fn stem(i: usize) -> String {
    format!("records/{i:05}")
}

fn encode(record: &DatasetRecord) -> (Vec<u8>, Vec<u8>) {
    (write_lpc(&record.sparse), write_lpc(&record.dense_gt))
}

fn header(model: &ShapeModel, n: usize, mix: &LevelMix, base_seed: u64, spec: &RecordSpec) -> BTreeMap<String, String> {
    let mut h = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        h.insert(k.to_string(), v);
    };
    put("base_seed", base_seed.to_string());
    put("n_samples", n.to_string());
    put("level_mix", mix.describe());
    put("sparse_points", spec.sparse_points.to_string());
    put("dense_points", spec.dense_points.to_string());
    put("surface_points", spec.surface_points.to_string());
    put("coeff_clip", format!("{:?}", spec.coeff_clip));
    put("landmark_sigma_mm", format!("{:?}", spec.landmark_sigma_mm));
    put("sax_count", spec.geometry.sax_count.to_string());
    put("sax_spacing_mm", format!("{:?}", spec.geometry.sax_spacing_mm));
    put("slab_thickness_mm", format!("{:?}", spec.geometry.thickness_mm));
    put("four_chamber_azimuth_deg", format!("{:?}", spec.geometry.four_chamber_azimuth_deg));
    put("model_digest", model_digest(model));
    for l in MisalignmentLevel::ALL {
        let s = l.sigmas();
        put(&format!("sigma_{l}"), format!("trans_mm={:?} rot_deg={:?}", s.trans_mm, s.rot_deg));
    }
    h
}

/// Fails early unless `dir` can be created and written.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

/// Generates `n_samples` records into `out_dir` and writes the manifest.
/// Record `i` uses seed `derive_seed(base_seed, i)`; output does not depend
/// on the worker count.
pub fn generate_split(
    model: &ShapeModel,
    n_samples: usize,
    mix: &LevelMix,
    out_dir: &Path,
    base_seed: u64,
    spec: &RecordSpec,
) -> Result<Manifest> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be >= 1"));
    }
    spec.validate()?;
    ensure_writable(out_dir)?;
    let records_dir = out_dir.join("records");
    fs::create_dir_all(&records_dir).map_err(|e| Error::io(&records_dir, e))?;
    let entries = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(base_seed, i as u64);
            let level = mix.level_for(seed);
            let record = make_record(model, spec, level, seed)?;
            let (sparse, gt) = encode(&record);
            let stem = stem(i);
            for (suffix, bytes) in [("sparse", &sparse), ("gt", &gt)] {
                let path = out_dir.join(format!("{stem}.{suffix}.lpc"));
                fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            }
            Ok(ManifestEntry {
                stem,
                seed,
                level,
                digest: record_digest(&sparse, &gt),
                degenerate: record.degenerate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        header: header(model, n_samples, mix, base_seed, spec),
        entries,
    };
    write_text(&out_dir.join(MANIFEST_NAME), &manifest.to_text())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    Manifest::parse(&read_text(&dir.join(MANIFEST_NAME))?)
}

/// Regenerates every record from the manifest's seeds and returns the stems
/// whose digests differ.
pub fn verify_split(model: &ShapeModel, manifest: &Manifest) -> Result<Vec<String>> {
    let expected: String = manifest.header_value("model_digest")?;
    if expected != model_digest(model) {
        return Err(Error::invalid("shape model differs from the one that generated the dataset"));
    }
    let spec = manifest.record_spec()?;
    let mismatched = manifest
        .entries
        .par_iter()
        .map(|e| {
            let (sparse, gt) = encode(&make_record(model, &spec, e.level, e.seed)?);
            Ok((record_digest(&sparse, &gt) != e.digest).then(|| e.stem.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mismatched.into_iter().flatten().collect())
}

/// A record as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredRecord {
    pub entry: ManifestEntry,
    pub sparse: LabeledPointCloud,
    pub dense_gt: LabeledPointCloud,
}

pub fn load_record(dir: &Path, entry: &ManifestEntry) -> Result<StoredRecord> {
    let path = |suffix: &str| -> PathBuf { dir.join(format!("{}.{suffix}.lpc", entry.stem)) };
    Ok(StoredRecord {
        entry: entry.clone(),
        sparse: read_lpc_file(&path("sparse"))?,
        dense_gt: read_lpc_file(&path("gt"))?,
    })
}

pub fn load_split(dir: &Path) -> Result<(Manifest, Vec<StoredRecord>)> {
    let manifest = read_manifest(dir)?;
    let records = manifest
        .entries
        .iter()
        .map(|e| load_record(dir, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, records))
}
