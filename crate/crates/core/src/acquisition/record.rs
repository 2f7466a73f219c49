use rand::seq::index;
use rand::Rng;

use super::misalign::{misalign, MisalignmentLevel};
use super::plan::{slice, SliceGeometry, SlicePlan};
use crate::geokernels::{LabeledPointCloud, NUM_CLASSES};
use crate::phantom::{densify, sample_instance_with, ShapeModel, DEFAULT_COEFF_CLIP, DEFAULT_LANDMARK_SIGMA_MM};
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// Sub-stream indices under a record seed.
pub(crate) const STREAM_INSTANCE: u64 = 1;
pub(crate) const STREAM_SURFACE: u64 = 2;
pub(crate) const STREAM_MISALIGN: u64 = 3;
pub(crate) const STREAM_RESAMPLE: u64 = 4;
pub(crate) const STREAM_DENSE: u64 = 5;
pub(crate) const STREAM_LEVEL: u64 = 6;

/// Point budgets and geometry for one record.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordSpec {
    pub sparse_points: usize,
    pub dense_points: usize,
    /// Surface sampling density fed to the slicer.
    pub surface_points: usize,
    pub geometry: SliceGeometry,
    pub coeff_clip: f64,
    pub landmark_sigma_mm: f64,
}

impl RecordSpec {
    /// Full-size budgets: 7,500 input points, 16,384 ground-truth points.
    pub fn full() -> Self {
        RecordSpec {
            sparse_points: 7500,
            dense_points: 16384,
            surface_points: 60000,
            geometry: SliceGeometry::default(),
            coeff_clip: DEFAULT_COEFF_CLIP,
            landmark_sigma_mm: DEFAULT_LANDMARK_SIGMA_MM,
        }
    }

    /// Desk-scale budgets matched to the desk network (512 in, 2,048 out).
    pub fn desk() -> Self {
        RecordSpec {
            sparse_points: 512,
            dense_points: 2048,
            surface_points: 20000,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sparse_points == 0 || self.dense_points < NUM_CLASSES || self.surface_points < NUM_CLASSES {
            return Err(Error::invalid("record point budgets too small"));
        }
        Ok(())
    }
}

impl Default for RecordSpec {
    fn default() -> Self {
        Self::desk()
    }
}

/// Sparse misaligned input paired with dense ground truth of one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub sparse: LabeledPointCloud,
    pub dense_gt: LabeledPointCloud,
    pub level: MisalignmentLevel,
    pub seed: u64,
    pub coefficients: Vec<f64>,
    /// Fewer than six classes survived slicing.
    pub degenerate: bool,
}

/// Exactly `n` points: uniform without replacement (original order kept)
/// when the source is large enough, otherwise `n` independent uniform draws.
pub fn resample<R: Rng + ?Sized>(cloud: &LabeledPointCloud, n: usize, rng: &mut R) -> Result<LabeledPointCloud> {
    let len = cloud.len();
    if len == 0 {
        return Err(Error::Degenerate("cannot resample an empty cloud".into()));
    }
    let idx: Vec<usize> = if len >= n {
        let mut v = index::sample(rng, len, n).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).map(|_| rng.gen_range(0..len)).collect()
    };
    Ok(cloud.select(&idx))
}

/// Builds one record. The instance, surface, and misalignment streams do not
/// depend on `level`, so records sharing a seed are paired across levels.
pub fn make_record(model: &ShapeModel, spec: &RecordSpec, level: MisalignmentLevel, seed: u64) -> Result<DatasetRecord> {
    spec.validate()?;
    let instance = sample_instance_with(
        model,
        derive_seed(seed, STREAM_INSTANCE),
        spec.coeff_clip,
        spec.landmark_sigma_mm,
    )?;
    let surface = densify(&instance, spec.surface_points, &mut rng_from_seed(derive_seed(seed, STREAM_SURFACE)))?;
    let plan = SlicePlan::from_landmarks(instance.apex, instance.mitral_center, &spec.geometry)?;
    let slices = slice(&surface, &plan)?;
    let moved = misalign(&slices, level.sigmas(), &mut rng_from_seed(derive_seed(seed, STREAM_MISALIGN)))?;
    let merged = moved.merged();
    let degenerate = merged.classes_present().len() < NUM_CLASSES;
    if degenerate {
        log::warn!("record {seed:#x}: only {} classes after slicing", merged.classes_present().len());
    }
    let sparse = resample(&merged, spec.sparse_points, &mut rng_from_seed(derive_seed(seed, STREAM_RESAMPLE)))?;
    let dense_gt = densify(&instance, spec.dense_points, &mut rng_from_seed(derive_seed(seed, STREAM_DENSE)))?;
    Ok(DatasetRecord {
        sparse: strip(sparse),
        dense_gt: strip(dense_gt),
        level,
        seed,
        coefficients: instance.coefficients,
        degenerate,
    })
}

fn strip(cloud: LabeledPointCloud) -> LabeledPointCloud {
    let (p, l) = cloud.into_parts();
    LabeledPointCloud::new(p, l).expect("parts of a valid cloud")
}
