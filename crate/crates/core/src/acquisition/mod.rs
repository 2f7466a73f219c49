//! Simulated cine-MRI acquisition: slab slicing of a dense surface with a
//! short-axis stack and two long-axis planes, per-slice in-plane rigid
//! misalignment, and sparse/dense record pairs written as datasets.

mod dataset;
mod misalign;
mod plan;
mod record;

pub use dataset::{
    ensure_writable, generate_split, load_record, load_split, model_digest, read_manifest, record_digest,
    verify_split, LevelMix, Manifest, ManifestEntry, StoredRecord, MANIFEST_NAME,
};
pub use misalign::{misalign, InPlaneMotion, MisalignmentLevel, MisalignmentSigmas};
pub use plan::{slice, Plane, Slice, SliceGeometry, SliceKind, SlicePlan, SliceSet};
pub use record::{make_record, resample, DatasetRecord, RecordSpec};
