//! The completion network.
//!
//! A global branch (FPS key points) and a substructure branch
//! (class-balanced key points) each encode kNN groups of the sparse input
//! with a shared-weight MLP, max-pool over neighbours, add a learned
//! positional encoding of the key point, and run a pre-norm transformer.
//! Their key points form the coarse cloud. Two refinement stages replicate
//! every point (×2, then ×8) and add predicted offsets; refined points
//! inherit their parent's label.

mod config;
mod layers;
mod network;
mod train;

pub use config::{parse_kv, ModelConfig};
pub use network::{fuse_coarse, replication_baseline, GraphOutput, HeartFormer, Keypoints, Mode, Sampled, StageOutput};
pub use train::{
    checkpoint_path, load_model, sample_gradients, validate, EpochRecord, Sample, TrainConfig, Trainer,
    BEST_CHECKPOINT, LAST_CHECKPOINT, LOSS_CSV, LOSS_CSV_HEADER,
};
