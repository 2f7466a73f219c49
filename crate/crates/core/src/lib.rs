//! Multi-class point cloud completion for cardiac anatomy.
//!
//! The crate is organized bottom-up:
//!
//! * [`diffcore`] is a small dense tensor engine with reverse-mode
//!   differentiation and an AdamW optimizer.
//! * [`geokernels`] holds the labeled point cloud type and the sampling and
//!   grouping kernels (farthest point sampling, exact kNN, class-balanced
//!   quotas).
//! * [`phantom`] is a procedural statistical shape model of six cardiac
//!   substructures.
//! * [`acquisition`] simulates short/long axis slicing with per-slice
//!   misalignment and writes datasets.
//! * [`heartformer`] is the completion network.
//! * [`evalmetrics`] has the semantic-aware Chamfer loss and the evaluation
//!   metrics.
//! * [`cli`] wires everything into the `heartformer` command.

pub mod acquisition;
pub mod cli;
pub mod diffcore;
pub mod error;
pub mod evalmetrics;
pub mod formats;
pub mod geokernels;
pub mod heartformer;
pub mod phantom;
pub mod rng;

pub use error::{Error, Result};
pub use geokernels::{LabeledPointCloud, NUM_CLASSES};
