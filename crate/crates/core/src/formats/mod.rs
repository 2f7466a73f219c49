//! On-disk formats: the `LPC1` binary point cloud and ASCII PLY.

pub mod lpc;
pub mod ply;

pub use lpc::{read_lpc, read_lpc_file, write_lpc, write_lpc_file, LPC_MAGIC, LPC_VERSION};
pub use ply::{read_cloud_ply, read_mesh_ply, write_cloud_ply, write_mesh_ply};
