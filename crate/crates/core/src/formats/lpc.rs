//! `LPC1` labeled point cloud files.
//!
//! ```text
//! magic    4 bytes  "LPC1"
//! version  u16 LE   1
//! count    u32 LE
//! count ×  { x f32 LE, y f32 LE, z f32 LE, label u8 }
//! ```
//!
//! Coordinates are stored in single precision; writing a cloud quantizes it.

use std::path::Path;

use crate::geokernels::LabeledPointCloud;
use crate::{Error, Result};

pub const LPC_MAGIC: &[u8; 4] = b"LPC1";
pub const LPC_VERSION: u16 = 1;
const HEADER: usize = 10;
const RECORD: usize = 13;

pub fn write_lpc(cloud: &LabeledPointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + RECORD * cloud.len());
    out.extend_from_slice(LPC_MAGIC);
    out.extend_from_slice(&LPC_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for (p, &l) in cloud.points().iter().zip(cloud.labels()) {
        for v in p {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.push(l);
    }
    out
}

pub fn read_lpc(bytes: &[u8]) -> Result<LabeledPointCloud> {
    if bytes.len() < HEADER || &bytes[..4] != LPC_MAGIC {
        return Err(Error::format("LPC1", "bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != LPC_VERSION {
        return Err(Error::format("LPC1", format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if bytes.len() != HEADER + n * RECORD {
        return Err(Error::format(
            "LPC1",
            format!("expected {} bytes for {n} points, found {}", HEADER + n * RECORD, bytes.len()),
        ));
    }
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes[HEADER..].chunks_exact(RECORD) {
        let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().unwrap()) as f64;
        points.push([f(0), f(4), f(8)]);
        labels.push(rec[12]);
    }
    LabeledPointCloud::new(points, labels).map_err(|e| Error::format("LPC1", e.to_string()))
}

pub fn write_lpc_file(path: &Path, cloud: &LabeledPointCloud) -> Result<()> {
    std::fs::write(path, write_lpc(cloud)).map_err(|e| Error::io(path, e))
}

pub fn read_lpc_file(path: &Path) -> Result<LabeledPointCloud> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_lpc(&bytes)
}

/// Rounds coordinates to the precision an `LPC1` file keeps.
pub fn quantize(cloud: &LabeledPointCloud) -> LabeledPointCloud {
    cloud.map_points(|p| p.map(|v| v as f32 as f64))
}
