//! Shape model export: the mean surface as labeled PLY plus a text sidecar
//! holding the modes.
//!
//! Sidecar grammar (one item per line, values in shortest round-trip decimal):
//!
//! ```text
//! heartformer-ssm 1
//! vertices <V>
//! modes <M>
//! apex_vertex <index>
//! mitral_vertex <index>
//! sigma <value>            (M lines, mode order)
//! mode <m>                 (M blocks, each followed by V lines "dx dy dz")
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::model::ShapeModel;
use crate::formats::ply::{read_mesh_ply, read_text, write_mesh_ply, write_text};
use crate::{Error, Result};

const SIDECAR_SIGNATURE: &str = "heartformer-ssm 1";

pub fn write_modes(model: &ShapeModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{SIDECAR_SIGNATURE}");
    let _ = writeln!(s, "vertices {}", model.num_vertices());
    let _ = writeln!(s, "modes {}", model.num_modes());
    let _ = writeln!(s, "apex_vertex {}", model.apex_vertex);
    let _ = writeln!(s, "mitral_vertex {}", model.mitral_vertex);
    for sigma in &model.mode_sigmas {
        let _ = writeln!(s, "sigma {sigma:?}");
    }
    for (m, mode) in model.modes.iter().enumerate() {
        let _ = writeln!(s, "mode {m}");
        for d in mode.chunks_exact(3) {
            let _ = writeln!(s, "{:?} {:?} {:?}", d[0], d[1], d[2]);
        }
    }
    s
}

/// Parses a sidecar; returns `(modes, sigmas, apex_vertex, mitral_vertex)`.
pub fn read_modes(text: &str, num_vertices: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>, usize, usize)> {
    let err = |m: String| Error::format("shape model sidecar", m);
    let mut lines = text.lines();
    if lines.next() != Some(SIDECAR_SIGNATURE) {
        return Err(err("bad signature".into()));
    }
    let mut field = |key: &str| -> Result<usize> {
        let line = lines.next().ok_or_else(|| err(format!("missing {key}")))?;
        line.strip_prefix(key)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| err(format!("expected '{key} <n>', got {line:?}")))
    };
    let nv = field("vertices")?;
    let nm = field("modes")?;
    let apex = field("apex_vertex")?;
    let mitral = field("mitral_vertex")?;
    if nv != num_vertices {
        return Err(err(format!("sidecar has {nv} vertices, mesh has {num_vertices}")));
    }
    let mut sigmas = Vec::with_capacity(nm);
    for _ in 0..nm {
        let line = lines.next().ok_or_else(|| err("truncated sigmas".into()))?;
        let v = line
            .strip_prefix("sigma ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(format!("bad sigma line {line:?}")))?;
        sigmas.push(v);
    }
    let mut modes = Vec::with_capacity(nm);
    for m in 0..nm {
        if lines.next() != Some(format!("mode {m}").as_str()) {
            return Err(err(format!("missing 'mode {m}'")));
        }
        let mut mode = Vec::with_capacity(3 * nv);
        for _ in 0..nv {
            let line = lines.next().ok_or_else(|| err("truncated mode".into()))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| err(format!("bad value in {line:?}"))))
                .collect::<Result<_>>()?;
            if vals.len() != 3 {
                return Err(err(format!("expected 3 values, got {line:?}")));
            }
            mode.extend(vals);
        }
        modes.push(mode);
    }
    Ok((modes, sigmas, apex, mitral))
}

/// Writes `<stem>.ply` and `<stem>.modes` into `dir`.
pub fn export_model(model: &ShapeModel, dir: &Path, stem: &str) -> Result<()> {
    write_text(&dir.join(format!("{stem}.ply")), &write_mesh_ply(&model.mean))?;
    write_text(&dir.join(format!("{stem}.modes")), &write_modes(model))
}

pub fn import_model(dir: &Path, stem: &str) -> Result<ShapeModel> {
    let mean = read_mesh_ply(&read_text(&dir.join(format!("{stem}.ply")))?)?;
    let (modes, mode_sigmas, apex_vertex, mitral_vertex) =
        read_modes(&read_text(&dir.join(format!("{stem}.modes")))?, mean.vertices.len())?;
    Ok(ShapeModel {
        mean,
        modes,
        mode_sigmas,
        apex_vertex,
        mitral_vertex,
    })
}
