//! ASCII PLY with a per-vertex `label` property.

use std::fmt::Write as _;
use std::path::Path;

use crate::geokernels::LabeledPointCloud;
use crate::phantom::LabeledMesh;
use crate::{Error, Result};

/// Cloud as PLY; coordinates are written as `float` with the same rounding as
/// `LPC1`, so both formats hold identical values.
pub fn write_cloud_ply(cloud: &LabeledPointCloud) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\ncomment heartformer labeled point cloud\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property float x\nproperty float y\nproperty float z\nproperty uchar label\nend_header\n");
    for (p, l) in cloud.points().iter().zip(cloud.labels()) {
        let _ = writeln!(s, "{} {} {} {}", p[0] as f32, p[1] as f32, p[2] as f32, l);
    }
    s
}

/// Mesh as PLY with `double` coordinates (exact round trip).
pub fn write_mesh_ply(mesh: &LabeledMesh) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\ncomment heartformer labeled surface\n");
    let _ = writeln!(s, "element vertex {}", mesh.vertices.len());
    s.push_str("property double x\nproperty double y\nproperty double z\nproperty uchar label\n");
    let _ = writeln!(s, "element face {}", mesh.triangles.len());
    s.push_str("property list uchar int vertex_indices\nproperty uchar label\nend_header\n");
    for (p, l) in mesh.vertices.iter().zip(&mesh.vertex_labels) {
        let _ = writeln!(s, "{:?} {:?} {:?} {}", p[0], p[1], p[2], l);
    }
    for (t, l) in mesh.triangles.iter().zip(&mesh.triangle_labels) {
        let _ = writeln!(s, "3 {} {} {} {}", t[0], t[1], t[2], l);
    }
    s
}

struct Header {
    vertices: usize,
    faces: usize,
    /// `(type, name)` pairs of the vertex element.
    vertex_props: Vec<(String, String)>,
}

fn parse_header<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Header> {
    let err = |m: &str| Error::format("PLY", m.to_string());
    if lines.next().map(str::trim) != Some("ply") {
        return Err(err("missing 'ply' signature"));
    }
    let mut header = Header {
        vertices: 0,
        faces: 0,
        vertex_props: Vec::new(),
    };
    let mut current = "";
    for line in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(err("only ASCII PLY is supported")),
            ["comment", ..] | [] => {}
            ["element", "vertex", n] => {
                header.vertices = n.parse().map_err(|_| err("bad vertex count"))?;
                current = "vertex";
            }
            ["element", "face", n] => {
                header.faces = n.parse().map_err(|_| err("bad face count"))?;
                current = "face";
            }
            ["element", ..] => current = "other",
            ["property", "list", ..] => {}
            ["property", ty, name] => {
                if current == "vertex" {
                    header.vertex_props.push((ty.to_string(), name.to_string()));
                }
            }
            ["end_header"] => return Ok(header),
            _ => return Err(err(&format!("unexpected header line {line:?}"))),
        }
    }
    Err(err("missing end_header"))
}

fn parse_vertex(line: &str, props: &[(String, String)]) -> Result<([f64; 3], u8)> {
    let err = || Error::format("PLY", format!("bad vertex line {line:?}"));
    let vals: Vec<&str> = line.split_whitespace().collect();
    if vals.len() != props.len() {
        return Err(err());
    }
    let mut p = [0.0; 3];
    let mut label = None;
    let coord = |ty: &str, v: &str| -> Result<f64> {
        match ty {
            "float" | "float32" => v.parse::<f32>().map(f64::from).map_err(|_| err()),
            _ => v.parse::<f64>().map_err(|_| err()),
        }
    };
    for ((ty, name), v) in props.iter().zip(&vals) {
        match name.as_str() {
            "x" => p[0] = coord(ty, v)?,
            "y" => p[1] = coord(ty, v)?,
            "z" => p[2] = coord(ty, v)?,
            "label" => label = Some(v.parse().map_err(|_| err())?),
            _ => {}
        }
    }
    Ok((p, label.ok_or_else(|| Error::format("PLY", "vertex element has no label property"))?))
}

pub fn read_cloud_ply(text: &str) -> Result<LabeledPointCloud> {
    let mut lines = text.lines();
    let header = parse_header(&mut lines)?;
    let mut points = Vec::with_capacity(header.vertices);
    let mut labels = Vec::with_capacity(header.vertices);
    for _ in 0..header.vertices {
        let line = lines.next().ok_or_else(|| Error::format("PLY", "truncated vertex list"))?;
        let (p, l) = parse_vertex(line, &header.vertex_props)?;
        points.push(p);
        labels.push(l);
    }
    LabeledPointCloud::new(points, labels).map_err(|e| Error::format("PLY", e.to_string()))
}

pub fn read_mesh_ply(text: &str) -> Result<LabeledMesh> {
    let mut lines = text.lines();
    let header = parse_header(&mut lines)?;
    let mut mesh = LabeledMesh::empty();
    for _ in 0..header.vertices {
        let line = lines.next().ok_or_else(|| Error::format("PLY", "truncated vertex list"))?;
        let (p, l) = parse_vertex(line, &header.vertex_props)?;
        mesh.vertices.push(p);
        mesh.vertex_labels.push(l);
    }
    for _ in 0..header.faces {
        let line = lines.next().ok_or_else(|| Error::format("PLY", "truncated face list"))?;
        let v: Vec<u32> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::format("PLY", format!("bad face line {line:?}"))))
            .collect::<Result<_>>()?;
        if v.len() != 5 || v[0] != 3 || v[1..4].iter().any(|&i| i as usize >= mesh.vertices.len()) {
            return Err(Error::format("PLY", format!("unsupported face {line:?}")));
        }
        mesh.triangles.push([v[1], v[2], v[3]]);
        mesh.triangle_labels.push(v[4] as u8);
    }
    Ok(mesh)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_round_trip_matches_lpc() {
        let c = LabeledPointCloud::new(vec![[0.1, -2.25, 1e-3], [123.456, 7.0, -0.3]], vec![0, 4]).unwrap();
        let back = read_cloud_ply(&write_cloud_ply(&c)).unwrap();
        assert_eq!(back, crate::formats::lpc::quantize(&c));
    }

    #[test]
    fn mesh_round_trip_exact() {
        let m = LabeledMesh::uv_sphere(1.3, 4, 5, 2);
        assert_eq!(read_mesh_ply(&write_mesh_ply(&m)).unwrap(), m);
    }
}
