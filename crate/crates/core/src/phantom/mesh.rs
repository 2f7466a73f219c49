use std::f64::consts::PI;

use rand::Rng;

use crate::geokernels::{LabeledPointCloud, Point3, NUM_CLASSES};
use crate::{Error, Result};

/// Triangle surface whose vertices and faces carry substructure labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMesh {
    pub vertices: Vec<Point3>,
    pub vertex_labels: Vec<u8>,
    pub triangles: Vec<[u32; 3]>,
    pub triangle_labels: Vec<u8>,
}

/// Shape of one substructure shell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Superellipsoid {
    pub center: Point3,
    pub semi_axes: [f64; 3],
    /// Latitude and longitude exponents; `(1, 1)` is an ellipsoid.
    pub exponents: [f64; 2],
    /// Bends the shell along x as a function of y: `x += bend · y² / b`.
    pub bend: f64,
}

fn signed_pow(v: f64, e: f64) -> f64 {
    v.signum() * v.abs().powf(e)
}

impl LabeledMesh {
    pub fn empty() -> Self {
        LabeledMesh {
            vertices: Vec::new(),
            vertex_labels: Vec::new(),
            triangles: Vec::new(),
            triangle_labels: Vec::new(),
        }
    }

    /// Latitude/longitude tessellation with single-vertex poles. The south
    /// pole (vertex 0 of the shell) is at `center.z − c`, the north pole
    /// (last vertex) at `center.z + c`.
    pub fn superellipsoid(shape: &Superellipsoid, rings: usize, segments: usize, label: u8) -> Self {
        let [a, b, c] = shape.semi_axes;
        let [e_lat, e_lon] = shape.exponents;
        let mut vertices = Vec::with_capacity((rings - 1) * segments + 2);
        let place = |x: f64, y: f64, z: f64| -> Point3 {
            let x = x + shape.bend * y * y / b;
            [shape.center[0] + x, shape.center[1] + y, shape.center[2] + z]
        };
        vertices.push(place(0.0, 0.0, -c));
        for i in 1..rings {
            let eta = -PI / 2.0 + PI * i as f64 / rings as f64;
            let (se, ce) = eta.sin_cos();
            for j in 0..segments {
                let omega = -PI + 2.0 * PI * j as f64 / segments as f64;
                let (so, co) = omega.sin_cos();
                let r = signed_pow(ce, e_lat);
                vertices.push(place(a * r * signed_pow(co, e_lon), b * r * signed_pow(so, e_lon), c * signed_pow(se, e_lat)));
            }
        }
        vertices.push(place(0.0, 0.0, c));

        let ring = |i: usize, j: usize| (1 + (i - 1) * segments + j % segments) as u32;
        let south = 0u32;
        let north = (vertices.len() - 1) as u32;
        let mut triangles = Vec::with_capacity(2 * segments * (rings - 1));
        for j in 0..segments {
            triangles.push([south, ring(1, j + 1), ring(1, j)]);
        }
        for i in 1..rings - 1 {
            for j in 0..segments {
                let (p, q) = (ring(i, j), ring(i, j + 1));
                let (r, s) = (ring(i + 1, j), ring(i + 1, j + 1));
                triangles.push([p, q, s]);
                triangles.push([p, s, r]);
            }
        }
        for j in 0..segments {
            triangles.push([north, ring(rings - 1, j), ring(rings - 1, j + 1)]);
        }
        let nv = vertices.len();
        let nt = triangles.len();
        LabeledMesh {
            vertices,
            vertex_labels: vec![label; nv],
            triangles,
            triangle_labels: vec![label; nt],
        }
    }

    pub fn uv_sphere(radius: f64, rings: usize, segments: usize, label: u8) -> Self {
        Self::superellipsoid(
            &Superellipsoid {
                center: [0.0; 3],
                semi_axes: [radius; 3],
                exponents: [1.0, 1.0],
                bend: 0.0,
            },
            rings,
            segments,
            label,
        )
    }

    /// Appends another mesh; returns the vertex offset of the appended part.
    pub fn append(&mut self, other: &LabeledMesh) -> usize {
        let offset = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.vertex_labels.extend_from_slice(&other.vertex_labels);
        self.triangles.extend(
            other
                .triangles
                .iter()
                .map(|t| t.map(|v| v + offset as u32)),
        );
        self.triangle_labels.extend_from_slice(&other.triangle_labels);
        offset
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let x = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
    }

    pub fn class_areas(&self) -> [f64; NUM_CLASSES] {
        let mut areas = [0.0; NUM_CLASSES];
        for t in 0..self.triangles.len() {
            areas[self.triangle_labels[t] as usize] += self.triangle_area(t);
        }
        areas
    }

    pub fn vertex_cloud(&self) -> LabeledPointCloud {
        LabeledPointCloud::new(self.vertices.clone(), self.vertex_labels.clone()).expect("mesh labels are valid")
    }

    /// Area-weighted uniform samples over the surface.
    ///
    /// Points are allocated to classes in proportion to surface area with
    /// largest-remainder rounding and at least one point per class present;
    /// output is grouped by class.
    pub fn sample_surface<R: Rng + ?Sized>(&self, n_points: usize, rng: &mut R) -> Result<LabeledPointCloud> {
        if n_points < NUM_CLASSES {
            return Err(Error::invalid(format!(
                "densify needs at least {NUM_CLASSES} points, got {n_points}"
            )));
        }
        let areas = self.class_areas();
        let counts = allocate_by_area(&areas, n_points)?;
        let mut points = Vec::with_capacity(n_points);
        let mut labels = Vec::with_capacity(n_points);
        for class in 0..NUM_CLASSES {
            if counts[class] == 0 {
                continue;
            }
            let tris: Vec<usize> = (0..self.triangles.len())
                .filter(|&t| self.triangle_labels[t] as usize == class)
                .collect();
            let mut cumulative = Vec::with_capacity(tris.len());
            let mut acc = 0.0;
            for &t in &tris {
                acc += self.triangle_area(t);
                cumulative.push(acc);
            }
            for _ in 0..counts[class] {
                let u: f64 = rng.gen::<f64>() * acc;
                let k = cumulative.partition_point(|&c| c <= u).min(tris.len() - 1);
                let [a, b, c] = self.triangles[tris[k]].map(|i| self.vertices[i as usize]);
                let r1: f64 = rng.gen::<f64>().sqrt();
                let r2: f64 = rng.gen();
                let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
                points.push(std::array::from_fn(|d| wa * a[d] + wb * b[d] + wc * c[d]));
                labels.push(class as u8);
            }
        }
        LabeledPointCloud::new(points, labels)
    }
}

/// Largest-remainder allocation proportional to area, with at least one
/// point for every class of nonzero area.
pub fn allocate_by_area(areas: &[f64; NUM_CLASSES], n_points: usize) -> Result<[usize; NUM_CLASSES]> {
    let present: Vec<usize> = (0..NUM_CLASSES).filter(|&c| areas[c] > 0.0).collect();
    if present.is_empty() {
        return Err(Error::Degenerate("surface has zero area".into()));
    }
    if n_points < present.len() {
        return Err(Error::invalid("fewer points than classes"));
    }
    let total: f64 = areas.iter().sum();
    let mut counts = [0usize; NUM_CLASSES];
    let mut rema = Vec::new();
    let mut assigned = 0;
    for &c in &present {
        let exact = areas[c] / total * n_points as f64;
        counts[c] = exact.floor() as usize;
        assigned += counts[c];
        rema.push((exact - counts[c] as f64, c));
    }
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in rema.iter().take(n_points - assigned) {
        counts[c] += 1;
    }
    for &c in &present {
        if counts[c] == 0 {
            let donor = *present.iter().max_by(|&&a, &&b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap();
            counts[donor] -= 1;
            counts[c] = 1;
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_mesh_is_closed_and_close_to_analytic_area() {
        let m = LabeledMesh::uv_sphere(1.0, 48, 96, 0);
        let area: f64 = m.class_areas().iter().sum();
        assert!((area - 4.0 * PI).abs() / (4.0 * PI) < 2e-3, "{area}");
        // Every undirected edge is shared by exactly two triangles.
        let mut edges = std::collections::HashMap::new();
        for t in &m.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&c| c == 2));
    }

    #[test]
    fn allocation_minimum_one_per_class() {
        let areas = [100.0, 50.0, 10.0, 1.0, 0.5, 0.1];
        assert_eq!(allocate_by_area(&areas, 6).unwrap(), [1; 6]);
        let c = allocate_by_area(&areas, 1000).unwrap();
        assert_eq!(c.iter().sum::<usize>(), 1000);
    }
}
