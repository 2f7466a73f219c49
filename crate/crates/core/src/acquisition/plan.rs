use crate::geokernels::{LabeledPointCloud, Point3};
use crate::{Error, Result};

pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn scaled(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn normalized(a: Point3) -> Option<Point3> {
    let n = dot(a, a).sqrt();
    (n > 0.0 && n.is_finite()).then(|| scaled(a, 1.0 / n))
}

/// Imaging slab: a plane with an in-plane orthonormal frame `(u, v)` and
/// unit `normal = u × v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub origin: Point3,
    pub normal: Point3,
    pub u: Point3,
    pub v: Point3,
    pub thickness_mm: f64,
}

impl Plane {
    /// Plane through `origin` with the given normal; `u` is the projection
    /// of the reference direction onto the plane.
    pub fn new(origin: Point3, normal: Point3, reference: Point3, thickness_mm: f64) -> Result<Self> {
        let normal = normalized(normal).ok_or_else(|| Error::invalid("plane normal has zero length"))?;
        let u = normalized(sub(reference, scaled(normal, dot(reference, normal))))
            .ok_or_else(|| Error::invalid("plane reference direction is parallel to the normal"))?;
        let v = cross(normal, u);
        if !(thickness_mm > 0.0) {
            return Err(Error::invalid(format!("slab thickness must be > 0, got {thickness_mm}")));
        }
        Ok(Plane {
            origin,
            normal,
            u,
            v,
            thickness_mm,
        })
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        dot(sub(*p, self.origin), self.normal)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        self.signed_distance(p).abs() <= self.thickness_mm / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SliceKind {
    ShortAxis(usize),
    TwoChamber,
    FourChamber,
}

/// Acquisition protocol geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceGeometry {
    pub sax_count: usize,
    pub sax_spacing_mm: f64,
    pub thickness_mm: f64,
    /// Azimuth of the four-chamber plane about the long axis, relative to the
    /// two-chamber plane.
    pub four_chamber_azimuth_deg: f64,
}

impl Default for SliceGeometry {
    fn default() -> Self {
        SliceGeometry {
            sax_count: 10,
            sax_spacing_mm: 8.0,
            thickness_mm: 6.0,
            four_chamber_azimuth_deg: 60.0,
        }
    }
}

/// Short-axis stack plus two long-axis planes.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicePlan {
    pub sax: Vec<Plane>,
    pub lax_2ch: Plane,
    pub lax_4ch: Plane,
}

impl SlicePlan {
    /// Stack normal along apex → mitral, centred on the midpoint of the long
    /// axis; long-axis planes contain that axis. The in-plane frame follows scanner x (or y when x is nearly parallel to
    /// the long axis).
    pub fn from_landmarks(apex: Point3, mitral_center: Point3, geometry: &SliceGeometry) -> Result<Self> {
        let axis = normalized(sub(mitral_center, apex))
            .ok_or_else(|| Error::Degenerate("apex and mitral centre coincide".into()))?;
        let reference = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        Self::from_landmarks_with_reference(apex, mitral_center, reference, geometry)
    }

    /// As [`SlicePlan::from_landmarks`] with an explicit in-plane reference
    /// direction, which fixes `u` of every plane and the 2CH azimuth.
    pub fn from_landmarks_with_reference(
        apex: Point3,
        mitral_center: Point3,
        reference: Point3,
        geometry: &SliceGeometry,
    ) -> Result<Self> {
        let axis = normalized(sub(mitral_center, apex))
            .ok_or_else(|| Error::Degenerate("apex and mitral centre coincide".into()))?;
        if geometry.sax_count == 0 {
            return Err(Error::invalid("short-axis stack needs at least one slice"));
        }
        let mid = scaled(add(apex, mitral_center), 0.5);
        let half = (geometry.sax_count as f64 - 1.0) / 2.0;
        let sax = (0..geometry.sax_count)
            .map(|s| {
                let along = (s as f64 - half) * geometry.sax_spacing_mm;
                Plane::new(add(mid, scaled(axis, along)), axis, reference, geometry.thickness_mm)
            })
            .collect::<Result<Vec<_>>>()?;
        let a = sax[0].u;
        let b = sax[0].v;
        let lax = |azimuth_deg: f64| -> Result<Plane> {
            let (s, c) = azimuth_deg.to_radians().sin_cos();
            let in_plane = add(scaled(a, c), scaled(b, s));
            Plane::new(mid, cross(axis, in_plane), axis, geometry.thickness_mm)
        };
        let plan = SlicePlan {
            sax,
            lax_2ch: lax(0.0)?,
            lax_4ch: lax(geometry.four_chamber_azimuth_deg)?,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.sax.first() else {
            return Err(Error::invalid("short-axis stack is empty"));
        };
        for p in self.planes() {
            if !(p.1.thickness_mm > 0.0) {
                return Err(Error::invalid("slab thickness must be > 0"));
            }
        }
        if self.sax.iter().any(|p| p.normal != first.normal) {
            return Err(Error::invalid("short-axis normals differ across the stack"));
        }
        if self.sax.len() > 2 {
            let spacing = |i: usize| dot(sub(self.sax[i + 1].origin, self.sax[i].origin), first.normal);
            let s0 = spacing(0);
            if (1..self.sax.len() - 1).any(|i| (spacing(i) - s0).abs() > 1e-9 * s0.abs().max(1.0)) {
                return Err(Error::invalid("short-axis origins are not equally spaced"));
            }
        }
        Ok(())
    }

    pub fn planes(&self) -> impl Iterator<Item = (SliceKind, &Plane)> {
        self.sax
            .iter()
            .enumerate()
            .map(|(i, p)| (SliceKind::ShortAxis(i), p))
            .chain([(SliceKind::TwoChamber, &self.lax_2ch), (SliceKind::FourChamber, &self.lax_4ch)])
    }
}

/// Points of one slab, with provenance indices into the sliced cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub kind: SliceKind,
    pub plane: Plane,
    pub cloud: LabeledPointCloud,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceSet {
    pub slices: Vec<Slice>,
    /// Set when no slab captured any point.
    pub empty_warning: bool,
}

impl SliceSet {
    pub fn total_points(&self) -> usize {
        self.slices.iter().map(|s| s.cloud.len()).sum()
    }

    /// All slice points in slice order.
    pub fn merged(&self) -> LabeledPointCloud {
        self.slices
            .iter()
            .fold(LabeledPointCloud::default(), |acc, s| acc.concat(&s.cloud))
    }
}

/// Points within `±thickness/2` of each plane, in plan order. A point may
/// belong to several slabs.
pub fn slice(surface: &LabeledPointCloud, plan: &SlicePlan) -> Result<SliceSet> {
    plan.validate()?;
    let mut slices = Vec::with_capacity(plan.sax.len() + 2);
    for (kind, plane) in plan.planes() {
        let idx: Vec<usize> = (0..surface.len()).filter(|&i| plane.contains(&surface.point(i))).collect();
        slices.push(Slice {
            kind,
            plane: *plane,
            cloud: surface.select(&idx),
        });
    }
    let empty_warning = slices.iter().all(|s| s.cloud.is_empty());
    if empty_warning {
        log::warn!("slice plan intersects no surface points");
    }
    Ok(SliceSet {
        slices,
        empty_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_geometry() {
        let plan = SlicePlan::from_landmarks([0.0; 3], [0.0, 0.0, 84.0], &SliceGeometry::default()).unwrap();
        assert_eq!(plan.sax.len(), 10);
        assert!((plan.sax[0].origin[2] - 6.0).abs() < 1e-12);
        assert!((plan.sax[9].origin[2] - 78.0).abs() < 1e-12);
        for p in [&plan.lax_2ch, &plan.lax_4ch] {
            assert!(dot(p.normal, [0.0, 0.0, 1.0]).abs() < 1e-12);
        }
        let cos = dot(plan.lax_2ch.normal, plan.lax_4ch.normal);
        assert!((cos - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_plans() {
        assert!(SlicePlan::from_landmarks([1.0; 3], [1.0; 3], &SliceGeometry::default()).is_err());
        let mut plan = SlicePlan::from_landmarks([0.0; 3], [0.0, 0.0, 84.0], &SliceGeometry::default()).unwrap();
        plan.sax[3].origin[2] += 0.5;
        assert!(plan.validate().is_err());
    }
}
