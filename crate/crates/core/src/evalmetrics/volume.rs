use chull::ConvexHullWrapper;

use crate::geokernels::{LabeledPointCloud, Point3};
use crate::{Error, Result};

pub const MM3_PER_ML: f64 = 1000.0;

fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &Point3, b: &Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm2(a: &Point3) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

/// Rejects sets whose affine hull is not 3-D, relative to their extent.
fn check_spans_volume(points: &[Point3]) -> Result<()> {
    if points.len() < 4 {
        return Err(Error::Degenerate(format!("{} points cannot enclose a volume", points.len())));
    }
    let p0 = points[0];
    let p1 = *points
        .iter()
        .max_by(|a, b| norm2(&sub(a, &p0)).total_cmp(&norm2(&sub(b, &p0))))
        .expect("non-empty");
    let extent = norm2(&sub(&p1, &p0)).sqrt();
    let axis = sub(&p1, &p0);
    let area = |p: &Point3| norm2(&cross(&axis, &sub(p, &p0))).sqrt();
    let p2 = *points.iter().max_by(|a, b| area(a).total_cmp(&area(b))).expect("non-empty");
    let normal = cross(&axis, &sub(&p2, &p0));
    let nn = norm2(&normal).sqrt();
    let tol = 1e-9 * extent.max(f64::MIN_POSITIVE);
    if extent == 0.0 || nn <= tol * extent {
        return Err(Error::Degenerate("points are collinear".into()));
    }
    let height = |p: &Point3| {
        let d = sub(p, &p0);
        (d[0] * normal[0] + d[1] * normal[1] + d[2] * normal[2]).abs() / nn
    };
    if points.iter().map(height).fold(0.0, f64::max) <= tol {
        return Err(Error::Degenerate("points are coplanar".into()));
    }
    Ok(())
}

/// Convex-hull volume of a point set in mm³.
pub fn hull_volume_mm3(points: &[Point3]) -> Result<f64> {
    check_spans_volume(points)?;
    let rows: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
    let hull = ConvexHullWrapper::try_new(&rows, None)
        .map_err(|e| Error::Degenerate(format!("convex hull failed: {e:?}")))?;
    // The hull's internal face order varies between runs, so the volume is
    // summed here over faces in a canonical order.
    let (verts, idx) = hull.vertices_indices();
    let vp: Vec<Point3> = verts.iter().map(|v| [v[0], v[1], v[2]]).collect();
    let mut sorted = vp.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len() as f64;
    let c = [0, 1, 2].map(|a| sorted.iter().map(|p| p[a]).sum::<f64>() / n);
    let mut faces: Vec<[Point3; 3]> = idx
        .chunks_exact(3)
        .map(|t| {
            let mut f = [vp[t[0]], vp[t[1]], vp[t[2]]];
            f.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            f
        })
        .collect();
    faces.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let six_v: f64 = faces
        .iter()
        .map(|[a, b, d]| {
            let (u, v, w) = (sub(a, &c), sub(b, &c), sub(d, &c));
            (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0]) + u[2] * (v[0] * w[1] - v[1] * w[0])).abs()
        })
        .sum();
    Ok(six_v / 6.0)
}

/// Convex-hull volume of one labeled chamber, in ml.
pub fn chamber_volume(cloud: &LabeledPointCloud, chamber: u8) -> Result<f64> {
    let pts = cloud.class_points(chamber);
    if pts.is_empty() {
        return Err(Error::EmptyClass { class: chamber });
    }
    Ok(hull_volume_mm3(&pts)? / MM3_PER_ML)
}

/// `100 · (EDV − ESV) / EDV`.
pub fn ejection_fraction(edv_ml: f64, esv_ml: f64) -> Result<f64> {
    if !(edv_ml > 0.0 && esv_ml >= 0.0 && esv_ml <= edv_ml) {
        return Err(Error::invalid(format!(
            "ejection fraction needs edv > 0 and 0 <= esv <= edv, got edv={edv_ml}, esv={esv_ml}"
        )));
    }
    Ok(100.0 * (edv_ml - esv_ml) / edv_ml)
}
